//! Edge-centric network of one layer. Edges act as fictitious vertices whose
//! two context groups are the previous-layer states of their source (group 0)
//! and destination (group 1) vertices.
//!
//! Unlike the vertex component there is no empty-context case: every edge has
//! both endpoints, and the first layer feeds uniform endpoint posteriors in.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    emission_m_step, Emission, SpPrior, SuffStats, TransitionTensor,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::vertex::argmax;

/// Group index of the source endpoint.
pub const GROUP_SRC: usize = 0;
/// Group index of the destination endpoint.
pub const GROUP_DST: usize = 1;

/// Parameters of one edge layer, shared by every edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLayerParams {
    /// Emission over edge features, `edge_states` rows.
    pub emission: Emission,
    /// `2 × edge_states × vertex_states` tensor; group 0 conditions on the
    /// source state, group 1 on the destination state.
    pub transition: TransitionTensor,
    /// Prior over the two endpoint groups.
    pub sp: SpPrior,
}

impl EdgeLayerParams {
    pub fn edge_states(&self) -> usize {
        self.transition.n_states()
    }

    pub fn vertex_states(&self) -> usize {
        self.transition.n_source_states()
    }

    pub fn init(
        emission: Emission,
        vertex_states: usize,
        eps: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let c = emission.n_states();
        EdgeLayerParams {
            emission,
            transition: TransitionTensor::init(2, c, vertex_states, eps, rng),
            sp: SpPrior::init(2, eps, rng),
        }
    }

    pub fn validate(&self, var_floor: f64) -> Result<()> {
        if self.emission.n_states() != self.edge_states()
            || self.transition.n_groups() != 2
            || self.sp.n_groups() != 2
        {
            return Err(Error::Shape("inconsistent edge layer shapes".into()));
        }
        self.emission.validate(var_floor)?;
        self.transition.validate()?;
        self.sp.validate()
    }
}

/// Prior over edge states:
/// `P(Q_uv=i) = sp[0]·Σ_j T[0,i,j]·q_u(j) + sp[1]·Σ_j T[1,i,j]·q_v(j)`.
pub fn edge_prior(
    params: &EdgeLayerParams,
    q_u: ArrayView1<f64>,
    q_v: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let c_v = params.vertex_states();
    if q_u.len() != c_v || q_v.len() != c_v {
        return Err(Error::Shape(format!(
            "endpoint posterior length {}/{} != vertex states {c_v}",
            q_u.len(),
            q_v.len()
        )));
    }
    let c = params.edge_states();
    let mut out = Array1::zeros(c);
    for i in 0..c {
        let mut src = 0.0;
        let mut dst = 0.0;
        for j in 0..c_v {
            src += params.transition.probs[(GROUP_SRC, i, j)] * q_u[j];
            dst += params.transition.probs[(GROUP_DST, i, j)] * q_v[j];
        }
        out[i] = params.sp.weights[GROUP_SRC] * src + params.sp.weights[GROUP_DST] * dst;
    }
    Ok(out)
}

struct EdgeUnitPass {
    posterior: Array1<f64>,
    log_likelihood: f64,
    em_scaled: Array1<f64>,
    z: f64,
}

fn edge_unit_pass(
    g: &Graph,
    params: &EdgeLayerParams,
    prev_vertex_posteriors: ArrayView2<f64>,
    e: usize,
) -> Result<EdgeUnitPass> {
    let c = params.edge_states();
    let (u, v) = g.edges[e];
    let mut log_em = vec![0.0; c];
    params.emission.log_density_into(g.edge_feature(e), &mut log_em);
    let m = log_em.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Numeric(format!(
            "edge {e}: non-finite emission density"
        )));
    }
    let em_scaled = Array1::from_iter(log_em.iter().map(|&le| (le - m).exp()));
    let prior = edge_prior(
        params,
        prev_vertex_posteriors.row(u as usize),
        prev_vertex_posteriors.row(v as usize),
    )?;
    let weighted = &em_scaled * &prior;
    let z = weighted.sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Numeric(format!(
            "edge {e}: degenerate posterior normalizer {z}"
        )));
    }
    let posterior = weighted / z;
    Ok(EdgeUnitPass {
        posterior,
        log_likelihood: m + z.ln(),
        em_scaled,
        z,
    })
}

/// One E-step pass over the edges of a graph, against the previous layer's
/// vertex posteriors (uniform rows at the first layer).
pub fn edge_e_step(
    g: &Graph,
    params: &EdgeLayerParams,
    prev_vertex_posteriors: ArrayView2<f64>,
) -> Result<(SuffStats, f64, Array2<f64>)> {
    let c = params.edge_states();
    let c_v = params.vertex_states();
    if prev_vertex_posteriors.nrows() != g.n_vertices {
        return Err(Error::Shape(format!(
            "vertex posterior rows {} != n_vertices {}",
            prev_vertex_posteriors.nrows(),
            g.n_vertices
        )));
    }
    let mut stats = SuffStats::for_emission(&params.emission, 2, c_v);
    let mut posteriors = Array2::zeros((g.n_edges(), c));
    let mut ll = 0.0;
    for e in 0..g.n_edges() {
        let pass = edge_unit_pass(g, params, prev_vertex_posteriors, e)?;
        ll += pass.log_likelihood;
        stats.add_observation(g.edge_feature(e), pass.posterior.view());
        let (u, v) = g.edges[e];
        for a in 0..2 {
            let q = prev_vertex_posteriors.row(if a == GROUP_SRC { u } else { v } as usize);
            let w = params.sp.weights[a];
            let mut group_total = 0.0;
            for i in 0..c {
                let em_i = pass.em_scaled[i];
                if em_i == 0.0 {
                    continue;
                }
                for j in 0..c_v {
                    let r = em_i * w * params.transition.probs[(a, i, j)] * q[j] / pass.z;
                    stats.transition[(a, i, j)] += r;
                    group_total += r;
                }
            }
            stats.sp[a] += group_total;
        }
        posteriors.row_mut(e).assign(&pass.posterior);
    }
    stats.log_likelihood = ll;
    Ok((stats, ll, posteriors))
}

/// Materialized `r[i, a, j]` responsibility tensors, one per edge.
pub fn edge_responsibilities(
    g: &Graph,
    params: &EdgeLayerParams,
    prev_vertex_posteriors: ArrayView2<f64>,
) -> Result<Vec<Array3<f64>>> {
    let c = params.edge_states();
    let c_v = params.vertex_states();
    let mut out = Vec::with_capacity(g.n_edges());
    for e in 0..g.n_edges() {
        let pass = edge_unit_pass(g, params, prev_vertex_posteriors, e)?;
        let (u, v) = g.edges[e];
        let mut r = Array3::zeros((c, 2, c_v));
        for a in 0..2 {
            let q = prev_vertex_posteriors.row(if a == GROUP_SRC { u } else { v } as usize);
            for i in 0..c {
                for j in 0..c_v {
                    r[(i, a, j)] = pass.em_scaled[i]
                        * params.sp.weights[a]
                        * params.transition.probs[(a, i, j)]
                        * q[j]
                        / pass.z;
                }
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// M-step over accumulated edge statistics.
pub fn edge_m_step(
    stats: &SuffStats,
    prev: &EdgeLayerParams,
    eps: f64,
    var_floor: f64,
) -> Result<EdgeLayerParams> {
    if stats.n_units <= 0.0 {
        return Err(Error::State(
            "edge M-step requires statistics from at least one edge".into(),
        ));
    }
    Ok(EdgeLayerParams {
        emission: emission_m_step(stats, &prev.emission, eps, var_floor),
        transition: TransitionTensor::m_step(&stats.transition, &prev.transition, eps),
        sp: SpPrior::m_step(stats.sp.view(), &prev.sp, eps),
    })
}

/// Posterior inference over edges; argmax ties break toward the lowest index.
pub fn edge_infer(
    g: &Graph,
    params: &EdgeLayerParams,
    prev_vertex_posteriors: ArrayView2<f64>,
) -> Result<(Array2<f64>, Vec<u32>)> {
    let c = params.edge_states();
    if prev_vertex_posteriors.nrows() != g.n_vertices {
        return Err(Error::Shape(format!(
            "vertex posterior rows {} != n_vertices {}",
            prev_vertex_posteriors.nrows(),
            g.n_vertices
        )));
    }
    let mut posteriors = Array2::zeros((g.n_edges(), c));
    let mut states = Vec::with_capacity(g.n_edges());
    for e in 0..g.n_edges() {
        let pass = edge_unit_pass(g, params, prev_vertex_posteriors, e)?;
        states.push(argmax(pass.posterior.view()));
        posteriors.row_mut(e).assign(&pass.posterior);
    }
    Ok((posteriors, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::simplex_project;
    use crate::graph::{EdgeFeatures, VertexFeatures};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn edge_graph(n: usize, edges: Vec<(u32, u32)>, feats: EdgeFeatures) -> Graph {
        Graph {
            n_vertices: n,
            edges,
            vertex_features: VertexFeatures::Categorical(vec![0; n]),
            edge_features: feats,
            target: None,
        }
    }

    fn random_simplex_rows(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut rows = Array2::zeros((n, k));
        for mut row in rows.rows_mut() {
            let draw: Array1<f64> = Array1::from_iter((0..k).map(|_| rng.random::<f64>() + 1e-3));
            row.assign(&simplex_project(draw.view(), 0.0));
        }
        rows
    }

    fn random_params(c_e: usize, c_v: usize, k: usize, seed: u64) -> EdgeLayerParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let em = Emission::init_categorical(c_e, k, 1e-12, &mut rng);
        EdgeLayerParams::init(em, c_v, 1e-12, &mut rng)
    }

    #[test]
    fn prior_hand_substitution() {
        let mut params = random_params(3, 4, 2, 1);
        params.sp.weights = array![0.5, 0.5];
        let q_u = array![0.0, 1.0, 0.0, 0.0];
        let q_v = array![0.0, 0.0, 0.0, 1.0];
        let p = edge_prior(&params, q_u.view(), q_v.view()).unwrap();
        for i in 0..3 {
            let expected = 0.5 * params.transition.probs[(0, i, 1)]
                + 0.5 * params.transition.probs[(1, i, 3)];
            assert_abs_diff_eq!(p[i], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn prior_uniform_transitions() {
        let mut params = random_params(4, 3, 2, 2);
        params.transition.probs.fill(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_simplex_rows(2, 3, &mut rng);
        let p = edge_prior(&params, q.row(0), q.row(1)).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(p[i], 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn prior_source_only_sp() {
        let mut params = random_params(3, 3, 2, 4);
        params.sp.weights = array![1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q_u = random_simplex_rows(1, 3, &mut rng);
        let qv1 = random_simplex_rows(1, 3, &mut rng);
        let qv2 = random_simplex_rows(1, 3, &mut rng);
        let p1 = edge_prior(&params, q_u.row(0), qv1.row(0)).unwrap();
        let p2 = edge_prior(&params, q_u.row(0), qv2.row(0)).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(p1[i], p2[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn prior_shape_mismatch() {
        let params = random_params(3, 3, 2, 6);
        let q = array![0.5, 0.5];
        assert!(matches!(
            edge_prior(&params, q.view(), q.view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn e_step_symmetric_posterior() {
        let g = edge_graph(2, vec![(0, 1)], EdgeFeatures::Absent);
        let mut params = random_params(2, 2, 2, 7);
        // Equal emission densities and uniform prior.
        params.emission = Emission::Gaussian {
            means: array![[0.0], [0.0]],
            vars: array![[1.0], [1.0]],
        };
        params.transition.probs.fill(0.5);
        let prev = Array2::from_elem((2, 2), 0.5);
        let (_, _, posts) = edge_e_step(&g, &params, prev.view()).unwrap();
        assert_abs_diff_eq!(posts[(0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(posts[(0, 1)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn responsibilities_sum_to_one_and_match_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = edge_graph(
            3,
            vec![(0, 1), (1, 2), (2, 0), (1, 1)],
            EdgeFeatures::Categorical(vec![0, 1, 1, 0]),
        );
        let params = random_params(2, 3, 2, 9);
        let prev = random_simplex_rows(3, 3, &mut rng);
        let rs = edge_responsibilities(&g, &params, prev.view()).unwrap();
        let (stats, _, posts) = edge_e_step(&g, &params, prev.view()).unwrap();
        let mut t_acc = Array3::zeros((2, 2, 3));
        let mut sp_acc = Array1::zeros(2);
        for (e, r) in rs.iter().enumerate() {
            assert_abs_diff_eq!(r.sum(), 1.0, epsilon = 1e-9);
            for i in 0..2 {
                let mut marg = 0.0;
                for a in 0..2 {
                    for j in 0..3 {
                        t_acc[(a, i, j)] += r[(i, a, j)];
                        sp_acc[a] += r[(i, a, j)];
                        marg += r[(i, a, j)];
                    }
                }
                assert_abs_diff_eq!(marg, posts[(e, i)], epsilon = 1e-12);
            }
        }
        for a in 0..2 {
            assert_abs_diff_eq!(stats.sp[a], sp_acc[a], epsilon = 1e-12);
            for i in 0..2 {
                for j in 0..3 {
                    assert_abs_diff_eq!(
                        stats.transition[(a, i, j)],
                        t_acc[(a, i, j)],
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn brute_force_enumeration_oracle() {
        // Naive per-edge enumeration with plain loops and no scaling.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = edge_graph(
            3,
            vec![(0, 1), (2, 1)],
            EdgeFeatures::Categorical(vec![1, 0]),
        );
        let params = random_params(2, 2, 2, 11);
        let prev = random_simplex_rows(3, 2, &mut rng);
        let rs = edge_responsibilities(&g, &params, prev.view()).unwrap();
        for (e, &(u, v)) in g.edges.iter().enumerate() {
            let feat = match &g.edge_features {
                EdgeFeatures::Categorical(ids) => ids[e] as usize,
                _ => unreachable!(),
            };
            let em = match &params.emission {
                Emission::Categorical { table } => table,
                _ => unreachable!(),
            };
            let mut raw = Array3::zeros((2, 2, 2));
            let mut z = 0.0;
            for i in 0..2 {
                for a in 0..2 {
                    for j in 0..2 {
                        let q = if a == 0 {
                            prev[(u as usize, j)]
                        } else {
                            prev[(v as usize, j)]
                        };
                        let val = em[(i, feat)]
                            * params.sp.weights[a]
                            * params.transition.probs[(a, i, j)]
                            * q;
                        raw[(i, a, j)] = val;
                        z += val;
                    }
                }
            }
            for i in 0..2 {
                for a in 0..2 {
                    for j in 0..2 {
                        assert_abs_diff_eq!(
                            rs[e][(i, a, j)],
                            raw[(i, a, j)] / z,
                            epsilon = 1e-10
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn m_step_degenerate_and_constant_feature() {
        let params = random_params(2, 2, 2, 12);
        let mut stats = SuffStats::new_categorical(2, 2, 2, 2);
        stats.n_units = 1.0;
        stats.sp[GROUP_SRC] = 1.0;
        let eps = 1e-12;
        let out = edge_m_step(&stats, &params, eps, 1e-4).unwrap();
        assert_abs_diff_eq!(out.sp.weights[GROUP_SRC], 1.0 - eps, epsilon = 1e-15);
        assert_eq!(out.sp.weights[GROUP_DST], eps);

        // All edges share one continuous value; one EM round collapses every
        // state's Gaussian onto it.
        let g = edge_graph(
            3,
            vec![(0, 1), (1, 2), (2, 0)],
            EdgeFeatures::Continuous(array![[2.5], [2.5], [2.5]]),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let gauss = Emission::Gaussian {
            means: array![[0.0], [1.0]],
            vars: array![[1.0], [2.0]],
        };
        let gparams = EdgeLayerParams::init(gauss, 2, 1e-12, &mut rng);
        let prev = random_simplex_rows(3, 2, &mut rng);
        let (stats, _, _) = edge_e_step(&g, &gparams, prev.view()).unwrap();
        let out = edge_m_step(&stats, &gparams, 1e-12, 1e-4).unwrap();
        match out.emission {
            Emission::Gaussian { means, vars } => {
                for i in 0..2 {
                    assert_abs_diff_eq!(means[(i, 0)], 2.5, epsilon = 1e-9);
                    assert_eq!(vars[(i, 0)], 1e-4);
                }
            }
            _ => panic!("expected gaussian"),
        }
    }

    #[test]
    fn m_step_empty_stats_is_state_error() {
        let params = random_params(2, 2, 2, 14);
        let stats = SuffStats::new_categorical(2, 2, 2, 2);
        assert!(matches!(
            edge_m_step(&stats, &params, 1e-12, 1e-4),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn merged_stats_equal_union_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let g1 = edge_graph(2, vec![(0, 1)], EdgeFeatures::Categorical(vec![0]));
        let g2 = edge_graph(
            3,
            vec![(1, 2), (2, 0)],
            EdgeFeatures::Categorical(vec![1, 0]),
        );
        let params = random_params(2, 2, 2, 16);
        let qv1 = random_simplex_rows(2, 2, &mut rng);
        let qv2 = random_simplex_rows(3, 2, &mut rng);
        let (s1, _, _) = edge_e_step(&g1, &params, qv1.view()).unwrap();
        let (s2, _, _) = edge_e_step(&g2, &params, qv2.view()).unwrap();
        let mut merged = s1.clone();
        merged.merge(&s2);
        let union = edge_graph(
            5,
            vec![(0, 1), (3, 4), (4, 2)],
            EdgeFeatures::Categorical(vec![0, 1, 0]),
        );
        let mut qv = Array2::zeros((5, 2));
        qv.slice_mut(ndarray::s![0..2, ..]).assign(&qv1);
        qv.slice_mut(ndarray::s![2..5, ..]).assign(&qv2);
        let (joint, _, _) = edge_e_step(&union, &params, qv.view()).unwrap();
        let a = edge_m_step(&merged, &params, 1e-12, 1e-4).unwrap();
        let b = edge_m_step(&joint, &params, 1e-12, 1e-4).unwrap();
        for (x, y) in a
            .transition
            .probs
            .iter()
            .zip(b.transition.probs.iter())
            .chain(a.sp.weights.iter().zip(b.sp.weights.iter()))
        {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn missing_features_still_differentiate_endpoint_pairs() {
        // Constant edge features: posteriors vary only through the prior.
        let g = edge_graph(4, vec![(0, 1), (2, 3), (0, 1)], EdgeFeatures::Absent);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gauss = Emission::Gaussian {
            means: array![[0.0], [0.5], [-0.5]],
            vars: array![[1.0], [1.0], [1.0]],
        };
        let params = EdgeLayerParams::init(gauss, 2, 1e-12, &mut rng);
        let prev = array![
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 1.0],
            [1.0, 0.0]
        ];
        let (_, _, posts) = edge_e_step(&g, &params, prev.view()).unwrap();
        let diff: f64 = (0..3)
            .map(|i| (posts[(0, i)] - posts[(1, i)]).abs())
            .sum();
        assert!(
            diff > 1e-4,
            "distinct endpoint pairs should give distinct posteriors, diff={diff}"
        );
        // Identical endpoint pair: identical posterior.
        for i in 0..3 {
            assert_abs_diff_eq!(posts[(0, i)], posts[(2, i)], epsilon = 1e-15);
        }
    }

    #[test]
    fn em_monotone_on_edge_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let graphs: Vec<Graph> = (0..5)
            .map(|_| {
                let n = rng.random_range(2..6);
                let m = rng.random_range(1..7);
                let edges: Vec<(u32, u32)> = (0..m)
                    .map(|_| {
                        (
                            rng.random_range(0..n) as u32,
                            rng.random_range(0..n) as u32,
                        )
                    })
                    .collect();
                let feats: Vec<u32> = (0..m).map(|_| rng.random_range(0..3) as u32).collect();
                edge_graph(n, edges, EdgeFeatures::Categorical(feats))
            })
            .collect();
        let prev: Vec<Array2<f64>> = graphs
            .iter()
            .map(|g| random_simplex_rows(g.n_vertices, 3, &mut rng))
            .collect();
        let mut params = random_params(2, 3, 3, 19);
        let mut last_ll = f64::NEG_INFINITY;
        for _ in 0..15 {
            let mut total = SuffStats::new_categorical(2, 2, 3, 3);
            let mut ll = 0.0;
            for (k, g) in graphs.iter().enumerate() {
                let (s, l, _) = edge_e_step(g, &params, prev[k].view()).unwrap();
                total.merge(&s);
                ll += l;
            }
            assert!(ll >= last_ll - 1e-7, "ll decreased: {last_ll} -> {ll}");
            last_ll = ll;
            params = edge_m_step(&total, &params, 1e-12, 1e-4).unwrap();
        }
    }

    #[test]
    fn infer_matches_e_step_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let g = edge_graph(
            3,
            vec![(0, 1), (1, 2)],
            EdgeFeatures::Categorical(vec![0, 2]),
        );
        let params = random_params(3, 2, 3, 21);
        let prev = random_simplex_rows(3, 2, &mut rng);
        let (_, _, e_posts) = edge_e_step(&g, &params, prev.view()).unwrap();
        let (i_posts, states) = edge_infer(&g, &params, prev.view()).unwrap();
        for (a, b) in e_posts.iter().zip(i_posts.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert_eq!(states.len(), 2);
        assert_eq!(argmax(array![0.2, 0.2, 0.6].view()), 2);
    }
}
