//! Vertex-centric network of one layer: context aggregation over incoming
//! edges, EM steps and posterior inference for the vertex states.
//!
//! Context groups are the edge states of the previous layer. Groups with zero
//! neighbor mass are excluded and the switching-parent prior renormalized over
//! the active ones; a vertex with no active group (isolated, or any vertex at
//! the first layer) falls back to a learned mixture prior.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayViewMut1, s};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    emission_m_step, simplex_m_step, simplex_project, Emission, SpPrior, SuffStats,
    TransitionTensor,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, NeighborhoodIndex};

/// Parameters of one vertex layer. One parameter set is shared by every
/// vertex (full stationarity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexLayerParams {
    /// Emission over vertex features, `vertex_states` rows.
    pub emission: Emission,
    /// `edge_states × vertex_states × vertex_states` transition tensor;
    /// groups are previous-layer edge states, sources previous-layer vertex
    /// states.
    pub transition: TransitionTensor,
    /// Switching-parent prior over the `edge_states` groups.
    pub sp: SpPrior,
    /// Prior used for vertices without context.
    pub mixture: Array1<f64>,
}

impl VertexLayerParams {
    pub fn vertex_states(&self) -> usize {
        self.transition.n_states()
    }

    pub fn edge_states(&self) -> usize {
        self.transition.n_groups()
    }

    /// Random initialization with Dirichlet-distributed probability tables.
    /// The emission must be seeded separately (it needs data access).
    pub fn init(
        emission: Emission,
        edge_states: usize,
        eps: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let c = emission.n_states();
        let transition = TransitionTensor::init(edge_states, c, c, eps, rng);
        let sp = SpPrior::init(edge_states, eps, rng);
        let mixture = {
            let draw: Array1<f64> =
                Array1::from_iter((0..c).map(|_| rng.sample::<f64, _>(rand_distr::Exp1)));
            simplex_project(draw.view(), eps)
        };
        VertexLayerParams {
            emission,
            transition,
            sp,
            mixture,
        }
    }

    pub fn validate(&self, var_floor: f64) -> Result<()> {
        let c = self.vertex_states();
        let a = self.edge_states();
        if self.emission.n_states() != c
            || self.transition.n_source_states() != c
            || self.sp.n_groups() != a
            || self.mixture.len() != c
        {
            return Err(Error::Shape("inconsistent vertex layer shapes".into()));
        }
        self.emission.validate(var_floor)?;
        self.transition.validate()?;
        self.sp.validate()?;
        let s: f64 = self.mixture.sum();
        if (s - 1.0).abs() > crate::distributions::SIMPLEX_TOL {
            return Err(Error::Numeric(format!("mixture prior sums to {s}")));
        }
        Ok(())
    }
}

/// Aggregated neighborhood evidence of every vertex in one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexContext {
    /// `ctx[u, a, j]`: normalized neighbor mass of group `a` on previous
    /// vertex state `j`; rows with positive mass sum to 1 over `j`.
    pub ctx: Array3<f64>,
    /// `mass[u, a]`: total posterior edge mass of group `a` at vertex `u`.
    pub mass: Array2<f64>,
}

impl VertexContext {
    pub fn has_context(&self, u: usize) -> bool {
        self.mass.row(u).iter().any(|&m| m > 0.0)
    }
}

/// Soft neighborhood aggregation from the previous layer's posteriors:
/// `ctx[u, a, j] = Σ_{(e,v) into u} q_v(j)·q_e(a) / Σ_{(e,v) into u} q_e(a)`.
/// Vertices with no incoming edges get an all-zero mass row.
pub fn compute_vertex_context(
    g: &Graph,
    idx: &NeighborhoodIndex,
    prev_vertex_posteriors: ArrayView2<f64>,
    prev_edge_posteriors: ArrayView2<f64>,
) -> Result<VertexContext> {
    let n = g.n_vertices;
    let m = g.n_edges();
    if prev_vertex_posteriors.nrows() != n {
        return Err(Error::Shape(format!(
            "vertex posterior rows {} != n_vertices {n}",
            prev_vertex_posteriors.nrows()
        )));
    }
    if prev_edge_posteriors.nrows() != m {
        return Err(Error::Shape(format!(
            "edge posterior rows {} != n_edges {m}",
            prev_edge_posteriors.nrows()
        )));
    }
    if idx.n_vertices() != n || idx.n_edges() != m {
        return Err(Error::Shape("index does not match graph".into()));
    }
    let a_groups = prev_edge_posteriors.ncols();
    let c_src = prev_vertex_posteriors.ncols();
    let mut ctx = Array3::zeros((n, a_groups, c_src));
    let mut mass = Array2::zeros((n, a_groups));
    for u in 0..n {
        for &(e, v) in idx.incoming(u) {
            let q_e = prev_edge_posteriors.row(e as usize);
            let q_v = prev_vertex_posteriors.row(v as usize);
            for a in 0..a_groups {
                let w = q_e[a];
                if w == 0.0 {
                    continue;
                }
                mass[(u, a)] += w;
                for j in 0..c_src {
                    ctx[(u, a, j)] += w * q_v[j];
                }
            }
        }
        for a in 0..a_groups {
            let z = mass[(u, a)];
            if z > 0.0 {
                ctx.slice_mut(s![u, a, ..]).mapv_inplace(|x| x / z);
            }
        }
    }
    Ok(VertexContext { ctx, mass })
}

/// Switching-parent weights renormalized over the groups with positive mass;
/// `None` when every group is empty.
fn active_sp(sp: &SpPrior, mass: ArrayView1<f64>) -> Option<Array1<f64>> {
    let mut total = 0.0;
    for (a, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            total += sp.weights[a];
        }
    }
    if total <= 0.0 {
        return None;
    }
    let mut out = Array1::zeros(mass.len());
    for (a, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            out[a] = sp.weights[a] / total;
        }
    }
    Some(out)
}

/// Writes the contextual prior `Σ_a sp̃(a) Σ_j T[a,i,j]·ctx[a,j]` into `out`.
fn contextual_prior_into(
    params: &VertexLayerParams,
    ctx_u: ArrayView2<f64>,
    sp_tilde: &Array1<f64>,
    mut out: ArrayViewMut1<f64>,
) {
    out.fill(0.0);
    let c = params.vertex_states();
    let c_src = params.transition.n_source_states();
    for a in 0..sp_tilde.len() {
        let w = sp_tilde[a];
        if w == 0.0 {
            continue;
        }
        for i in 0..c {
            let mut acc = 0.0;
            for j in 0..c_src {
                acc += params.transition.probs[(a, i, j)] * ctx_u[(a, j)];
            }
            out[i] += w * acc;
        }
    }
}

/// Prior over the vertex states of `u` given its aggregated context; falls
/// back to the mixture prior when no group has mass.
pub fn vertex_prior(
    ctx: &VertexContext,
    params: &VertexLayerParams,
    u: usize,
) -> Array1<f64> {
    match active_sp(&params.sp, ctx.mass.row(u)) {
        Some(sp_tilde) => {
            let mut out = Array1::zeros(params.vertex_states());
            contextual_prior_into(
                params,
                ctx.ctx.slice(s![u, .., ..]),
                &sp_tilde,
                out.view_mut(),
            );
            out
        }
        None => params.mixture.clone(),
    }
}

/// Previous-layer posteriors consumed by a contextual vertex layer.
#[derive(Debug, Clone, Copy)]
pub struct PrevPosteriors<'a> {
    pub vertex: ArrayView2<'a, f64>,
    pub edge: ArrayView2<'a, f64>,
}

/// Full responsibility tensor of one unit, as used by the M-step.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitResponsibilities {
    /// `r[i, a, j]` over state × group × source state, summing to 1.
    Contextual(Array3<f64>),
    /// Mixture-mode responsibilities over the states, summing to 1.
    Mixture(Array1<f64>),
}

struct UnitPass {
    posterior: Array1<f64>,
    log_likelihood: f64,
    /// Scaled emission `exp(log_em - max)`, reused by the accumulation pass.
    em_scaled: Array1<f64>,
    sp_tilde: Option<Array1<f64>>,
    z: f64,
}

fn vertex_unit_pass(
    g: &Graph,
    params: &VertexLayerParams,
    ctx: Option<&VertexContext>,
    u: usize,
) -> Result<UnitPass> {
    let c = params.vertex_states();
    let mut log_em = vec![0.0; c];
    params.emission.log_density_into(g.vertex_feature(u), &mut log_em);
    let m = log_em.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Numeric(format!(
            "vertex {u}: non-finite emission density"
        )));
    }
    let em_scaled = Array1::from_iter(log_em.iter().map(|&le| (le - m).exp()));
    let sp_tilde = ctx.and_then(|cx| active_sp(&params.sp, cx.mass.row(u)));
    let prior = match (&sp_tilde, ctx) {
        (Some(sp_t), Some(cx)) => {
            let mut out = Array1::zeros(c);
            contextual_prior_into(params, cx.ctx.slice(s![u, .., ..]), sp_t, out.view_mut());
            out
        }
        _ => params.mixture.clone(),
    };
    let weighted = &em_scaled * &prior;
    let z = weighted.sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Numeric(format!(
            "vertex {u}: degenerate posterior normalizer {z}"
        )));
    }
    let posterior = weighted / z;
    let log_likelihood = m + z.ln();
    Ok(UnitPass {
        posterior,
        log_likelihood,
        em_scaled,
        sp_tilde,
        z,
    })
}

/// One E-step pass over a graph. Returns accumulated expected counts, the
/// graph's log-likelihood and the per-vertex posteriors. `prev` must be
/// `None` exactly at the first layer.
pub fn vertex_e_step(
    g: &Graph,
    idx: &NeighborhoodIndex,
    params: &VertexLayerParams,
    prev: Option<PrevPosteriors<'_>>,
) -> Result<(SuffStats, f64, Array2<f64>)> {
    let c = params.vertex_states();
    let a_groups = params.edge_states();
    let ctx = match prev {
        Some(p) => Some(compute_vertex_context(g, idx, p.vertex, p.edge)?),
        None => None,
    };
    let mut stats = SuffStats::for_emission(&params.emission, a_groups, c);
    let mut posteriors = Array2::zeros((g.n_vertices, c));
    let mut ll = 0.0;
    for u in 0..g.n_vertices {
        let pass = vertex_unit_pass(g, params, ctx.as_ref(), u)?;
        ll += pass.log_likelihood;
        stats.add_observation(g.vertex_feature(u), pass.posterior.view());
        match (&pass.sp_tilde, &ctx) {
            (Some(sp_t), Some(cx)) => {
                // r[i,a,j] = em_s[i]·sp̃[a]·T[a,i,j]·ctx[a,j] / z
                for a in 0..a_groups {
                    let w = sp_t[a];
                    if w == 0.0 {
                        continue;
                    }
                    let mut group_total = 0.0;
                    for i in 0..c {
                        let em_i = pass.em_scaled[i];
                        if em_i == 0.0 {
                            continue;
                        }
                        for j in 0..c {
                            let r = em_i * w * params.transition.probs[(a, i, j)]
                                * cx.ctx[(u, a, j)]
                                / pass.z;
                            stats.transition[(a, i, j)] += r;
                            group_total += r;
                        }
                    }
                    stats.sp[a] += group_total;
                }
            }
            _ => {
                stats.mixture += &pass.posterior;
            }
        }
        posteriors.row_mut(u).assign(&pass.posterior);
    }
    stats.log_likelihood = ll;
    Ok((stats, ll, posteriors))
}

/// Materialized per-vertex responsibility tensors, for oracle checks and
/// diagnostics. Semantics match [`vertex_e_step`]'s accumulation exactly.
pub fn vertex_responsibilities(
    g: &Graph,
    idx: &NeighborhoodIndex,
    params: &VertexLayerParams,
    prev: Option<PrevPosteriors<'_>>,
) -> Result<Vec<UnitResponsibilities>> {
    let c = params.vertex_states();
    let a_groups = params.edge_states();
    let ctx = match prev {
        Some(p) => Some(compute_vertex_context(g, idx, p.vertex, p.edge)?),
        None => None,
    };
    let mut out = Vec::with_capacity(g.n_vertices);
    for u in 0..g.n_vertices {
        let pass = vertex_unit_pass(g, params, ctx.as_ref(), u)?;
        match (&pass.sp_tilde, &ctx) {
            (Some(sp_t), Some(cx)) => {
                let mut r = Array3::zeros((c, a_groups, c));
                for i in 0..c {
                    for a in 0..a_groups {
                        for j in 0..c {
                            r[(i, a, j)] = pass.em_scaled[i]
                                * sp_t[a]
                                * params.transition.probs[(a, i, j)]
                                * cx.ctx[(u, a, j)]
                                / pass.z;
                        }
                    }
                }
                out.push(UnitResponsibilities::Contextual(r));
            }
            _ => out.push(UnitResponsibilities::Mixture(pass.posterior.clone())),
        }
    }
    Ok(out)
}

/// M-step over accumulated statistics; zero-mass rows and columns keep the
/// previous parameters.
pub fn vertex_m_step(
    stats: &SuffStats,
    prev: &VertexLayerParams,
    eps: f64,
    var_floor: f64,
) -> Result<VertexLayerParams> {
    if stats.n_units <= 0.0 {
        return Err(Error::State(
            "vertex M-step requires statistics from at least one vertex".into(),
        ));
    }
    let emission = emission_m_step(stats, &prev.emission, eps, var_floor);
    let transition = TransitionTensor::m_step(&stats.transition, &prev.transition, eps);
    let sp = SpPrior::m_step(stats.sp.view(), &prev.sp, eps);
    let mixture = simplex_m_step(stats.mixture.view(), prev.mixture.view(), eps);
    Ok(VertexLayerParams {
        emission,
        transition,
        sp,
        mixture,
    })
}

/// Posterior inference: `posterior ∝ emission · prior`, plus the most likely
/// state per vertex with ties broken toward the lowest index.
pub fn vertex_infer(
    g: &Graph,
    idx: &NeighborhoodIndex,
    params: &VertexLayerParams,
    prev: Option<PrevPosteriors<'_>>,
) -> Result<(Array2<f64>, Vec<u32>)> {
    let c = params.vertex_states();
    let ctx = match prev {
        Some(p) => Some(compute_vertex_context(g, idx, p.vertex, p.edge)?),
        None => None,
    };
    let mut posteriors = Array2::zeros((g.n_vertices, c));
    let mut states = Vec::with_capacity(g.n_vertices);
    for u in 0..g.n_vertices {
        let pass = vertex_unit_pass(g, params, ctx.as_ref(), u)?;
        states.push(argmax(pass.posterior.view()));
        posteriors.row_mut(u).assign(&pass.posterior);
    }
    Ok((posteriors, states))
}

/// Index of the maximum entry, lowest index on ties.
pub fn argmax(v: ArrayView1<f64>) -> u32 {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best as u32
}
