//! Shared probability machinery for both network components: emission
//! distributions (categorical and diagonal Gaussian), transition tensors,
//! switching-parent priors, and mergeable EM sufficient statistics.
//!
//! Densities are evaluated in log-space. Every M-step output is floored and
//! renormalized through [`simplex_project`], so stored probabilities are
//! strictly positive and later layers never take log(0).

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FeatureRef;

/// Probability floor applied after every normalization.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;
/// Lower clamp for Gaussian variances.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-4;
/// Tolerance on simplex sums used by validation checks.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Projects a nonnegative vector onto the simplex with all entries ≥ `floor`:
/// `p_i = floor + (1 - n·floor)·v_i/Σv`. An all-zero vector maps to uniform.
pub fn simplex_project(v: ArrayView1<f64>, floor: f64) -> Array1<f64> {
    let n = v.len();
    assert!(n > 0, "cannot project an empty vector");
    assert!(
        floor >= 0.0 && floor * n as f64 <= 1.0,
        "floor {floor} infeasible for length {n}"
    );
    let sum: f64 = v.sum();
    debug_assert!(v.iter().all(|&x| x >= 0.0 && x.is_finite()));
    if sum <= 0.0 {
        return Array1::from_elem(n, 1.0 / n as f64);
    }
    let scale = (1.0 - floor * n as f64) / sum;
    v.mapv(|x| floor + scale * x)
}

/// Numerically stable log(Σ exp(x_i)).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-state emission distribution over unit features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Emission {
    /// `table[i, k] = P(x = k | Q = i)`, rows on the simplex.
    Categorical { table: Array2<f64> },
    /// Diagonal Gaussian per state: `means[i, ·]`, `vars[i, ·] ≥ var_floor`.
    Gaussian { means: Array2<f64>, vars: Array2<f64> },
}

impl Emission {
    pub fn n_states(&self) -> usize {
        match self {
            Emission::Categorical { table } => table.nrows(),
            Emission::Gaussian { means, .. } => means.nrows(),
        }
    }

    /// Domain size (categorical) or dimension (Gaussian).
    pub fn width(&self) -> usize {
        match self {
            Emission::Categorical { table } => table.ncols(),
            Emission::Gaussian { means, .. } => means.ncols(),
        }
    }

    /// Random initialization: categorical rows from a symmetric Dirichlet
    /// (α=1), floored by `eps`.
    pub fn init_categorical(c: usize, k: usize, eps: f64, rng: &mut impl Rng) -> Emission {
        let mut table = Array2::zeros((c, k));
        for mut row in table.rows_mut() {
            let draw: Array1<f64> = Array1::from_iter((0..k).map(|_| rng.sample::<f64, _>(Exp1)));
            row.assign(&simplex_project(draw.view(), eps));
        }
        Emission::Categorical { table }
    }

    /// Random initialization: means are observations sampled from `data`
    /// (with replacement), variances the per-dimension population variance of
    /// `data` clamped to `var_floor`.
    pub fn init_gaussian(
        c: usize,
        data: ArrayView2<f64>,
        var_floor: f64,
        rng: &mut impl Rng,
    ) -> Result<Emission> {
        let (n, d) = data.dim();
        if n == 0 {
            return Err(Error::Training(
                "cannot seed Gaussian emissions from an empty dataset".into(),
            ));
        }
        let mut means = Array2::zeros((c, d));
        for mut row in means.rows_mut() {
            let pick = rng.random_range(0..n);
            row.assign(&data.row(pick));
        }
        let mean = data.mean_axis(Axis(0)).expect("n > 0");
        let mut var = Array1::<f64>::zeros(d);
        for row in data.rows() {
            for j in 0..d {
                let diff = row[j] - mean[j];
                var[j] += diff * diff;
            }
        }
        var.mapv_inplace(|s| (s / n as f64).max(var_floor));
        let vars = Array2::from_shape_fn((c, d), |(_, j)| var[j]);
        Ok(Emission::Gaussian { means, vars })
    }

    /// Writes per-state log densities of one observation into `out`.
    /// Panics on kind or dimension mismatch; callers validate feature kinds
    /// once per dataset via [`Emission::check_feature`].
    pub fn log_density_into(&self, x: FeatureRef, out: &mut [f64]) {
        match (self, x) {
            (Emission::Categorical { table }, FeatureRef::Cat(k)) => {
                let col = table.column(k as usize);
                for (o, &p) in out.iter_mut().zip(col.iter()) {
                    *o = p.ln();
                }
            }
            (Emission::Gaussian { means, vars }, FeatureRef::Cont(x)) => {
                assert_eq!(x.len(), means.ncols(), "feature dim mismatch");
                const HALF_LN_2PI: f64 = 0.918938533204672742;
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..x.len() {
                        let v = vars[(i, j)];
                        let diff = x[j] - means[(i, j)];
                        acc -= HALF_LN_2PI + 0.5 * v.ln() + diff * diff / (2.0 * v);
                    }
                    *o = acc;
                }
            }
            _ => panic!("feature kind does not match emission kind"),
        }
    }

    /// Checks that an observation is compatible with this emission.
    pub fn check_feature(&self, x: FeatureRef) -> Result<()> {
        match (self, x) {
            (Emission::Categorical { table }, FeatureRef::Cat(k)) => {
                if (k as usize) < table.ncols() {
                    Ok(())
                } else {
                    Err(Error::Shape(format!(
                        "categorical id {k} outside emission domain {}",
                        table.ncols()
                    )))
                }
            }
            (Emission::Gaussian { means, .. }, FeatureRef::Cont(x)) => {
                if x.len() == means.ncols() {
                    Ok(())
                } else {
                    Err(Error::Shape(format!(
                        "feature dim {} does not match emission dim {}",
                        x.len(),
                        means.ncols()
                    )))
                }
            }
            (Emission::Categorical { .. }, FeatureRef::Cont(_)) => Err(Error::Shape(
                "continuous feature given to a categorical emission".into(),
            )),
            (Emission::Gaussian { .. }, FeatureRef::Cat(_)) => Err(Error::Shape(
                "categorical feature given to a Gaussian emission".into(),
            )),
        }
    }

    pub fn validate(&self, var_floor: f64) -> Result<()> {
        match self {
            Emission::Categorical { table } => {
                for (i, row) in table.rows().into_iter().enumerate() {
                    let s: f64 = row.sum();
                    if (s - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&p| p < 0.0) {
                        return Err(Error::Numeric(format!(
                            "emission row {i} is not on the simplex (sum {s})"
                        )));
                    }
                }
            }
            Emission::Gaussian { means, vars } => {
                if means.dim() != vars.dim() {
                    return Err(Error::Shape("means/vars shape mismatch".into()));
                }
                if vars.iter().any(|&v| v < var_floor || !v.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "gaussian variance below floor {var_floor}"
                    )));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Numeric("non-finite gaussian mean".into()));
                }
            }
        }
        Ok(())
    }
}

/// Checked scalar density of one observation under one state.
pub fn emission_density(e: &Emission, x: FeatureRef, i: usize) -> Result<f64> {
    if i >= e.n_states() {
        return Err(Error::Shape(format!(
            "state {i} outside 0..{}",
            e.n_states()
        )));
    }
    e.check_feature(x)?;
    let mut out = vec![0.0; e.n_states()];
    e.log_density_into(x, &mut out);
    Ok(out[i].exp())
}

/// Transition probabilities `probs[a, i, j] = P^a(Q = i | q_prev = j)`;
/// for every group `a` and source state `j` the column over `i` is a simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTensor {
    pub probs: Array3<f64>,
}

impl TransitionTensor {
    pub fn n_groups(&self) -> usize {
        self.probs.dim().0
    }

    pub fn n_states(&self) -> usize {
        self.probs.dim().1
    }

    pub fn n_source_states(&self) -> usize {
        self.probs.dim().2
    }

    /// Random initialization: each (a, j) column drawn from a symmetric
    /// Dirichlet (α=1), floored by `eps`.
    pub fn init(a: usize, c: usize, c_src: usize, eps: f64, rng: &mut impl Rng) -> Self {
        let mut probs = Array3::zeros((a, c, c_src));
        for g in 0..a {
            for j in 0..c_src {
                let draw: Array1<f64> =
                    Array1::from_iter((0..c).map(|_| rng.sample::<f64, _>(Exp1)));
                let col = simplex_project(draw.view(), eps);
                for i in 0..c {
                    probs[(g, i, j)] = col[i];
                }
            }
        }
        TransitionTensor { probs }
    }

    /// M-step from expected counts: each (a, j) column is floor-projected;
    /// zero-mass columns keep their previous values.
    pub fn m_step(counts: &Array3<f64>, prev: &TransitionTensor, eps: f64) -> Self {
        let (a, c, c_src) = prev.probs.dim();
        assert_eq!(counts.dim(), (a, c, c_src), "transition count shape");
        let mut probs = Array3::zeros((a, c, c_src));
        for g in 0..a {
            for j in 0..c_src {
                let col = counts.slice(ndarray::s![g, .., j]);
                if col.sum() <= 0.0 {
                    for i in 0..c {
                        probs[(g, i, j)] = prev.probs[(g, i, j)];
                    }
                } else {
                    let p = simplex_project(col, eps);
                    for i in 0..c {
                        probs[(g, i, j)] = p[i];
                    }
                }
            }
        }
        TransitionTensor { probs }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, _, c_src) = self.probs.dim();
        for g in 0..a {
            for j in 0..c_src {
                let s: f64 = self.probs.slice(ndarray::s![g, .., j]).sum();
                if (s - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::Numeric(format!(
                        "transition column (a={g}, j={j}) sums to {s}"
                    )));
                }
            }
        }
        if self.probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Numeric("negative transition probability".into()));
        }
        Ok(())
    }
}

/// Switching-parent prior: a simplex over the context groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpPrior {
    pub weights: Array1<f64>,
}

impl SpPrior {
    pub fn n_groups(&self) -> usize {
        self.weights.len()
    }

    pub fn init(a: usize, eps: f64, rng: &mut impl Rng) -> Self {
        let draw: Array1<f64> = Array1::from_iter((0..a).map(|_| rng.sample::<f64, _>(Exp1)));
        SpPrior {
            weights: simplex_project(draw.view(), eps),
        }
    }

    pub fn m_step(counts: ArrayView1<f64>, prev: &SpPrior, eps: f64) -> Self {
        assert_eq!(counts.len(), prev.weights.len(), "sp count shape");
        if counts.sum() <= 0.0 {
            return prev.clone();
        }
        SpPrior {
            weights: simplex_project(counts, eps),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.weights.sum();
        if (s - 1.0).abs() > SIMPLEX_TOL || self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Numeric(format!("sp prior sums to {s}")));
        }
        Ok(())
    }
}

/// Normalizes a count vector with the zero-mass keep-previous rule shared by
/// all simplex-valued parameters.
pub fn simplex_m_step(counts: ArrayView1<f64>, prev: ArrayView1<f64>, eps: f64) -> Array1<f64> {
    assert_eq!(counts.len(), prev.len());
    if counts.sum() <= 0.0 {
        prev.to_owned()
    } else {
        simplex_project(counts, eps)
    }
}

/// Per-state emission accumulators.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionStats {
    /// `counts[i, k]`: expected number of state-i units with label k.
    Categorical { counts: Array2<f64> },
    /// Weighted moment sums per state: total weight, Σ w·x, Σ w·x².
    Gaussian {
        w: Array1<f64>,
        wx: Array2<f64>,
        wxx: Array2<f64>,
    },
}

impl EmissionStats {
    fn merge(&mut self, other: &EmissionStats) {
        match (self, other) {
            (EmissionStats::Categorical { counts }, EmissionStats::Categorical { counts: o }) => {
                *counts += o;
            }
            (
                EmissionStats::Gaussian { w, wx, wxx },
                EmissionStats::Gaussian {
                    w: ow,
                    wx: owx,
                    wxx: owxx,
                },
            ) => {
                *w += ow;
                *wx += owx;
                *wxx += owxx;
            }
            _ => panic!("cannot merge emission stats of different kinds"),
        }
    }
}

/// Expected-count accumulators of one E-step pass. Merging two accumulators
/// is field-wise addition, so per-worker statistics can be reduced in any
/// grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub emission: EmissionStats,
    /// Expected transition counts, groups × states × source-states.
    pub transition: Array3<f64>,
    /// Expected switching-parent counts per group.
    pub sp: Array1<f64>,
    /// Expected state counts of units evaluated without context
    /// (first layer or isolated vertices); unused by the edge component.
    pub mixture: Array1<f64>,
    pub log_likelihood: f64,
    pub n_units: f64,
}

impl SuffStats {
    pub fn new_categorical(a: usize, c: usize, c_src: usize, k: usize) -> Self {
        SuffStats {
            emission: EmissionStats::Categorical {
                counts: Array2::zeros((c, k)),
            },
            transition: Array3::zeros((a, c, c_src)),
            sp: Array1::zeros(a),
            mixture: Array1::zeros(c),
            log_likelihood: 0.0,
            n_units: 0.0,
        }
    }

    pub fn new_gaussian(a: usize, c: usize, c_src: usize, d: usize) -> Self {
        SuffStats {
            emission: EmissionStats::Gaussian {
                w: Array1::zeros(c),
                wx: Array2::zeros((c, d)),
                wxx: Array2::zeros((c, d)),
            },
            transition: Array3::zeros((a, c, c_src)),
            sp: Array1::zeros(a),
            mixture: Array1::zeros(c),
            log_likelihood: 0.0,
            n_units: 0.0,
        }
    }

    /// Matches the emission kind and width of `em`.
    pub fn for_emission(em: &Emission, a: usize, c_src: usize) -> Self {
        match em {
            Emission::Categorical { table } => {
                SuffStats::new_categorical(a, table.nrows(), c_src, table.ncols())
            }
            Emission::Gaussian { means, .. } => {
                SuffStats::new_gaussian(a, means.nrows(), c_src, means.ncols())
            }
        }
    }

    /// Adds one observation's emission statistics with per-state weights.
    pub fn add_observation(&mut self, x: FeatureRef, weights: ArrayView1<f64>) {
        match (&mut self.emission, x) {
            (EmissionStats::Categorical { counts }, FeatureRef::Cat(k)) => {
                for (i, &wi) in weights.iter().enumerate() {
                    counts[(i, k as usize)] += wi;
                }
            }
            (EmissionStats::Gaussian { w, wx, wxx }, FeatureRef::Cont(x)) => {
                for (i, &wi) in weights.iter().enumerate() {
                    w[i] += wi;
                    for j in 0..x.len() {
                        wx[(i, j)] += wi * x[j];
                        wxx[(i, j)] += wi * x[j] * x[j];
                    }
                }
            }
            _ => panic!("feature kind does not match accumulator kind"),
        }
        self.n_units += 1.0;
    }

    pub fn merge(&mut self, other: &SuffStats) {
        assert_eq!(self.transition.dim(), other.transition.dim());
        self.emission.merge(&other.emission);
        self.transition += &other.transition;
        self.sp += &other.sp;
        self.mixture += &other.mixture;
        self.log_likelihood += other.log_likelihood;
        self.n_units += other.n_units;
    }
}

/// Emission M-step from accumulated statistics. Categorical rows are
/// normalized counts floored by `eps`; Gaussian means are weighted averages
/// and variances weighted second central moments clamped to `var_floor`.
/// States with zero responsibility mass keep their previous parameters.
pub fn emission_m_step(
    acc: &SuffStats,
    prev: &Emission,
    eps: f64,
    var_floor: f64,
) -> Emission {
    match (&acc.emission, prev) {
        (EmissionStats::Categorical { counts }, Emission::Categorical { table: prev_table }) => {
            assert_eq!(counts.dim(), prev_table.dim(), "emission count shape");
            let mut table = Array2::zeros(counts.dim());
            for (i, row) in counts.rows().into_iter().enumerate() {
                if row.sum() <= 0.0 {
                    table.row_mut(i).assign(&prev_table.row(i));
                } else {
                    table.row_mut(i).assign(&simplex_project(row, eps));
                }
            }
            Emission::Categorical { table }
        }
        (
            EmissionStats::Gaussian { w, wx, wxx },
            Emission::Gaussian {
                means: prev_means,
                vars: prev_vars,
            },
        ) => {
            assert_eq!(wx.dim(), prev_means.dim(), "emission moment shape");
            let (c, d) = wx.dim();
            let mut means = Array2::zeros((c, d));
            let mut vars = Array2::zeros((c, d));
            for i in 0..c {
                if w[i] <= 0.0 {
                    means.row_mut(i).assign(&prev_means.row(i));
                    vars.row_mut(i).assign(&prev_vars.row(i));
                } else {
                    for j in 0..d {
                        let m = wx[(i, j)] / w[i];
                        means[(i, j)] = m;
                        vars[(i, j)] = (wxx[(i, j)] / w[i] - m * m).max(var_floor);
                    }
                }
            }
            Emission::Gaussian { means, vars }
        }
        _ => panic!("accumulator kind does not match previous emission kind"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simplex_project_examples() {
        let p = simplex_project(array![2.0, 2.0].view(), 0.0);
        assert_eq!(p, array![0.5, 0.5]);
        let p = simplex_project(array![0.0, 0.0, 0.0].view(), 1e-6);
        assert_abs_diff_eq!(p[0], 1.0 / 3.0, epsilon = 1e-15);
        let p = simplex_project(array![1.0, 0.0].view(), 1e-6);
        assert_eq!(p[1], 1e-6);
        assert_abs_diff_eq!(p[0], 1.0 - 1e-6, epsilon = 1e-15);
        assert!((p.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn density_one_hot_row() {
        let table = array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        let e = Emission::Categorical { table };
        assert_eq!(emission_density(&e, FeatureRef::Cat(1), 0).unwrap(), 1.0);
    }

    #[test]
    fn density_standard_normal() {
        let e = Emission::Gaussian {
            means: array![[0.0]],
            vars: array![[1.0]],
        };
        let x = array![0.0];
        let d = emission_density(&e, FeatureRef::Cont(x.view()), 0).unwrap();
        assert_abs_diff_eq!(d, 0.3989422804014327, epsilon = 1e-12);
    }

    #[test]
    fn density_uniform_categorical() {
        let e = Emission::Categorical {
            table: Array2::from_elem((2, 4), 0.25),
        };
        for k in 0..4 {
            assert_abs_diff_eq!(
                emission_density(&e, FeatureRef::Cat(k), 1).unwrap(),
                0.25,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn density_kind_mismatch_is_shape_error() {
        let e = Emission::Categorical {
            table: Array2::from_elem((2, 4), 0.25),
        };
        let x = array![0.0];
        assert!(matches!(
            emission_density(&e, FeatureRef::Cont(x.view()), 0),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            emission_density(&e, FeatureRef::Cat(9), 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn categorical_density_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let e = Emission::init_categorical(3, 5, 1e-12, &mut rng);
            for k in 0..5 {
                for i in 0..3 {
                    let d = emission_density(&e, FeatureRef::Cat(k as u32), i).unwrap();
                    assert!((0.0..=1.0).contains(&d));
                }
            }
        }
    }

    #[test]
    fn m_step_degenerate_counts_floored() {
        let mut acc = SuffStats::new_categorical(1, 2, 1, 3);
        // All mass for state 0 lands on label 2.
        acc.add_observation(FeatureRef::Cat(2), array![1.0, 0.0].view());
        let prev = Emission::Categorical {
            table: Array2::from_elem((2, 3), 1.0 / 3.0),
        };
        let eps = 1e-12;
        let out = emission_m_step(&acc, &prev, eps, DEFAULT_VAR_FLOOR);
        match out {
            Emission::Categorical { table } => {
                assert_abs_diff_eq!(table[(0, 2)], 1.0 - 2.0 * eps, epsilon = 1e-15);
                assert_eq!(table[(0, 0)], eps);
                // Zero-mass state 1 keeps its previous row.
                assert_abs_diff_eq!(table[(1, 0)], 1.0 / 3.0, epsilon = 1e-15);
            }
            _ => panic!("expected categorical emission"),
        }
    }

    #[test]
    fn m_step_population_variance() {
        let mut acc = SuffStats::new_gaussian(1, 1, 1, 1);
        let a = array![-1.0];
        let b = array![1.0];
        acc.add_observation(FeatureRef::Cont(a.view()), array![1.0].view());
        acc.add_observation(FeatureRef::Cont(b.view()), array![1.0].view());
        let prev = Emission::Gaussian {
            means: array![[5.0]],
            vars: array![[5.0]],
        };
        let out = emission_m_step(&acc, &prev, 1e-12, 1e-4);
        match out {
            Emission::Gaussian { means, vars } => {
                assert_abs_diff_eq!(means[(0, 0)], 0.0, epsilon = 1e-15);
                assert_abs_diff_eq!(vars[(0, 0)], 1.0, epsilon = 1e-15);
            }
            _ => panic!("expected gaussian emission"),
        }
    }

    #[test]
    fn m_step_zero_mass_state_unchanged() {
        let acc = SuffStats::new_gaussian(1, 2, 1, 1);
        let prev = Emission::Gaussian {
            means: array![[3.0], [-3.0]],
            vars: array![[2.0], [0.5]],
        };
        let out = emission_m_step(&acc, &prev, 1e-12, 1e-4);
        assert_eq!(out, prev);
    }

    fn random_stats(rng: &mut ChaCha8Rng) -> SuffStats {
        let mut s = SuffStats::new_categorical(2, 3, 3, 4);
        if let EmissionStats::Categorical { counts } = &mut s.emission {
            counts.mapv_inplace(|_| rng.random::<f64>() * 10.0);
        }
        s.transition.mapv_inplace(|_| rng.random::<f64>() * 10.0);
        s.sp.mapv_inplace(|_| rng.random::<f64>() * 10.0);
        s.mixture.mapv_inplace(|_| rng.random::<f64>() * 10.0);
        s.log_likelihood = rng.random::<f64>() * -100.0;
        s.n_units = 5.0;
        s
    }

    fn stats_close(a: &SuffStats, b: &SuffStats, tol: f64) -> bool {
        let rel = |x: f64, y: f64| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()));
        let em_ok = match (&a.emission, &b.emission) {
            (
                EmissionStats::Categorical { counts: ca },
                EmissionStats::Categorical { counts: cb },
            ) => ca.iter().zip(cb.iter()).all(|(&x, &y)| rel(x, y)),
            _ => false,
        };
        em_ok
            && a.transition
                .iter()
                .zip(b.transition.iter())
                .all(|(&x, &y)| rel(x, y))
            && a.sp.iter().zip(b.sp.iter()).all(|(&x, &y)| rel(x, y))
            && rel(a.log_likelihood, b.log_likelihood)
    }

    #[test]
    fn merge_commutative_and_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_stats(&mut rng);
            let y = random_stats(&mut rng);
            let z = random_stats(&mut rng);
            let mut xy = x.clone();
            xy.merge(&y);
            let mut yx = y.clone();
            yx.merge(&x);
            assert!(stats_close(&xy, &yx, 1e-9));
            let mut xy_z = xy.clone();
            xy_z.merge(&z);
            let mut yz = y.clone();
            yz.merge(&z);
            let mut x_yz = x.clone();
            x_yz.merge(&yz);
            assert!(stats_close(&xy_z, &x_yz, 1e-9));
        }
    }

    #[test]
    fn random_m_step_outputs_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for round in 0..25 {
            let mut acc = SuffStats::new_categorical(2, 3, 3, 4);
            if let EmissionStats::Categorical { counts } = &mut acc.emission {
                counts.mapv_inplace(|_| {
                    if rng.random::<f64>() < 0.2 {
                        0.0
                    } else {
                        rng.random::<f64>() * 3.0
                    }
                });
            }
            acc.transition.mapv_inplace(|_| {
                if rng.random::<f64>() < 0.2 {
                    0.0
                } else {
                    rng.random::<f64>() * 3.0
                }
            });
            acc.sp
                .mapv_inplace(|_| if round % 3 == 0 { 0.0 } else { rng.random::<f64>() });
            let prev_em = Emission::init_categorical(3, 4, 1e-12, &mut rng);
            let prev_t = TransitionTensor::init(2, 3, 3, 1e-12, &mut rng);
            let prev_sp = SpPrior::init(2, 1e-12, &mut rng);
            let em = emission_m_step(&acc, &prev_em, 1e-12, 1e-4);
            let t = TransitionTensor::m_step(&acc.transition, &prev_t, 1e-12);
            let sp = SpPrior::m_step(acc.sp.view(), &prev_sp, 1e-12);
            em.validate(1e-4).unwrap();
            t.validate().unwrap();
            sp.validate().unwrap();
        }
    }

    #[test]
    fn log_sum_exp_matches_naive() {
        let xs = [-700.0, -701.0, -699.5];
        let m = log_sum_exp(&xs);
        // Naive evaluation underflows; shifted evaluation must not.
        assert!(m.is_finite());
        let shifted: f64 = xs.iter().map(|&x| (x + 700.0).exp()).sum::<f64>().ln() - 700.0;
        assert_abs_diff_eq!(m, shifted, epsilon = 1e-12);
    }
}
