//! Small dense predictor used on top of embeddings: one hidden layer with
//! rectified-linear activation, trained full-batch with Adam, an L2 weight
//! penalty, and patience-based early stopping that restores the
//! best-validation weights.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    CrossEntropy,
    MeanAbsoluteError,
    BinaryCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MLPConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for MLPConfig {
    fn default() -> Self {
        MLPConfig {
            hidden_dim: 64,
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            max_epochs: 500,
            patience: 30,
            loss: Loss::CrossEntropy,
            seed: 0,
        }
    }
}

impl MLPConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < 1 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "learning_rate must be positive, weight_decay non-negative".into(),
            ));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Training targets, matched to the loss.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Class ids in `0..n_classes`; cross-entropy (any number of classes) or
    /// binary cross-entropy (two classes, single output unit).
    Classes { ids: &'a [u32], n_classes: usize },
    /// One row of regression targets per sample.
    Values(ArrayView2<'a, f64>),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Classes { ids, .. } => ids.len(),
            Targets::Values(v) => v.nrows(),
        }
    }
}

/// A trained predictor with the best-validation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub(crate) w1: Array2<f64>,
    pub(crate) b1: Array1<f64>,
    pub(crate) w2: Array2<f64>,
    pub(crate) b2: Array1<f64>,
    pub loss: Loss,
    /// Epoch whose weights are stored (0-based).
    pub best_epoch: usize,
    /// Validation score of the stored weights (higher is better; `-MAE` for
    /// regression); 0.0 when trained without a validation set.
    pub best_val_score: f64,
}

fn relu_forward(x: ArrayView2<f64>, w1: &Array2<f64>, b1: &Array1<f64>) -> Array2<f64> {
    let mut z = x.dot(w1);
    z += b1;
    z.mapv_inplace(|v| v.max(0.0));
    z
}

impl Predictor {
    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// Raw network outputs: logits for classification losses, values for
    /// regression.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let a1 = relu_forward(x, &self.w1, &self.b1);
        let mut z2 = a1.dot(&self.w2);
        z2 += &self.b2;
        z2
    }

    /// Class probabilities (classification losses only): `n × n_classes`
    /// softmax rows, or `n × 1` sigmoid column for binary cross-entropy.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut z = self.forward(x);
        match self.loss {
            Loss::CrossEntropy => {
                for mut row in z.rows_mut() {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|v| (v - m).exp());
                    let s = row.sum();
                    row.mapv_inplace(|v| v / s);
                }
                Ok(z)
            }
            Loss::BinaryCrossEntropy => {
                z.mapv_inplace(sigmoid);
                Ok(z)
            }
            Loss::MeanAbsoluteError => Err(Error::Unsupported(
                "probabilities are undefined for a regression predictor".into(),
            )),
        }
    }

    /// Predicted class ids (classification losses only).
    pub fn predict_class(&self, x: ArrayView2<f64>) -> Result<Vec<u32>> {
        let z = self.forward(x);
        match self.loss {
            Loss::CrossEntropy => Ok(z
                .rows()
                .into_iter()
                .map(|r| crate::vertex::argmax(r))
                .collect()),
            Loss::BinaryCrossEntropy => {
                Ok(z.column(0).iter().map(|&v| (v > 0.0) as u32).collect())
            }
            Loss::MeanAbsoluteError => Err(Error::Unsupported(
                "classes are undefined for a regression predictor".into(),
            )),
        }
    }

    pub fn predict_values(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(x)
    }

    /// Validation-style score, higher is better: accuracy for classification
    /// losses, negative mean absolute error for regression.
    pub fn score(&self, x: ArrayView2<f64>, y: &Targets) -> Result<f64> {
        check_targets(x, y, self.loss, self.output_dim())?;
        if x.nrows() == 0 {
            return Ok(0.0);
        }
        match (self.loss, y) {
            (Loss::CrossEntropy | Loss::BinaryCrossEntropy, Targets::Classes { ids, .. }) => {
                let pred = self.predict_class(x)?;
                let hits = pred.iter().zip(ids.iter()).filter(|(p, y)| p == y).count();
                Ok(hits as f64 / ids.len() as f64)
            }
            (Loss::MeanAbsoluteError, Targets::Values(v)) => {
                let pred = self.forward(x);
                let mae = (&pred - v).mapv(f64::abs).mean().expect("nonempty");
                Ok(-mae)
            }
            _ => unreachable!("check_targets verified the pairing"),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn check_targets(x: ArrayView2<f64>, y: &Targets, loss: Loss, out_dim: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    match (loss, y) {
        (Loss::CrossEntropy, Targets::Classes { ids, n_classes }) => {
            if *n_classes != out_dim {
                return Err(Error::Shape(format!(
                    "predictor has {out_dim} outputs, targets say {n_classes} classes"
                )));
            }
            if ids.iter().any(|&c| c as usize >= *n_classes) {
                return Err(Error::Value("class id outside 0..n_classes".into()));
            }
        }
        (Loss::BinaryCrossEntropy, Targets::Classes { ids, n_classes }) => {
            if *n_classes != 2 || out_dim != 1 {
                return Err(Error::Shape(
                    "binary cross-entropy needs 2 classes and 1 output unit".into(),
                ));
            }
            if ids.iter().any(|&c| c > 1) {
                return Err(Error::Value("binary class id outside {0,1}".into()));
            }
        }
        (Loss::MeanAbsoluteError, Targets::Values(v)) => {
            if v.ncols() != out_dim {
                return Err(Error::Shape(format!(
                    "predictor has {out_dim} outputs, targets have {} columns",
                    v.ncols()
                )));
            }
        }
        _ => {
            return Err(Error::Config(
                "target kind does not match the configured loss".into(),
            ))
        }
    }
    Ok(())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

fn output_dim_for(y: &Targets, loss: Loss) -> Result<usize> {
    match (loss, y) {
        (Loss::CrossEntropy, Targets::Classes { n_classes, .. }) => Ok(*n_classes),
        (Loss::BinaryCrossEntropy, Targets::Classes { n_classes, .. }) => {
            if *n_classes != 2 {
                return Err(Error::Config(
                    "binary cross-entropy needs exactly 2 classes".into(),
                ));
            }
            Ok(1)
        }
        (Loss::MeanAbsoluteError, Targets::Values(v)) => Ok(v.ncols()),
        _ => Err(Error::Config(
            "target kind does not match the configured loss".into(),
        )),
    }
}

fn subset_targets<'b>(y: &Targets<'_>, idx: &[usize], buf: &'b mut TargetBuf) -> Targets<'b> {
    match y {
        Targets::Classes { ids, n_classes } => {
            buf.classes = idx.iter().map(|&i| ids[i]).collect();
            Targets::Classes {
                ids: &buf.classes,
                n_classes: *n_classes,
            }
        }
        Targets::Values(v) => {
            buf.values = Array2::zeros((idx.len(), v.ncols()));
            for (r, &i) in idx.iter().enumerate() {
                buf.values.row_mut(r).assign(&v.row(i));
            }
            Targets::Values(buf.values.view())
        }
    }
}

#[derive(Default)]
struct TargetBuf {
    classes: Vec<u32>,
    values: Array2<f64>,
}

fn subset_rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

/// Trains with an explicit validation set. An empty validation set disables
/// early stopping and keeps the final epoch's weights.
pub fn train_mlp_with_val(
    x_train: ArrayView2<f64>,
    y_train: &Targets,
    x_val: ArrayView2<f64>,
    y_val: &Targets,
    cfg: &MLPConfig,
) -> Result<Predictor> {
    cfg.validate()?;
    let d = x_train.ncols();
    let h = cfg.hidden_dim;
    let o = output_dim_for(y_train, cfg.loss)?;
    let n = x_train.nrows();
    if n == 0 {
        return Err(Error::Training("no training samples".into()));
    }
    if x_train.iter().any(|v| !v.is_finite()) || x_val.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite embedding input".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, 0));
    let scale1 = (2.0 / d.max(1) as f64).sqrt();
    let scale2 = (2.0 / h as f64).sqrt();
    let normal = StandardNormal;
    let mut w1 = Array2::from_shape_fn((d, h), |_| {
        scale1 * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng)
    });
    let mut b1 = Array1::zeros(h);
    let mut w2 = Array2::from_shape_fn((h, o), |_| {
        scale2 * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng)
    });
    let mut b2 = Array1::zeros(o);

    let mut opt_w1 = Adam::new(d * h, cfg.learning_rate);
    let mut opt_b1 = Adam::new(h, cfg.learning_rate);
    let mut opt_w2 = Adam::new(h * o, cfg.learning_rate);
    let mut opt_b2 = Adam::new(o, cfg.learning_rate);

    let mut predictor = Predictor {
        w1: w1.clone(),
        b1: b1.clone(),
        w2: w2.clone(),
        b2: b2.clone(),
        loss: cfg.loss,
        best_epoch: 0,
        best_val_score: f64::NEG_INFINITY,
    };
    check_targets(x_train, y_train, cfg.loss, o)?;
    check_targets(x_val, y_val, cfg.loss, o)?;

    let has_val = x_val.nrows() > 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        // Forward.
        let mut z1 = x_train.dot(&w1);
        z1 += &b1;
        let a1 = z1.mapv(|v| v.max(0.0));
        let mut z2 = a1.dot(&w2);
        z2 += &b2;

        // Loss and output gradient dL/dz2 (already divided by batch size).
        let inv_n = 1.0 / n as f64;
        let (loss_value, dz2) = match (cfg.loss, y_train) {
            (Loss::CrossEntropy, Targets::Classes { ids, .. }) => {
                let mut p = z2;
                let mut loss = 0.0;
                for (r, mut row) in p.rows_mut().into_iter().enumerate() {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|v| (v - m).exp());
                    let s = row.sum();
                    row.mapv_inplace(|v| v / s);
                    loss -= (row[ids[r] as usize].max(1e-300)).ln();
                }
                for (r, mut row) in p.rows_mut().into_iter().enumerate() {
                    row[ids[r] as usize] -= 1.0;
                    row.mapv_inplace(|v| v * inv_n);
                }
                (loss * inv_n, p)
            }
            (Loss::BinaryCrossEntropy, Targets::Classes { ids, .. }) => {
                let mut p = z2;
                p.mapv_inplace(sigmoid);
                let mut loss = 0.0;
                for (r, mut row) in p.rows_mut().into_iter().enumerate() {
                    let y = ids[r] as f64;
                    let pr = row[0].clamp(1e-12, 1.0 - 1e-12);
                    loss -= y * pr.ln() + (1.0 - y) * (1.0 - pr).ln();
                    row[0] = (row[0] - y) * inv_n;
                }
                (loss * inv_n, p)
            }
            (Loss::MeanAbsoluteError, Targets::Values(yv)) => {
                let diff = &z2 - yv;
                let loss = diff.mapv(f64::abs).mean().expect("nonempty");
                let scale = inv_n / o as f64;
                let g = diff.mapv(|v| {
                    if v > 0.0 {
                        scale
                    } else if v < 0.0 {
                        -scale
                    } else {
                        0.0
                    }
                });
                (loss, g)
            }
            _ => unreachable!("output_dim_for validated the pairing"),
        };

        if !loss_value.is_finite() {
            return Err(Error::Training(format!(
                "non-finite training loss at epoch {epoch}"
            )));
        }

        // Backward. Gradients go through `general_mat_mul` into standard
        // layout buffers so they can be read as flat slices below.
        let mut gw2 = Array2::zeros((h, o));
        general_mat_mul(1.0, &a1.t(), &dz2, 0.0, &mut gw2);
        gw2.scaled_add(cfg.weight_decay, &w2);
        let gb2 = dz2.sum_axis(Axis(0));
        let mut da1 = dz2.dot(&w2.t());
        ndarray::Zip::from(&mut da1).and(&z1).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let mut gw1 = Array2::zeros((d, h));
        general_mat_mul(1.0, &x_train.t(), &da1, 0.0, &mut gw1);
        gw1.scaled_add(cfg.weight_decay, &w1);
        let gb1 = da1.sum_axis(Axis(0));

        opt_w1.step(w1.as_slice_mut().expect("contiguous"), gw1.as_slice().expect("contiguous"));
        opt_b1.step(b1.as_slice_mut().expect("contiguous"), gb1.as_slice().expect("contiguous"));
        opt_w2.step(w2.as_slice_mut().expect("contiguous"), gw2.as_slice().expect("contiguous"));
        opt_b2.step(b2.as_slice_mut().expect("contiguous"), gb2.as_slice().expect("contiguous"));

        // Validation with patience.
        let current = Predictor {
            w1: w1.clone(),
            b1: b1.clone(),
            w2: w2.clone(),
            b2: b2.clone(),
            loss: cfg.loss,
            best_epoch: epoch,
            best_val_score: f64::NEG_INFINITY,
        };
        if has_val {
            let score = current.score(x_val, y_val)?;
            if score > best_score {
                best_score = score;
                since_best = 0;
                predictor = current;
                predictor.best_val_score = score;
            } else {
                if score == best_score {
                    // Ties keep the most recent weights: extra training that
                    // does not hurt validation is worth keeping.
                    predictor = current;
                    predictor.best_val_score = score;
                }
                since_best += 1;
                if since_best > cfg.patience {
                    break;
                }
            }
        } else {
            predictor = current;
            predictor.best_val_score = 0.0;
        }
    }
    Ok(predictor)
}

/// Trains with an internal deterministic hold-out of `val_split` of the
/// samples (0 disables validation and early stopping).
pub fn train_mlp(
    x: ArrayView2<f64>,
    y: &Targets,
    cfg: &MLPConfig,
    val_split: f64,
) -> Result<Predictor> {
    if !(0.0..1.0).contains(&val_split) {
        return Err(Error::Config(format!(
            "val_split {val_split} outside [0, 1)"
        )));
    }
    let n = x.nrows();
    let n_val = (n as f64 * val_split).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, 0));
    for i in (1..n).rev() {
        idx.swap(i, rand::Rng::random_range(&mut rng, 0..=i));
    }
    let (val_idx, train_idx) = idx.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let x_train = subset_rows(x, &train_idx);
    let x_val = subset_rows(x, &val_idx);
    let mut tb = TargetBuf::default();
    let mut vb = TargetBuf::default();
    let y_train = subset_targets(y, &train_idx, &mut tb);
    let y_val = subset_targets(y, &val_idx, &mut vb);
    train_mlp_with_val(x_train.view(), &y_train, x_val.view(), &y_val, cfg)
}
