//! Risk-assessment protocols: outer k-fold cross validation with an inner
//! hold-out that selects the (stack, embedding, predictor) configuration per
//! fold. Every stack and predictor seed is derived from the protocol seed,
//! the fold, and the grid-job index, so runs are bit-reproducible and folds
//! parallelize freely.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{graph_embedding, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::graph::{Dataset, Target, TargetKind};
use crate::stack::{derive_seed, infer_stack, train_stack, StackConfig, StateMode};

use super::mlp::{train_mlp_with_val, Loss, MLPConfig, Targets};

/// Hyper-parameter grid searched inside each fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub stacks: Vec<StackConfig>,
    pub embeddings: Vec<EmbeddingConfig>,
    pub mlps: Vec<MLPConfig>,
}

impl GridSpec {
    /// Single-configuration grid.
    pub fn single(stack: StackConfig, embedding: EmbeddingConfig, mlp: MLPConfig) -> Self {
        GridSpec {
            stacks: vec![stack],
            embeddings: vec![embedding],
            mlps: vec![mlp],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.stacks.is_empty() || self.embeddings.is_empty() || self.mlps.is_empty() {
            return Err(Error::Config("empty hyper-parameter grid".into()));
        }
        for s in &self.stacks {
            s.validate()?;
        }
        for m in &self.mlps {
            m.validate()?;
        }
        Ok(())
    }

    fn jobs(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for si in 0..self.stacks.len() {
            for ei in 0..self.embeddings.len() {
                for mi in 0..self.mlps.len() {
                    out.push((si, ei, mi));
                }
            }
        }
        out
    }
}

/// Configuration selected by the inner hold-out of one fold, with the
/// derived seeds that were actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenConfig {
    pub stack: StackConfig,
    pub embedding: EmbeddingConfig,
    pub mlp: MLPConfig,
    pub validation_score: f64,
}

/// Outcome of one evaluation protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// "classification" (accuracy, higher better) or "regression" (MAE,
    /// lower better).
    pub task: String,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub chosen: Vec<ChosenConfig>,
    pub wall_time_secs: f64,
    pub seed: u64,
    /// The full grid, echoed for provenance.
    pub grid: GridSpec,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Outer fold assignment. Classification folds deal shuffled members class by
/// class so label proportions stay balanced.
fn fold_assignment(
    n: usize,
    folds: usize,
    labels: Option<&[u32]>,
    seed: u64,
) -> Vec<Vec<usize>> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF01D, 0));
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    if let Some(labels) = labels {
        // Stable sort by class keeps the shuffled order within each class.
        order.sort_by_key(|&i| labels[i]);
    }
    let mut out = vec![Vec::new(); folds];
    for (counter, &i) in order.iter().enumerate() {
        out[counter % folds].push(i);
    }
    for f in out.iter_mut() {
        f.sort_unstable();
    }
    out
}

/// Split-provenance check: the three index sets must be pairwise disjoint and
/// cover the dataset.
fn check_provenance(train: &[usize], val: &[usize], test: &[usize], n: usize) -> Result<()> {
    let mut seen = HashSet::with_capacity(n);
    for &i in train.iter().chain(val.iter()).chain(test.iter()) {
        if i >= n || !seen.insert(i) {
            return Err(Error::Integrity(format!(
                "fold splits overlap or leave the dataset (index {i})"
            )));
        }
    }
    if seen.len() != n {
        return Err(Error::Integrity(format!(
            "fold splits cover {} of {n} graphs",
            seen.len()
        )));
    }
    Ok(())
}

enum TaskTargets {
    Classes { ids: Vec<u32>, n_classes: usize },
    Values(Array2<f64>),
}

impl TaskTargets {
    fn classes(ds: &Dataset) -> Result<(Vec<u32>, usize)> {
        let n_classes = match ds.meta.target_kind {
            TargetKind::Class { n_classes } => n_classes,
            other => {
                return Err(Error::Config(format!(
                    "classification needs class targets, dataset has {other:?}"
                )))
            }
        };
        let mut ids = Vec::with_capacity(ds.n_graphs());
        for (k, g) in ds.graphs.iter().enumerate() {
            match &g.target {
                Some(Target::Class(c)) => ids.push(*c),
                other => {
                    return Err(Error::Config(format!(
                        "graph {k} lacks a class target ({other:?})"
                    )))
                }
            }
        }
        Ok((ids, n_classes))
    }

    fn values(ds: &Dataset) -> Result<Array2<f64>> {
        let dim = match ds.meta.target_kind {
            TargetKind::Values { dim } => dim,
            other => {
                return Err(Error::Config(format!(
                    "regression needs value targets, dataset has {other:?}"
                )))
            }
        };
        let mut y = Array2::zeros((ds.n_graphs(), dim));
        for (k, g) in ds.graphs.iter().enumerate() {
            match &g.target {
                Some(Target::Values(v)) if v.len() == dim => y.row_mut(k).assign(v),
                other => {
                    return Err(Error::Config(format!(
                        "graph {k} lacks a {dim}-dimensional value target ({other:?})"
                    )))
                }
            }
        }
        Ok(y)
    }

    fn subset_targets<'b>(&self, idx: &[usize], buf: &'b mut SubsetBuf) -> Targets<'b> {
        match self {
            TaskTargets::Classes { ids, n_classes } => {
                buf.classes = idx.iter().map(|&i| ids[i]).collect();
                Targets::Classes {
                    ids: &buf.classes,
                    n_classes: *n_classes,
                }
            }
            TaskTargets::Values(y) => {
                buf.values = Array2::zeros((idx.len(), y.ncols()));
                for (r, &i) in idx.iter().enumerate() {
                    buf.values.row_mut(r).assign(&y.row(i));
                }
                Targets::Values(buf.values.view())
            }
        }
    }
}

#[derive(Default)]
struct SubsetBuf {
    classes: Vec<u32>,
    values: Array2<f64>,
}

struct JobOutcome {
    val_score: f64,
    test_score: f64,
    chosen: ChosenConfig,
}

/// Runs one grid job inside one fold: train the stack on the inner-train
/// graphs, select on the hold-out, measure once on the outer test set.
#[allow(clippy::too_many_arguments)]
fn run_job(
    ds: &Dataset,
    targets: &TaskTargets,
    grid: &GridSpec,
    job: (usize, usize, usize),
    job_idx: usize,
    fold: usize,
    seed: u64,
    loss: Loss,
    train_idx: &[usize],
    val_idx: &[usize],
    test_idx: &[usize],
) -> Result<JobOutcome> {
    let (si, ei, mi) = job;
    let stack_cfg = StackConfig {
        seed: derive_seed(seed, fold as u64, 2 * job_idx as u64),
        ..grid.stacks[si].clone()
    };
    let emb_cfg = grid.embeddings[ei];
    let mlp_cfg = MLPConfig {
        seed: derive_seed(seed, fold as u64, 2 * job_idx as u64 + 1),
        loss,
        ..grid.mlps[mi].clone()
    };

    let train_ds = ds.subset(train_idx);
    let val_ds = ds.subset(val_idx);
    let test_ds = ds.subset(test_idx);

    let (model, fs_train) = train_stack(&train_ds, &stack_cfg)?;
    let fs_val = infer_stack(&model, &val_ds)?;
    let x_train = graph_embedding(&train_ds, &fs_train, &emb_cfg)?;
    let x_val = graph_embedding(&val_ds, &fs_val, &emb_cfg)?;

    let mut train_buf = SubsetBuf::default();
    let mut val_buf = SubsetBuf::default();
    let y_train = targets.subset_targets(train_idx, &mut train_buf);
    let y_val = targets.subset_targets(val_idx, &mut val_buf);

    let predictor = train_mlp_with_val(x_train.view(), &y_train, x_val.view(), &y_val, &mlp_cfg)?;
    let val_score = predictor.best_val_score;

    let fs_test = infer_stack(&model, &test_ds)?;
    let x_test = graph_embedding(&test_ds, &fs_test, &emb_cfg)?;
    let mut test_buf = SubsetBuf::default();
    let y_test = targets.subset_targets(test_idx, &mut test_buf);
    let raw = predictor.score(x_test.view(), &y_test)?;
    // `score` is higher-better (negative MAE for regression); reports carry
    // the plain metric.
    let test_score = match loss {
        Loss::MeanAbsoluteError => -raw,
        _ => raw,
    };

    Ok(JobOutcome {
        val_score,
        test_score,
        chosen: ChosenConfig {
            stack: stack_cfg,
            embedding: emb_cfg,
            mlp: mlp_cfg,
            validation_score: val_score,
        },
    })
}

fn evaluate(
    ds: &Dataset,
    grid: &GridSpec,
    folds: usize,
    seed: u64,
    loss: Loss,
    task: &str,
) -> Result<EvalReport> {
    let start = Instant::now();
    grid.validate()?;
    if folds < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    let n = ds.n_graphs();
    if n < folds {
        return Err(Error::Config(format!(
            "{n} graphs cannot fill {folds} folds"
        )));
    }
    let targets = match loss {
        Loss::MeanAbsoluteError => {
            let y = TaskTargets::values(ds)?;
            TaskTargets::Values(y)
        }
        _ => {
            let (ids, n_classes) = TaskTargets::classes(ds)?;
            TaskTargets::Classes { ids, n_classes }
        }
    };
    let labels_for_folds = match &targets {
        TaskTargets::Classes { ids, .. } => Some(ids.as_slice()),
        TaskTargets::Values(_) => None,
    };
    let assignment = fold_assignment(n, folds, labels_for_folds, seed);
    let jobs = grid.jobs();

    let fold_results: Vec<Result<(f64, ChosenConfig)>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            use rand::Rng;
            use rand::SeedableRng;
            let test_idx = &assignment[fold];
            let mut trainval: Vec<usize> = (0..n).filter(|i| !test_idx.contains(i)).collect();
            // Inner hold-out: deterministic shuffle, last tenth validates.
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, fold as u64, 0x590A));
            for i in (1..trainval.len()).rev() {
                trainval.swap(i, rng.random_range(0..=i));
            }
            let n_val = ((trainval.len() as f64) * 0.1).floor().max(1.0) as usize;
            if n_val >= trainval.len() {
                return Err(Error::Config(format!(
                    "fold {fold} leaves no training graphs after the hold-out"
                )));
            }
            let (val_idx, train_idx) = trainval.split_at(n_val);
            let mut val_idx = val_idx.to_vec();
            let mut train_idx = train_idx.to_vec();
            val_idx.sort_unstable();
            train_idx.sort_unstable();
            check_provenance(&train_idx, &val_idx, test_idx, n)?;

            let outcomes: Vec<Result<JobOutcome>> = jobs
                .par_iter()
                .enumerate()
                .map(|(job_idx, &job)| {
                    run_job(
                        ds, &targets, grid, job, job_idx, fold, seed, loss, &train_idx,
                        &val_idx, test_idx,
                    )
                })
                .collect();
            let mut best: Option<JobOutcome> = None;
            for o in outcomes {
                let o = o?;
                let better = match &best {
                    None => true,
                    Some(b) => o.val_score > b.val_score,
                };
                if better {
                    best = Some(o);
                }
            }
            let best = best.expect("grid is nonempty");
            Ok((best.test_score, best.chosen))
        })
        .collect();

    let mut fold_scores = Vec::with_capacity(folds);
    let mut chosen = Vec::with_capacity(folds);
    for r in fold_results {
        let (score, c) = r?;
        fold_scores.push(score);
        chosen.push(c);
    }
    let (mean, std) = mean_std(&fold_scores);
    Ok(EvalReport {
        task: task.into(),
        fold_scores,
        mean,
        std,
        chosen,
        wall_time_secs: start.elapsed().as_secs_f64(),
        seed,
        grid: grid.clone(),
    })
}

/// Graph classification: outer `folds`-fold cross validation reporting
/// accuracy, inner hold-out selecting the configuration.
pub fn evaluate_classification(
    ds: &Dataset,
    grid: &GridSpec,
    folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    evaluate(ds, grid, folds, seed, Loss::CrossEntropy, "classification")
}

/// Graph regression: identical protocol with mean absolute error (multiple
/// targets average their per-target MAE).
pub fn evaluate_regression(
    ds: &Dataset,
    grid: &GridSpec,
    folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    evaluate(
        ds,
        grid,
        folds,
        seed,
        Loss::MeanAbsoluteError,
        "regression",
    )
}

fn state_mode_name(m: StateMode) -> &'static str {
    match m {
        StateMode::Discrete => "discrete",
        StateMode::Continuous => "continuous",
    }
}

/// Writes a report as pretty-printed JSON.
pub fn write_report_json(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.flush()?;
    Ok(())
}

/// Writes the per-fold table as CSV with the selected configuration
/// flattened into columns.
pub fn write_report_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "fold,score,n_layers,vertex_states,edge_states,state_mode,representation,readout,\
         include_edge_unigrams,hidden_dim,learning_rate,weight_decay,validation_score"
    )?;
    for (f, (score, c)) in report
        .fold_scores
        .iter()
        .zip(report.chosen.iter())
        .enumerate()
    {
        let rep = match c.embedding.representation {
            crate::embeddings::Representation::Unigram => "unigram",
            crate::embeddings::Representation::Unibigram => "unibigram",
        };
        let ro = match c.embedding.readout {
            crate::embeddings::Readout::Mean => "mean",
            crate::embeddings::Readout::Sum => "sum",
        };
        writeln!(
            w,
            "{f},{score},{},{},{},{},{rep},{ro},{},{},{},{},{}",
            c.stack.n_layers,
            c.stack.vertex_states,
            c.stack.edge_states,
            state_mode_name(c.stack.state_mode),
            c.embedding.include_edge_unigrams,
            c.mlp.hidden_dim,
            c.mlp.learning_rate,
            c.mlp.weight_decay,
            c.validation_score,
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeFeatures, Graph, VertexFeatures};
    use crate::synth::{label_majority_dataset, regression_dataset};
    use approx::assert_abs_diff_eq;

    fn tiny_grid() -> GridSpec {
        GridSpec::single(
            StackConfig {
                n_layers: 1,
                vertex_states: 2,
                edge_states: 2,
                em_iterations: 8,
                ..StackConfig::default()
            },
            EmbeddingConfig::default(),
            MLPConfig {
                hidden_dim: 8,
                max_epochs: 300,
                patience: 60,
                ..MLPConfig::default()
            },
        )
    }

    fn single_class_dataset(n: usize) -> Dataset {
        let graphs: Vec<Graph> = (0..n)
            .map(|_| Graph {
                n_vertices: 3,
                edges: vec![(0, 1), (1, 0), (1, 2), (2, 1)],
                vertex_features: VertexFeatures::Categorical(vec![0, 1, 0]),
                edge_features: EdgeFeatures::Absent,
                target: Some(crate::graph::Target::Class(0)),
            })
            .collect();
        Dataset::from_graphs(graphs, true).unwrap()
    }

    #[test]
    fn single_class_scores_perfectly() {
        let ds = single_class_dataset(20);
        let report = evaluate_classification(&ds, &tiny_grid(), 10, 1).unwrap();
        assert_eq!(report.fold_scores.len(), 10);
        for &s in &report.fold_scores {
            assert_abs_diff_eq!(s, 1.0);
        }
        assert_abs_diff_eq!(report.mean, 1.0);
        assert_abs_diff_eq!(report.std, 0.0);
    }

    #[test]
    fn too_few_graphs_is_config_error() {
        let ds = single_class_dataset(5);
        assert!(matches!(
            evaluate_classification(&ds, &tiny_grid(), 10, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn classification_is_reproducible_and_learns_majority_labels() {
        let ds = label_majority_dataset(60, 3).unwrap();
        let r1 = evaluate_classification(&ds, &tiny_grid(), 5, 7).unwrap();
        let r2 = evaluate_classification(&ds, &tiny_grid(), 5, 7).unwrap();
        // Wall time is the one legitimately nondeterministic field.
        let mut t1 = r1.clone();
        let mut t2 = r2.clone();
        t1.wall_time_secs = 0.0;
        t2.wall_time_secs = 0.0;
        assert_eq!(t1, t2);
        assert_eq!(r1.fold_scores.len(), 5);
        assert!(
            r1.mean >= 0.8,
            "majority-label task should be easy, accuracy {}",
            r1.mean
        );
    }

    #[test]
    fn regression_reports_mae() {
        let ds = regression_dataset(30, 1, 5).unwrap();
        let report = evaluate_regression(&ds, &tiny_grid(), 5, 9).unwrap();
        assert_eq!(report.task, "regression");
        assert_eq!(report.fold_scores.len(), 5);
        // Fraction targets lie in [0,1]: even the mean predictor beats 0.5.
        assert!(report.mean < 0.5, "MAE {}", report.mean);
        assert!(report.fold_scores.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn regression_target_mismatch_is_config_error() {
        let ds = label_majority_dataset(20, 1).unwrap();
        assert!(matches!(
            evaluate_regression(&ds, &tiny_grid(), 5, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn report_serialization_round_trip() {
        let ds = single_class_dataset(12);
        let report = evaluate_classification(&ds, &tiny_grid(), 4, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let jpath = dir.path().join("report.json");
        write_report_json(&report, &jpath).unwrap();
        let text = std::fs::read_to_string(&jpath).unwrap();
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report.fold_scores, back.fold_scores);
        assert_eq!(report.grid, back.grid);

        let cpath = dir.path().join("report.csv");
        write_report_csv(&report, &cpath).unwrap();
        let csv = std::fs::read_to_string(&cpath).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("fold,score,n_layers"));
        assert!(lines[1].starts_with("0,1,"));
    }

    #[test]
    fn provenance_check_rejects_overlap() {
        assert!(check_provenance(&[0, 1], &[2], &[3], 4).is_ok());
        assert!(check_provenance(&[0, 1], &[1], &[2], 3).is_err());
        assert!(check_provenance(&[0], &[1], &[2], 4).is_err());
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let labels: Vec<u32> = (0..30).map(|i| (i < 10) as u32).collect();
        let folds = fold_assignment(30, 5, Some(&labels), 3);
        for f in &folds {
            assert_eq!(f.len(), 6);
            let ones = f.iter().filter(|&&i| labels[i] == 1).count();
            // 10 of 30 graphs are class 1: each fold of 6 gets 2.
            assert_eq!(ones, 2);
        }
    }
}
