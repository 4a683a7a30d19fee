//! Command-line front end. A JSON run configuration fully determines each
//! run (the only environment dependence is the thread count); subcommands
//! cover training, embedding export, evaluation and edge-state statistics.
//!
//! Exit codes: 0 all outputs written, 1 runtime failure, 2 usage error
//! (bad flags, malformed or inconsistent configuration, missing paths).
//! Partially written outputs are removed on failure. Logs go to stderr and
//! are controlled by `RUST_LOG`.
//!
//! The run-level `seed` (overridable with `--seed`) seeds every component;
//! seed fields inside the embedded stack and predictor configurations are
//! ignored. Grid entries for `eval` receive derived seeds per fold and job.

use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::downstream::eval::{
    evaluate_classification, evaluate_regression, write_report_csv, write_report_json, GridSpec,
};
use crate::downstream::linkpred::{
    labels_of, linkpred_prepare, train_baseline_link_predictor, train_link_predictor,
};
use crate::downstream::metrics::{accuracy_at_half, roc_auc};
use crate::downstream::mlp::MLPConfig;
use crate::embeddings::{
    edge_embedding, graph_embedding, vertex_embedding, write_embedding_csv,
    write_embedding_matrix, EmbeddingConfig, EmbeddingScope,
};
use crate::error::{Error, Result};
use crate::graph::{degree_features, Dataset};
use crate::io::{load_jsonl, load_tu_dataset};
use crate::stack::{
    edge_state_histogram, infer_stack, load_model, save_model, train_stack,
    write_training_log_csv, StackConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Regress,
    Linkpred,
    Embed,
    Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// TU-style text directory (`<NAME>_A.txt` and friends).
    Tu,
    /// One JSON graph per line.
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: DataFormat,
    /// Symmetrize edges on load and score link candidates in both directions.
    #[serde(default = "default_true")]
    pub undirected: bool,
    /// Replace vertex features with vertex degrees after loading, for
    /// datasets that carry no vertex information of their own.
    #[serde(default)]
    pub degrees: bool,
}

fn default_true() -> bool {
    true
}

fn default_folds() -> usize {
    10
}

/// Link-prediction split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSplitSpec {
    pub val_frac: f64,
    pub test_frac: f64,
    pub neg_ratio: f64,
}

impl Default for LinkSplitSpec {
    fn default() -> Self {
        LinkSplitSpec {
            val_frac: 0.1,
            test_frac: 0.2,
            neg_ratio: 1.0,
        }
    }
}

/// One JSON file describing a complete run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub stack: StackConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub mlp: MLPConfig,
    /// Grid alternatives for `eval`; the singleton field is used when empty.
    #[serde(default)]
    pub stack_grid: Vec<StackConfig>,
    #[serde(default)]
    pub embedding_grid: Vec<EmbeddingConfig>,
    #[serde(default)]
    pub mlp_grid: Vec<MLPConfig>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub linkpred: LinkSplitSpec,
    /// Rows written by `embed`: per-graph, per-vertex or per-edge.
    #[serde(default)]
    pub embed_scope: EmbeddingScope,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("malformed config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dataset.path.exists() {
            return Err(Error::Config(format!(
                "dataset path {} does not exist",
                self.dataset.path.display()
            )));
        }
        self.stack.validate()?;
        self.mlp.validate()?;
        for s in &self.stack_grid {
            s.validate()?;
        }
        for m in &self.mlp_grid {
            m.validate()?;
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = match self.dataset.format {
            DataFormat::Tu => load_tu_dataset(&self.dataset.path, self.dataset.undirected)?,
            DataFormat::Jsonl => load_jsonl(&self.dataset.path, self.dataset.undirected)?,
        };
        Ok(if self.dataset.degrees {
            degree_features(&ds)
        } else {
            ds
        })
    }

    /// Effective grid for `eval`: explicit grids, else the singletons.
    pub fn grid(&self) -> GridSpec {
        let stacks = if self.stack_grid.is_empty() {
            vec![self.stack.clone()]
        } else {
            self.stack_grid.clone()
        };
        let embeddings = if self.embedding_grid.is_empty() {
            vec![self.embedding]
        } else {
            self.embedding_grid.clone()
        };
        let mlps = if self.mlp_grid.is_empty() {
            vec![self.mlp.clone()]
        } else {
            self.mlp_grid.clone()
        };
        GridSpec {
            stacks,
            embeddings,
            mlps,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ecgmm",
    version,
    about = "Layered vertex/edge Bayesian networks for graph embeddings"
)]
pub struct Cli {
    /// Rayon thread count (default: all available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a stack and write the model plus its training log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run seed (overrides the config's `seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Load a model, infer frozen states and write embeddings (CSV + binary).
    Embed {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the task's evaluation protocol and write the report (JSON + CSV).
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the per-layer edge-state occupancy histogram.
    Stats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Files created by one command; on failure every written file is removed so
/// a nonzero exit never leaves partial outputs behind.
#[derive(Default)]
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn track(&mut self, p: PathBuf) -> PathBuf {
        self.written.push(p.clone());
        p
    }

    fn cleanup(&self) {
        for p in &self.written {
            if p.exists() {
                if let Err(e) = std::fs::remove_file(p) {
                    log::warn!("could not remove partial output {}: {e}", p.display());
                }
            }
        }
    }
}

fn resolve_out_dir(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ecgmm-out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn apply_seed(cfg: &mut RunConfig, flag: Option<u64>) {
    if let Some(s) = flag {
        cfg.seed = s;
    }
    cfg.stack.seed = cfg.seed;
    cfg.mlp.seed = cfg.seed;
}

fn cmd_train(cfg: &RunConfig, dir: &Path, outs: &mut Outputs) -> Result<()> {
    let ds = cfg.load_dataset()?;
    log::info!(
        "training stack on {} graphs ({} layers)",
        ds.n_graphs(),
        cfg.stack.n_layers
    );
    let (model, _fs) = train_stack(&ds, &cfg.stack)?;
    let model_path = outs.track(dir.join("model.json"));
    save_model(&model, &model_path)?;
    let log_path = outs.track(dir.join("training_log.csv"));
    write_training_log_csv(&model, &log_path)?;
    log::info!("wrote {} and {}", model_path.display(), log_path.display());
    Ok(())
}

fn cmd_embed(cfg: &RunConfig, model_path: &Path, dir: &Path, outs: &mut Outputs) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let model = load_model(model_path)?;
    let fs = infer_stack(&model, &ds)?;
    let x = match cfg.embed_scope {
        EmbeddingScope::Graph => graph_embedding(&ds, &fs, &cfg.embedding)?,
        EmbeddingScope::Vertex => vertex_embedding(&ds, &fs, &cfg.embedding)?,
        EmbeddingScope::Edge => edge_embedding(&ds, &fs)?,
    };
    let csv_path = outs.track(dir.join("embeddings.csv"));
    write_embedding_csv(&csv_path, cfg.embed_scope, &ds, x.view())?;
    let bin_path = outs.track(dir.join("embeddings.bin"));
    write_embedding_matrix(&bin_path, x.view())?;
    log::info!(
        "wrote {} rows x {} columns to {} and {}",
        x.nrows(),
        x.ncols(),
        csv_path.display(),
        bin_path.display()
    );
    Ok(())
}

/// Link-prediction protocol outcome for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub task: String,
    pub accuracy: f64,
    pub auc: f64,
    pub baseline_accuracy: f64,
    pub baseline_auc: f64,
    pub n_test_pairs: usize,
    pub seed: u64,
}

fn run_linkpred(cfg: &RunConfig, ds: &Dataset) -> Result<LinkReport> {
    let g = ds
        .graphs
        .first()
        .ok_or_else(|| Error::Config("link prediction needs a dataset with one graph".into()))?;
    if ds.n_graphs() > 1 {
        log::warn!(
            "link prediction uses the first of {} graphs",
            ds.n_graphs()
        );
    }
    let lp = &cfg.linkpred;
    let split = linkpred_prepare(
        g,
        cfg.dataset.undirected,
        lp.val_frac,
        lp.test_frac,
        lp.neg_ratio,
        cfg.seed,
    )?;
    let train_ds = Dataset::from_graphs(vec![split.train_graph.clone()], cfg.dataset.undirected)?;
    let (model, fs) = train_stack(&train_ds, &cfg.stack)?;
    let predictor = train_link_predictor(&model, &fs, &split, &cfg.mlp)?;
    // The baseline is the edge-blind reduction: a separate stack whose single
    // edge state collapses neighbor grouping, scored on mean vertex
    // embeddings. Same splits, same budget.
    let base_cfg = StackConfig {
        edge_states: 1,
        ..cfg.stack.clone()
    };
    let (_, base_fs) = train_stack(&train_ds, &base_cfg)?;
    let baseline = train_baseline_link_predictor(&base_fs, &split, &cfg.mlp)?;
    let labels = labels_of(&split.test_pairs);
    let scores = predictor.score_pairs(&model, &fs, &split.test_pairs)?;
    let base_scores = baseline.score_pairs(&base_fs, &split.test_pairs)?;
    Ok(LinkReport {
        task: "linkpred".into(),
        accuracy: accuracy_at_half(&scores, &labels)?,
        auc: roc_auc(&scores, &labels)?,
        baseline_accuracy: accuracy_at_half(&base_scores, &labels)?,
        baseline_auc: roc_auc(&base_scores, &labels)?,
        n_test_pairs: split.test_pairs.len(),
        seed: cfg.seed,
    })
}

fn write_link_report_csv(report: &LinkReport, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "accuracy,auc,baseline_accuracy,baseline_auc,n_test_pairs,seed"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{}",
        report.accuracy,
        report.auc,
        report.baseline_accuracy,
        report.baseline_auc,
        report.n_test_pairs,
        report.seed
    )?;
    w.flush()?;
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, dir: &Path, outs: &mut Outputs) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let json_path = outs.track(dir.join("report.json"));
    let csv_path = outs.track(dir.join("report.csv"));
    match cfg.task {
        Task::Classify | Task::Regress => {
            let grid = cfg.grid();
            let report = if cfg.task == Task::Classify {
                evaluate_classification(&ds, &grid, cfg.folds, cfg.seed)?
            } else {
                evaluate_regression(&ds, &grid, cfg.folds, cfg.seed)?
            };
            write_report_json(&report, &json_path)?;
            write_report_csv(&report, &csv_path)?;
            log::info!(
                "{}: mean {:.4} +- {:.4} over {} folds",
                report.task,
                report.mean,
                report.std,
                report.fold_scores.len()
            );
        }
        Task::Linkpred => {
            let report = run_linkpred(cfg, &ds)?;
            let file = File::create(&json_path)?;
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, &report)?;
            w.flush()?;
            write_link_report_csv(&report, &csv_path)?;
            log::info!(
                "linkpred: accuracy {:.4} (auc {:.4}), baseline {:.4} (auc {:.4})",
                report.accuracy,
                report.auc,
                report.baseline_accuracy,
                report.baseline_auc
            );
        }
        Task::Embed | Task::Stats => {
            return Err(Error::Config(
                "eval needs task classify, regress or linkpred".into(),
            ))
        }
    }
    Ok(())
}

fn cmd_stats(cfg: &RunConfig, model_path: &Path, dir: &Path, outs: &mut Outputs) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let model = load_model(model_path)?;
    let fs = infer_stack(&model, &ds)?;
    let hist = edge_state_histogram(&fs);
    let path = outs.track(dir.join("edge_states.csv"));
    let file = File::create(&path)?;
    let mut w = BufWriter::new(file);
    write!(w, "layer")?;
    for i in 0..hist.ncols() {
        write!(w, ",state_{i}")?;
    }
    writeln!(w)?;
    for (l, row) in hist.rows().into_iter().enumerate() {
        write!(w, "{l}")?;
        for &c in row {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Executes a parsed invocation. Every file the command produces is removed
/// again if it returns an error.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut outs = Outputs::default();
    let result = match &cli.command {
        Command::Train { config, out, seed } => {
            let mut cfg = RunConfig::load(config)?;
            apply_seed(&mut cfg, *seed);
            let dir = resolve_out_dir(&cfg, out)?;
            cmd_train(&cfg, &dir, &mut outs)
        }
        Command::Embed {
            config,
            model,
            out,
            seed,
        } => {
            let mut cfg = RunConfig::load(config)?;
            apply_seed(&mut cfg, *seed);
            if !model.exists() {
                return Err(Error::Config(format!(
                    "model file {} does not exist",
                    model.display()
                )));
            }
            let dir = resolve_out_dir(&cfg, out)?;
            cmd_embed(&cfg, model, &dir, &mut outs)
        }
        Command::Eval { config, out, seed } => {
            let mut cfg = RunConfig::load(config)?;
            apply_seed(&mut cfg, *seed);
            let dir = resolve_out_dir(&cfg, out)?;
            cmd_eval(&cfg, &dir, &mut outs)
        }
        Command::Stats { config, model, out } => {
            let cfg = RunConfig::load(config)?;
            if !model.exists() {
                return Err(Error::Config(format!(
                    "model file {} does not exist",
                    model.display()
                )));
            }
            let dir = resolve_out_dir(&cfg, out)?;
            cmd_stats(&cfg, model, &dir, &mut outs)
        }
    };
    if result.is_err() {
        outs.cleanup();
    }
    result
}

/// Parses arguments and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Clap prints help/version to stdout with exit 0, errors to
            // stderr with exit 2.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
