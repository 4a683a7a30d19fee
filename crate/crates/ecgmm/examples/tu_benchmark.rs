//! Full benchmark protocol on a real TU-format dataset: 10-fold cross
//! validation over the complete hyper-parameter grid from configs/.
//!
//! This is an HOURS-scale run on NCI1-sized data (thousands of graphs,
//! dozens of stack configurations, deep stacks); it is deliberately not part
//! of the test suite. Desk-scale behavior is covered by the other examples
//! and by `cargo test`.
//!
//!     cargo run --release --example tu_benchmark -- <dataset-dir> [config.json]
//!
//! TU-format datasets (NCI1, COLLAB, ...) are distributed as part of the
//! public TUDataset collection; drop the unpacked directory (the one holding
//! `<name>_A.txt`) under data/ or pass its path.

use std::time::Instant;

use ecgmm::cli::RunConfig;
use ecgmm::downstream::{evaluate_classification, evaluate_regression, write_report_json};
use ecgmm::cli::Task;

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(data_dir) = args.next() else {
        eprintln!("usage: tu_benchmark <dataset-dir> [config.json]");
        eprintln!();
        eprintln!("no dataset directory given; nothing to do.");
        eprintln!("example: cargo run --release --example tu_benchmark -- data/NCI1 configs/nci1.json");
        return;
    };
    let config_path = args.next().unwrap_or_else(|| "configs/nci1.json".into());

    let mut cfg = RunConfig::load(&config_path).unwrap();
    cfg.dataset.path = data_dir.clone().into();
    cfg.validate().unwrap();

    let ds = cfg.load_dataset().unwrap();
    let grid = cfg.grid();
    let jobs = grid.stacks.len() * grid.embeddings.len() * grid.mlps.len();
    println!(
        "{}: {} graphs, {} fold(s) x {} grid configurations",
        data_dir,
        ds.n_graphs(),
        cfg.folds,
        jobs
    );
    println!("this evaluates every configuration in every fold; expect hours, not minutes");

    let t0 = Instant::now();
    let report = match cfg.task {
        Task::Classify => evaluate_classification(&ds, &grid, cfg.folds, cfg.seed).unwrap(),
        Task::Regress => evaluate_regression(&ds, &grid, cfg.folds, cfg.seed).unwrap(),
        other => panic!("config task {other:?} is not a k-fold benchmark task"),
    };
    println!(
        "{}: {:.4} +- {:.4} in {:.1?}",
        report.task, report.mean, report.std, t0.elapsed()
    );
    for (fold, chosen) in report.chosen.iter().enumerate() {
        println!(
            "fold {fold}: layers={} C_E={} {:?}/{:?} lr={} -> val {:.4}, test {:.4}",
            chosen.stack.n_layers,
            chosen.stack.edge_states,
            chosen.embedding.representation,
            chosen.stack.state_mode,
            chosen.mlp.learning_rate,
            chosen.validation_score,
            report.fold_scores[fold]
        );
    }

    let out = format!("{}_report.json", data_dir.trim_end_matches('/').replace('/', "_"));
    write_report_json(&report, &out).unwrap();
    println!("full report written to {out}");
}
