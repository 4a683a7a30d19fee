//! End-to-end checks of the `ecgmm` binary: exit codes, output files,
//! determinism across invocations and thread counts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/tu_fixture")
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ecgmm"));
    c.env("RUST_LOG", "warn");
    c
}

fn write_config(dir: &Path, dataset_path: &Path, extra: &str) -> PathBuf {
    let cfg = format!(
        r#"{{
  "task": "classify",
  "dataset": {{"path": {:?}, "format": "tu"}},
  "stack": {{"n_layers": 2, "vertex_states": 3, "edge_states": 2, "em_iterations": 4}},
  "seed": 11{extra}
}}"#,
        dataset_path.display().to_string()
    );
    let path = dir.join("run.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn run_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn train_writes_model_and_full_training_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &fixture_dir(), "");
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    run_ok(&out);
    assert!(out_dir.join("model.json").exists());

    let log = std::fs::read_to_string(out_dir.join("training_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next().unwrap(),
        "layer,component,iteration,log_likelihood"
    );
    // Two layers x two components must each leave a trace.
    let seen: BTreeSet<(String, String)> = lines
        .map(|l| {
            let mut f = l.split(',');
            (
                f.next().unwrap().to_string(),
                f.next().unwrap().to_string(),
            )
        })
        .collect();
    let expect: BTreeSet<(String, String)> = [
        ("0", "vertex"),
        ("0", "edge"),
        ("1", "vertex"),
        ("1", "edge"),
    ]
    .iter()
    .map(|(l, c)| (l.to_string(), c.to_string()))
    .collect();
    assert_eq!(seen, expect);
}

#[test]
fn eval_with_missing_dataset_exits_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no_such_dataset");
    let cfg = write_config(tmp.path(), &missing, "");
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["eval", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("no_such_dataset"),
        "stderr does not name the path: {stderr}"
    );
    // A usage failure must not leave partial outputs.
    assert!(!out_dir.join("report.json").exists());
    assert!(!out_dir.join("report.csv").exists());
}

#[test]
fn stats_rows_sum_to_dataset_edge_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &fixture_dir(), "");
    let out_dir = tmp.path().join("out");
    run_ok(
        &bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap(),
    );
    run_ok(
        &bin()
            .args(["stats", "--config"])
            .arg(&cfg)
            .arg("--model")
            .arg(out_dir.join("model.json"))
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap(),
    );

    let ds = ecgmm::io::load_tu_dataset(fixture_dir(), true).unwrap();
    let total: u64 = ds.total_edges() as u64;
    let csv = std::fs::read_to_string(out_dir.join("edge_states.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let sum: u64 = line
            .split(',')
            .skip(1)
            .map(|v| v.parse::<u64>().unwrap())
            .sum();
        assert_eq!(sum, total, "row {line:?} does not cover every edge");
        rows += 1;
    }
    assert_eq!(rows, 2, "one histogram row per layer");
}

#[test]
fn embed_twice_writes_byte_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &fixture_dir(), "");
    let train_dir = tmp.path().join("train");
    run_ok(
        &bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&train_dir)
            .output()
            .unwrap(),
    );
    let model = train_dir.join("model.json");
    let mut embeds = Vec::new();
    for name in ["e1", "e2"] {
        let dir = tmp.path().join(name);
        run_ok(
            &bin()
                .args(["embed", "--config"])
                .arg(&cfg)
                .arg("--model")
                .arg(&model)
                .arg("--out")
                .arg(&dir)
                .output()
                .unwrap(),
        );
        embeds.push((
            std::fs::read(dir.join("embeddings.csv")).unwrap(),
            std::fs::read(dir.join("embeddings.bin")).unwrap(),
        ));
    }
    assert_eq!(embeds[0].0, embeds[1].0, "CSV outputs differ");
    assert_eq!(embeds[0].1, embeds[1].1, "binary outputs differ");
    assert!(!embeds[0].1.is_empty());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &fixture_dir(), "");
    let mut models = Vec::new();
    for (name, threads) in [("t1", "1"), ("t4", "4")] {
        let dir = tmp.path().join(name);
        run_ok(
            &bin()
                .args(["train", "--threads", threads, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&dir)
                .output()
                .unwrap(),
        );
        models.push(std::fs::read(dir.join("model.json")).unwrap());
    }
    assert_eq!(models[0], models[1], "model depends on the thread count");
}

#[test]
fn eval_task_embed_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.json");
    let cfg = format!(
        r#"{{"task": "embed", "dataset": {{"path": {:?}, "format": "tu"}}}}"#,
        fixture_dir().display().to_string()
    );
    std::fs::write(&cfg_path, cfg).unwrap();
    let out = bin()
        .args(["eval", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
