//! Dataset plumbing: read a TU-format benchmark directory, convert to JSONL
//! and back, and discretize continuous edge attributes into equal-width bins
//! (the preprocessing step a vertex-only model needs before it can use edge
//! information at all).

use std::path::Path;

use ecgmm::graph::{discretize_edges, FeatureKind};
use ecgmm::io::{load_jsonl, load_tu_dataset, save_jsonl};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/tu_fixture");
    let ds = load_tu_dataset(&dir, true).unwrap();
    println!("loaded {} from {}", plural(ds.n_graphs(), "graph"), dir.display());
    for (k, g) in ds.graphs.iter().enumerate() {
        println!(
            "  graph {k}: {} vertices, {} directed edges, target {:?}",
            g.n_vertices,
            g.edges.len(),
            g.target
        );
    }
    println!("vertex features: {:?}", ds.meta.vertex_kind);
    println!("edge features:   {:?}", ds.meta.edge_kind);
    if let Some(map) = &ds.meta.vertex_label_map {
        println!("raw vertex labels {:?} were remapped to 0..{}", map, map.len());
    }

    // JSONL is the editable interchange format; the round trip is exact.
    let path = std::env::temp_dir().join("ecgmm_tu_fixture.jsonl");
    save_jsonl(&ds, &path).unwrap();
    let back = load_jsonl(&path, true).unwrap();
    assert_eq!(ds.graphs, back.graphs);
    println!("JSONL round trip through {} is exact", path.display());
    println!("first line: {}", std::fs::read_to_string(&path).unwrap().lines().next().unwrap());

    // Continuous edge attributes can be binned for models that want
    // categorical edges; bin edges come from the dataset range.
    let binned = discretize_edges(&ds, 10).unwrap();
    match binned.meta.edge_kind {
        FeatureKind::Categorical { domain } => {
            println!("edge attributes discretized into {domain} equal-width bins");
        }
        ref other => panic!("expected categorical edges, got {other:?}"),
    }
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}
