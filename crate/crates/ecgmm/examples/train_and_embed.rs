//! Core workflow: train a layered stack on a synthetic dataset, inspect the
//! per-layer EM trace, and build graph/vertex/edge embeddings.
//!
//! Run with `cargo run --example train_and_embed`.

use std::time::Instant;

use ecgmm::embeddings::{
    edge_embedding, graph_embedding, vertex_embedding, EmbeddingConfig, Readout, Representation,
};
use ecgmm::stack::{load_model, save_model, train_stack, StackConfig};
use ecgmm::synth::edge_signal_dataset;

fn main() {
    let ds = edge_signal_dataset(80, 3.0, 42).unwrap();
    println!(
        "dataset: {} graphs, {} vertices, {} directed edges",
        ds.n_graphs(),
        ds.total_vertices(),
        ds.total_edges()
    );

    let cfg = StackConfig {
        n_layers: 3,
        vertex_states: 4,
        edge_states: 3,
        em_iterations: 10,
        seed: 7,
        ..StackConfig::default()
    };
    let t0 = Instant::now();
    let (model, fs) = train_stack(&ds, &cfg).unwrap();
    println!("trained {} layers in {:.2?}", model.layers.len(), t0.elapsed());

    // Each trace is one component of one layer, holding the total dataset
    // log-likelihood at every EM iteration; the sequence never decreases.
    // Vertex features are constant in this task, so the vertex component's
    // log-likelihood sits at zero and all structure lives in the edges.
    for trace in &model.training_log {
        let lls = &trace.log_likelihoods;
        println!(
            "layer {} {:<6} EM: {:.4} -> {:.4} over {} iterations",
            trace.layer,
            format!("{:?}", trace.component).to_lowercase(),
            lls.first().unwrap(),
            lls.last().unwrap(),
            lls.len()
        );
    }

    let emb_cfg = EmbeddingConfig {
        representation: Representation::Unibigram,
        readout: Readout::Mean,
        include_edge_unigrams: true,
    };
    let g = graph_embedding(&ds, &fs, &emb_cfg).unwrap();
    let v = vertex_embedding(&ds, &fs, &emb_cfg).unwrap();
    let e = edge_embedding(&ds, &fs).unwrap();
    println!("graph embeddings:  {} x {}", g.nrows(), g.ncols());
    println!("vertex embeddings: {} x {}", v.nrows(), v.ncols());
    println!("edge embeddings:   {} x {}", e.nrows(), e.ncols());
    println!("first graph vector starts with {:?}", &g.row(0).to_vec()[..4]);

    // Models round-trip through JSON byte-exactly, so retraining is never
    // needed to re-embed.
    let dir = std::env::temp_dir().join("ecgmm_train_and_embed");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    save_model(&model, &path).unwrap();
    let reloaded = load_model(&path).unwrap();
    assert_eq!(model, reloaded);
    println!("model saved to {} and reloaded identically", path.display());
}
