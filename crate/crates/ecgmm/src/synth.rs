//! Deterministic synthetic datasets used by the examples and the acceptance
//! suite: community graphs for link prediction and edge-state analysis, an
//! edge-signal classification task, structure-derived regression targets, and
//! size-controlled graphs for scaling measurements.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::graph::{Dataset, EdgeFeatures, Graph, Target, VertexFeatures};

/// Knobs of the two-community link-prediction graph.
#[derive(Debug, Clone)]
pub struct TwoCommunityConfig {
    pub n_vertices: usize,
    /// Probability of an edge inside a community.
    pub intra_prob: f64,
    /// Probability of an edge across communities.
    pub inter_prob: f64,
    /// Mean shift of community-1 vertex features.
    pub feature_shift: f64,
    /// Standard deviation of vertex features.
    pub feature_noise: f64,
    /// When set, edges carry a scalar feature whose mean identifies the
    /// community pairing (0 for 0-0 edges, this shift for 1-1, half for
    /// mixed).
    pub edge_feature_shift: Option<f64>,
    pub seed: u64,
}

impl Default for TwoCommunityConfig {
    fn default() -> Self {
        TwoCommunityConfig {
            n_vertices: 500,
            intra_prob: 0.5,
            inter_prob: 0.0,
            feature_shift: 2.0,
            feature_noise: 1.0,
            edge_feature_shift: Some(2.0),
            seed: 0,
        }
    }
}

/// One undirected two-community graph: both edge directions are present and
/// share any edge feature. Vertices `0..n/2` form community 0.
pub fn two_community_graph(cfg: &TwoCommunityConfig) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = StandardNormal;
    let n = cfg.n_vertices;
    let half = n / 2;
    let community = |u: usize| (u >= half) as usize;

    let mut x = Array2::zeros((n, 1));
    for u in 0..n {
        let noise: f64 = normal.sample(&mut rng);
        x[(u, 0)] = cfg.feature_shift * community(u) as f64 + cfg.feature_noise * noise;
    }

    let mut edges = Vec::new();
    let mut feats: Vec<f64> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if community(u) == community(v) {
                cfg.intra_prob
            } else {
                cfg.inter_prob
            };
            if rng.random::<f64>() < p {
                let value = cfg.edge_feature_shift.map(|shift| {
                    let mean = shift * (community(u) + community(v)) as f64 / 2.0;
                    let noise: f64 = normal.sample(&mut rng);
                    mean + 0.5 * noise
                });
                edges.push((u as u32, v as u32));
                edges.push((v as u32, u as u32));
                if let Some(value) = value {
                    feats.push(value);
                    feats.push(value);
                }
            }
        }
    }
    let edge_features = if cfg.edge_feature_shift.is_some() {
        let m = feats.len();
        EdgeFeatures::Continuous(Array2::from_shape_vec((m, 1), feats).expect("m rows"))
    } else {
        EdgeFeatures::Absent
    };
    Graph {
        n_vertices: n,
        edges,
        vertex_features: VertexFeatures::Continuous(x),
        edge_features,
        target: None,
    }
}

/// Knobs of the directed two-community link-prediction graph. Edge direction
/// carries most of the signal: cross-community edges run from community 0 to
/// community 1 far more often than the reverse, which an order-blind pair
/// representation cannot express.
#[derive(Debug, Clone)]
pub struct DirectedTwoCommunityConfig {
    pub n_vertices: usize,
    /// Probability of each ordered pair inside a community.
    pub intra_prob: f64,
    /// Probability of a community-0 to community-1 edge.
    pub forward_prob: f64,
    /// Probability of a community-1 to community-0 edge.
    pub backward_prob: f64,
    /// Mean shift of community-1 vertex features.
    pub feature_shift: f64,
    /// Standard deviation of vertex features.
    pub feature_noise: f64,
    /// When set, edges carry a scalar feature with mean `shift *
    /// (community(dst) - community(src))`: positive forward, negative
    /// backward, zero inside a community.
    pub edge_direction_shift: Option<f64>,
    pub seed: u64,
}

impl Default for DirectedTwoCommunityConfig {
    fn default() -> Self {
        DirectedTwoCommunityConfig {
            n_vertices: 500,
            intra_prob: 0.05,
            forward_prob: 0.9,
            backward_prob: 0.05,
            feature_shift: 3.0,
            feature_noise: 1.0,
            edge_direction_shift: Some(3.0),
            seed: 0,
        }
    }
}

/// One directed two-community graph: every ordered pair is sampled
/// independently. Vertices `0..n/2` form community 0.
pub fn directed_two_community_graph(cfg: &DirectedTwoCommunityConfig) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = StandardNormal;
    let n = cfg.n_vertices;
    let half = n / 2;
    let community = |u: usize| (u >= half) as usize;

    let mut x = Array2::zeros((n, 1));
    for u in 0..n {
        let noise: f64 = normal.sample(&mut rng);
        x[(u, 0)] = cfg.feature_shift * community(u) as f64 + cfg.feature_noise * noise;
    }

    let mut edges = Vec::new();
    let mut feats: Vec<f64> = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            let p = match (community(u), community(v)) {
                (0, 1) => cfg.forward_prob,
                (1, 0) => cfg.backward_prob,
                _ => cfg.intra_prob,
            };
            if rng.random::<f64>() < p {
                edges.push((u as u32, v as u32));
                if let Some(shift) = cfg.edge_direction_shift {
                    let mean = shift * (community(v) as f64 - community(u) as f64);
                    let noise: f64 = normal.sample(&mut rng);
                    feats.push(mean + 0.5 * noise);
                }
            }
        }
    }
    let edge_features = if cfg.edge_direction_shift.is_some() {
        let m = feats.len();
        EdgeFeatures::Continuous(Array2::from_shape_vec((m, 1), feats).expect("m rows"))
    } else {
        EdgeFeatures::Absent
    };
    Graph {
        n_vertices: n,
        edges,
        vertex_features: VertexFeatures::Continuous(x),
        edge_features,
        target: None,
    }
}

/// Graphs of two unequal-density blocks with degree vertex features and no
/// edge features; edge states can only differentiate through structure.
pub fn community_stats_dataset(n_graphs: usize, n_vertices: usize, seed: u64) -> Result<Dataset> {
    let mut graphs = Vec::with_capacity(n_graphs);
    for k in 0..n_graphs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let n = n_vertices + rng.random_range(0..5);
        let half = n / 2;
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let p = if u < half && v < half {
                    0.55
                } else if u >= half && v >= half {
                    0.15
                } else {
                    0.02
                };
                if rng.random::<f64>() < p {
                    edges.push((u as u32, v as u32));
                    edges.push((v as u32, u as u32));
                }
            }
        }
        let mut degree = vec![0.0; n];
        for &(u, _) in &edges {
            degree[u as usize] += 1.0;
        }
        let x = Array2::from_shape_fn((n, 1), |(u, _)| degree[u]);
        graphs.push(Graph {
            n_vertices: n,
            edges,
            vertex_features: VertexFeatures::Continuous(x),
            edge_features: EdgeFeatures::Absent,
            target: None,
        });
    }
    Dataset::from_graphs(graphs, true)
}

/// Binary classification task where only the edge features carry the label:
/// topology and vertex features are drawn identically for both classes, edge
/// features are `Normal(0,1)` for class 0 and `Normal(shift,1)` for class 1.
pub fn edge_signal_dataset(n_graphs: usize, shift: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut graphs = Vec::with_capacity(n_graphs);
    for k in 0..n_graphs {
        let class = (k % 2) as u32;
        let n = rng.random_range(8..14);
        let mut edges = Vec::new();
        let mut feats = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < 0.3 {
                    let noise: f64 = normal.sample(&mut rng);
                    let value = noise + if class == 1 { shift } else { 0.0 };
                    edges.push((u as u32, v as u32));
                    edges.push((v as u32, u as u32));
                    feats.push(value);
                    feats.push(value);
                }
            }
        }
        let m = feats.len();
        graphs.push(Graph {
            n_vertices: n,
            edges,
            vertex_features: VertexFeatures::Categorical(vec![0; n]),
            edge_features: EdgeFeatures::Continuous(
                Array2::from_shape_vec((m, 1), feats).expect("m rows"),
            ),
            target: Some(Target::Class(class)),
        });
    }
    Dataset::from_graphs(graphs, true)
}

/// Classification task readable from vertex unigrams: the class is the
/// majority vertex label, with labels drawn from a class-dependent bias.
pub fn label_majority_dataset(n_graphs: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(n_graphs);
    for k in 0..n_graphs {
        let class = (k % 2) as u32;
        let n = rng.random_range(8..16);
        let bias = if class == 1 { 0.8 } else { 0.2 };
        let labels: Vec<u32> = (0..n)
            .map(|_| (rng.random::<f64>() < bias) as u32)
            .collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < 0.25 {
                    edges.push((u as u32, v as u32));
                    edges.push((v as u32, u as u32));
                }
            }
        }
        graphs.push(Graph {
            n_vertices: n,
            edges,
            vertex_features: VertexFeatures::Categorical(labels),
            edge_features: EdgeFeatures::Absent,
            target: Some(Target::Class(class)),
        });
    }
    Dataset::from_graphs(graphs, true)
}

/// Regression task whose targets are graph statistics reachable from
/// embeddings: the fraction of label-1 vertices and the scaled mean degree.
pub fn regression_dataset(n_graphs: usize, n_targets: usize, seed: u64) -> Result<Dataset> {
    assert!((1..=2).contains(&n_targets), "1 or 2 targets supported");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(n_graphs);
    for _ in 0..n_graphs {
        let n = rng.random_range(8..16);
        let frac = rng.random::<f64>();
        let labels: Vec<u32> = (0..n)
            .map(|_| (rng.random::<f64>() < frac) as u32)
            .collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < 0.25 {
                    edges.push((u as u32, v as u32));
                    edges.push((v as u32, u as u32));
                }
            }
        }
        let ones = labels.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
        let mean_degree = edges.len() as f64 / n as f64;
        let mut y = Array1::zeros(n_targets);
        y[0] = ones;
        if n_targets == 2 {
            y[1] = mean_degree / 10.0;
        }
        graphs.push(Graph {
            n_vertices: n,
            edges,
            vertex_features: VertexFeatures::Categorical(labels),
            edge_features: EdgeFeatures::Absent,
            target: Some(Target::Values(y)),
        });
    }
    Dataset::from_graphs(graphs, true)
}

/// A single categorical-feature graph with exactly `n_edges` directed edges,
/// sized for runtime scaling measurements.
pub fn scaling_dataset(n_edges: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (n_edges / 5).max(2);
    let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..8) as u32).collect();
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let u = rng.random_range(0..n) as u32;
        let mut v = rng.random_range(0..n) as u32;
        if v == u {
            v = (v + 1) % n as u32;
        }
        edges.push((u, v));
    }
    let graph = Graph {
        n_vertices: n,
        edges,
        vertex_features: VertexFeatures::Categorical(labels),
        edge_features: EdgeFeatures::Absent,
        target: None,
    };
    Dataset::from_graphs(vec![graph], false)
}
