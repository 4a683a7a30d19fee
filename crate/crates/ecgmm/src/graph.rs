//! Graph data model: attributed directed graphs, dataset containers and the
//! incoming-neighborhood index used by every layer.
//!
//! Graphs are directed; undirected inputs are stored as two directed edges and
//! the dataset records an `undirected` flag so downstream scoring can average
//! both directions. Self-loops and duplicate edges are kept (multigraph
//! semantics): context aggregation sums over the edge list as stored.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertex features of one graph. The kind is uniform within a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VertexFeatures {
    /// One categorical id per vertex, in `0..domain`.
    Categorical(Vec<u32>),
    /// One real vector per vertex (rows).
    Continuous(Array2<f64>),
}

/// Edge features of one graph, aligned with the edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EdgeFeatures {
    /// No edge features. Components treat this as a constant scalar 0.0,
    /// so the edge emission contributes a state-dependent but
    /// data-independent factor.
    Absent,
    Categorical(Vec<u32>),
    Continuous(Array2<f64>),
}

/// Optional per-graph prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(u32),
    Values(Array1<f64>),
}

/// A single attributed directed graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n_vertices: usize,
    /// Ordered list of `(src, dst)` pairs; ids are `< n_vertices`.
    pub edges: Vec<(u32, u32)>,
    pub vertex_features: VertexFeatures,
    pub edge_features: EdgeFeatures,
    pub target: Option<Target>,
}

/// Borrowed view of one observation, either a categorical id or a
/// real vector.
#[derive(Debug, Clone, Copy)]
pub enum FeatureRef<'a> {
    Cat(u32),
    Cont(ArrayView1<'a, f64>),
}

static MISSING_EDGE_FEATURE: [f64; 1] = [0.0];

impl Graph {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_feature(&self, u: usize) -> FeatureRef<'_> {
        match &self.vertex_features {
            VertexFeatures::Categorical(ids) => FeatureRef::Cat(ids[u]),
            VertexFeatures::Continuous(rows) => FeatureRef::Cont(rows.row(u)),
        }
    }

    pub fn edge_feature(&self, e: usize) -> FeatureRef<'_> {
        match &self.edge_features {
            EdgeFeatures::Absent => FeatureRef::Cont(ArrayView1::from(&MISSING_EDGE_FEATURE)),
            EdgeFeatures::Categorical(ids) => FeatureRef::Cat(ids[e]),
            EdgeFeatures::Continuous(rows) => FeatureRef::Cont(rows.row(e)),
        }
    }

    /// Checks the structural invariants: endpoint ids in range and feature
    /// containers aligned with vertex/edge counts.
    pub fn validate(&self) -> Result<()> {
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            if u as usize >= self.n_vertices || v as usize >= self.n_vertices {
                return Err(Error::Integrity(format!(
                    "edge {k} ({u},{v}) references a vertex outside 0..{}",
                    self.n_vertices
                )));
            }
        }
        let nv = match &self.vertex_features {
            VertexFeatures::Categorical(ids) => ids.len(),
            VertexFeatures::Continuous(rows) => rows.nrows(),
        };
        if nv != self.n_vertices {
            return Err(Error::Integrity(format!(
                "vertex feature rows ({nv}) != n_vertices ({})",
                self.n_vertices
            )));
        }
        let ne = match &self.edge_features {
            EdgeFeatures::Absent => self.edges.len(),
            EdgeFeatures::Categorical(ids) => ids.len(),
            EdgeFeatures::Continuous(rows) => rows.nrows(),
        };
        if ne != self.edges.len() {
            return Err(Error::Integrity(format!(
                "edge feature rows ({ne}) != edge count ({})",
                self.edges.len()
            )));
        }
        Ok(())
    }
}

/// Kind and size of a feature domain, uniform across a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Absent,
    Categorical { domain: usize },
    Continuous { dim: usize },
}

/// Kind of the per-graph target, uniform across a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    None,
    Class { n_classes: usize },
    Values { dim: usize },
}

/// Dataset-level metadata. Label maps record the original raw labels so a
/// dense id can be traced back to its source value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub vertex_kind: FeatureKind,
    pub edge_kind: FeatureKind,
    pub target_kind: TargetKind,
    pub undirected: bool,
    /// Raw vertex label for each dense id, when labels were remapped.
    pub vertex_label_map: Option<Vec<i64>>,
    /// Raw class label for each dense class id, when labels were remapped.
    pub class_label_map: Option<Vec<i64>>,
}

/// A collection of graphs with uniform feature metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Builds a dataset from graphs, deriving metadata from the first graph
    /// and checking kind consistency across all of them.
    pub fn from_graphs(graphs: Vec<Graph>, undirected: bool) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Integrity("dataset contains no graphs".into()));
        }
        for g in &graphs {
            g.validate()?;
        }
        let vertex_kind = match &graphs[0].vertex_features {
            VertexFeatures::Categorical(_) => {
                let domain = graphs
                    .iter()
                    .map(|g| match &g.vertex_features {
                        VertexFeatures::Categorical(ids) => {
                            ids.iter().map(|&i| i as usize + 1).max().unwrap_or(1)
                        }
                        _ => 0,
                    })
                    .max()
                    .unwrap_or(1);
                FeatureKind::Categorical { domain }
            }
            VertexFeatures::Continuous(rows) => FeatureKind::Continuous { dim: rows.ncols() },
        };
        let edge_kind = match &graphs[0].edge_features {
            EdgeFeatures::Absent => FeatureKind::Absent,
            EdgeFeatures::Categorical(_) => {
                let domain = graphs
                    .iter()
                    .map(|g| match &g.edge_features {
                        EdgeFeatures::Categorical(ids) => {
                            ids.iter().map(|&i| i as usize + 1).max().unwrap_or(1)
                        }
                        _ => 0,
                    })
                    .max()
                    .unwrap_or(1);
                FeatureKind::Categorical { domain }
            }
            EdgeFeatures::Continuous(rows) => FeatureKind::Continuous { dim: rows.ncols() },
        };
        let target_kind = match &graphs[0].target {
            None => TargetKind::None,
            Some(Target::Class(_)) => {
                let n_classes = graphs
                    .iter()
                    .filter_map(|g| match &g.target {
                        Some(Target::Class(c)) => Some(*c as usize + 1),
                        _ => None,
                    })
                    .max()
                    .unwrap_or(1);
                TargetKind::Class { n_classes }
            }
            Some(Target::Values(v)) => TargetKind::Values { dim: v.len() },
        };
        let meta = DatasetMeta {
            vertex_kind,
            edge_kind,
            target_kind,
            undirected,
            vertex_label_map: None,
            class_label_map: None,
        };
        let ds = Dataset { graphs, meta };
        ds.check_consistency()?;
        Ok(ds)
    }

    /// Verifies that every graph matches the dataset metadata.
    pub fn check_consistency(&self) -> Result<()> {
        for (gi, g) in self.graphs.iter().enumerate() {
            g.validate()?;
            let ok_v = match (&g.vertex_features, self.meta.vertex_kind) {
                (VertexFeatures::Categorical(ids), FeatureKind::Categorical { domain }) => {
                    ids.iter().all(|&i| (i as usize) < domain)
                }
                (VertexFeatures::Continuous(rows), FeatureKind::Continuous { dim }) => {
                    rows.ncols() == dim
                }
                _ => false,
            };
            if !ok_v {
                return Err(Error::Integrity(format!(
                    "graph {gi}: vertex features do not match dataset metadata"
                )));
            }
            let ok_e = match (&g.edge_features, self.meta.edge_kind) {
                (EdgeFeatures::Absent, FeatureKind::Absent) => true,
                (EdgeFeatures::Categorical(ids), FeatureKind::Categorical { domain }) => {
                    ids.iter().all(|&i| (i as usize) < domain)
                }
                (EdgeFeatures::Continuous(rows), FeatureKind::Continuous { dim }) => {
                    rows.ncols() == dim
                }
                _ => false,
            };
            if !ok_e {
                return Err(Error::Integrity(format!(
                    "graph {gi}: edge features do not match dataset metadata"
                )));
            }
        }
        Ok(())
    }

    pub fn n_graphs(&self) -> usize {
        self.graphs.len()
    }

    pub fn total_vertices(&self) -> usize {
        self.graphs.iter().map(|g| g.n_vertices).sum()
    }

    pub fn total_edges(&self) -> usize {
        self.graphs.iter().map(|g| g.n_edges()).sum()
    }

    /// Per-graph offsets into the dataset-wide vertex numbering, with a final
    /// entry equal to `total_vertices()`.
    pub fn vertex_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.graphs.len() + 1);
        let mut acc = 0;
        off.push(0);
        for g in &self.graphs {
            acc += g.n_vertices;
            off.push(acc);
        }
        off
    }

    /// Per-graph offsets into the dataset-wide edge numbering.
    pub fn edge_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.graphs.len() + 1);
        let mut acc = 0;
        off.push(0);
        for g in &self.graphs {
            acc += g.n_edges();
            off.push(acc);
        }
        off
    }

    /// New dataset containing the selected graphs (indices may repeat).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Per-vertex index of incoming edges.
///
/// For each vertex `v` the index stores the contiguous slice of
/// `(edge index, source vertex)` pairs of all edges `(u, v)`. Every edge
/// index appears in exactly one slice, so the slice lengths sum to `|E|`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodIndex {
    offsets: Vec<usize>,
    entries: Vec<(u32, u32)>,
}

impl NeighborhoodIndex {
    pub fn n_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.entries.len()
    }

    /// Incoming `(edge index, source vertex)` pairs of `v`.
    pub fn incoming(&self, v: usize) -> &[(u32, u32)] {
        &self.entries[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }
}

/// Builds the incoming-neighborhood index of a graph (counting sort on the
/// destination endpoint).
pub fn build_index(g: &Graph) -> NeighborhoodIndex {
    let n = g.n_vertices;
    let mut counts = vec![0usize; n + 1];
    for &(_, v) in &g.edges {
        counts[v as usize + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let offsets = counts.clone();
    let mut entries = vec![(0u32, 0u32); g.edges.len()];
    let mut cursor = counts;
    for (e, &(u, v)) in g.edges.iter().enumerate() {
        entries[cursor[v as usize]] = (e as u32, u);
        cursor[v as usize] += 1;
    }
    NeighborhoodIndex { offsets, entries }
}

/// Replaces vertex features with the in-degree plus out-degree of each vertex
/// as a one-dimensional continuous feature. Degrees are computed from the
/// stored directed edge list without deduplication.
pub fn degree_features(ds: &Dataset) -> Dataset {
    let graphs = ds
        .graphs
        .iter()
        .map(|g| {
            let mut deg = vec![0.0f64; g.n_vertices];
            for &(u, v) in &g.edges {
                deg[u as usize] += 1.0;
                deg[v as usize] += 1.0;
            }
            let rows = Array2::from_shape_vec((g.n_vertices, 1), deg).expect("degree shape");
            Graph {
                vertex_features: VertexFeatures::Continuous(rows),
                ..g.clone()
            }
        })
        .collect();
    let mut meta = ds.meta.clone();
    meta.vertex_kind = FeatureKind::Continuous { dim: 1 };
    meta.vertex_label_map = None;
    Dataset { graphs, meta }
}

/// Discretizes continuous scalar edge features into `n_bins` equal-width bins
/// computed from the given feature range. The maximum maps to the last bin;
/// a zero-width range puts everything into bin 0.
pub fn discretize_edges_with_range(
    ds: &Dataset,
    n_bins: usize,
    min: f64,
    max: f64,
) -> Result<Dataset> {
    if n_bins < 1 {
        return Err(Error::Config("edge discretization needs n_bins >= 1".into()));
    }
    match ds.meta.edge_kind {
        FeatureKind::Continuous { dim: 1 } => {}
        FeatureKind::Continuous { dim } => {
            return Err(Error::Unsupported(format!(
                "edge discretization requires scalar edge features, got dim {dim}"
            )));
        }
        _ => {
            return Err(Error::Unsupported(
                "edge discretization requires continuous edge features".into(),
            ));
        }
    }
    let width = (max - min) / n_bins as f64;
    let graphs = ds
        .graphs
        .iter()
        .map(|g| {
            let values = match &g.edge_features {
                EdgeFeatures::Continuous(rows) => rows.column(0).to_owned(),
                _ => unreachable!("kind checked above"),
            };
            let bins = values
                .iter()
                .map(|&x| {
                    if width <= 0.0 {
                        0
                    } else {
                        (((x - min) / width).floor() as i64).clamp(0, n_bins as i64 - 1) as u32
                    }
                })
                .collect();
            Graph {
                edge_features: EdgeFeatures::Categorical(bins),
                ..g.clone()
            }
        })
        .collect();
    let mut meta = ds.meta.clone();
    meta.edge_kind = FeatureKind::Categorical { domain: n_bins };
    Ok(Dataset { graphs, meta })
}

/// [`discretize_edges_with_range`] with the range taken from the dataset
/// itself. When a train/test split exists, compute the range on the training
/// split and apply it to both via the `_with_range` variant.
pub fn discretize_edges(ds: &Dataset, n_bins: usize) -> Result<Dataset> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for g in &ds.graphs {
        if let EdgeFeatures::Continuous(rows) = &g.edge_features {
            for &x in rows.column(0) {
                min = min.min(x);
                max = max.max(x);
            }
        }
    }
    if !min.is_finite() {
        // No edges anywhere; any range works.
        min = 0.0;
        max = 0.0;
    }
    discretize_edges_with_range(ds, n_bins, min, max)
}
