//! Vertex, edge and graph embeddings assembled from frozen layer states.
//!
//! Per layer a vertex contributes its unigram (the posterior row) and
//! optionally its bigram, the neighbor-correlation vector
//! `φ_{i·C+j}(u) = Σ_{v∈N_u} q_u(i)·q_v(j)` over incoming neighbors. Graph
//! vectors apply a permutation-invariant readout (mean or sum) over vertex
//! rows and, optionally, over edge unigram rows, then concatenate layer
//! blocks in layer order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_index, Dataset, Graph, NeighborhoodIndex};
use crate::stack::FrozenStates;

/// Per-vertex representation: the posterior alone or with the neighbor
/// bigram appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Unigram,
    Unibigram,
}

/// Permutation-invariant aggregation over units of one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Mean,
    Sum,
}

/// Embedding construction switches. The discrete/continuous choice is
/// inherited from the frozen states themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub representation: Representation,
    pub readout: Readout,
    pub include_edge_unigrams: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            representation: Representation::Unigram,
            readout: Readout::Mean,
            include_edge_unigrams: true,
        }
    }
}

/// Width of one graph (or vertex) embedding layer block.
fn vertex_block_dim(cfg: &EmbeddingConfig, c_v: usize) -> usize {
    match cfg.representation {
        Representation::Unigram => c_v,
        Representation::Unibigram => c_v + c_v * c_v,
    }
}

/// Total graph-embedding dimension for a given stack shape.
pub fn graph_embedding_dim(
    cfg: &EmbeddingConfig,
    n_layers: usize,
    c_v: usize,
    c_e: usize,
) -> usize {
    let edge = if cfg.include_edge_unigrams { c_e } else { 0 };
    n_layers * (vertex_block_dim(cfg, c_v) + edge)
}

/// Neighbor bigram of every vertex: entry `(u, i·C+j) = Σ_{v∈N_u}
/// q_u(i)·q_v(j)` over incoming neighbors. Row sums equal the in-degree for
/// normalized posteriors.
pub fn vertex_bigram(
    g: &Graph,
    idx: &NeighborhoodIndex,
    posteriors: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let (n, c) = posteriors.dim();
    if n != g.n_vertices || idx.n_vertices() != g.n_vertices {
        return Err(Error::Shape(format!(
            "posterior rows ({n}) do not match graph vertices ({})",
            g.n_vertices
        )));
    }
    let mut out = Array2::zeros((n, c * c));
    for u in 0..n {
        let qu = posteriors.row(u);
        for &(_, src) in idx.incoming(u) {
            let qv = posteriors.row(src as usize);
            for i in 0..c {
                let qui = qu[i];
                if qui == 0.0 {
                    continue;
                }
                for j in 0..c {
                    out[(u, i * c + j)] += qui * qv[j];
                }
            }
        }
    }
    Ok(out)
}

fn readout_rows(rows: ArrayView2<f64>, readout: Readout, out: &mut [f64]) {
    debug_assert_eq!(rows.ncols(), out.len());
    out.fill(0.0);
    for row in rows.rows() {
        for (o, &x) in out.iter_mut().zip(row.iter()) {
            *o += x;
        }
    }
    if readout == Readout::Mean && rows.nrows() > 0 {
        let inv = 1.0 / rows.nrows() as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
}

fn check_coverage(fs: &FrozenStates, ds: &Dataset) -> Result<()> {
    if fs.vertex_offsets != ds.vertex_offsets() || fs.edge_offsets != ds.edge_offsets() {
        return Err(Error::Shape(
            "frozen states do not cover this dataset (offset mismatch)".into(),
        ));
    }
    if fs.layers.is_empty() {
        return Err(Error::State("frozen states hold no layers".into()));
    }
    Ok(())
}

/// One embedding row per graph: layer blocks `[vertex readout | edge
/// readout]` concatenated in layer order. Graphs without vertices embed as
/// zeros (with a warning).
pub fn graph_embedding(
    ds: &Dataset,
    fs: &FrozenStates,
    cfg: &EmbeddingConfig,
) -> Result<Array2<f64>> {
    check_coverage(fs, ds)?;
    let c_v = fs.layers[0].vertex.ncols();
    let c_e = fs.layers[0].edge.ncols();
    let n_layers = fs.n_layers();
    let v_dim = vertex_block_dim(cfg, c_v);
    let e_dim = if cfg.include_edge_unigrams { c_e } else { 0 };
    let dim = n_layers * (v_dim + e_dim);

    let rows: Vec<Result<Vec<f64>>> = (0..ds.n_graphs())
        .into_par_iter()
        .map(|k| {
            let g = &ds.graphs[k];
            if g.n_vertices == 0 {
                log::warn!("graph {k} has no vertices; embedding it as zeros");
                return Ok(vec![0.0; dim]);
            }
            let idx = build_index(g);
            let mut row = vec![0.0; dim];
            for l in 0..n_layers {
                let base = l * (v_dim + e_dim);
                let vp = fs.vertex_posteriors(l, k);
                match cfg.representation {
                    Representation::Unigram => {
                        readout_rows(vp, cfg.readout, &mut row[base..base + v_dim]);
                    }
                    Representation::Unibigram => {
                        let bigram = vertex_bigram(g, &idx, vp)?;
                        readout_rows(vp, cfg.readout, &mut row[base..base + c_v]);
                        readout_rows(
                            bigram.view(),
                            cfg.readout,
                            &mut row[base + c_v..base + v_dim],
                        );
                    }
                }
                if cfg.include_edge_unigrams {
                    readout_rows(
                        fs.edge_posteriors(l, k),
                        cfg.readout,
                        &mut row[base + v_dim..base + v_dim + e_dim],
                    );
                }
            }
            Ok(row)
        })
        .collect();

    let mut out = Array2::zeros((ds.n_graphs(), dim));
    for (k, r) in rows.into_iter().enumerate() {
        let row = r?;
        out.row_mut(k).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    Ok(out)
}

/// One embedding row per vertex (dataset order): layer blocks of the
/// unigram, plus the bigram when configured.
pub fn vertex_embedding(
    ds: &Dataset,
    fs: &FrozenStates,
    cfg: &EmbeddingConfig,
) -> Result<Array2<f64>> {
    check_coverage(fs, ds)?;
    let c_v = fs.layers[0].vertex.ncols();
    let n_layers = fs.n_layers();
    let v_dim = vertex_block_dim(cfg, c_v);
    let mut out = Array2::zeros((ds.total_vertices(), n_layers * v_dim));
    let voff = ds.vertex_offsets();

    let blocks: Vec<Result<Vec<Array2<f64>>>> = (0..ds.n_graphs())
        .into_par_iter()
        .map(|k| {
            let g = &ds.graphs[k];
            let mut per_layer = Vec::with_capacity(n_layers);
            let idx = build_index(g);
            for l in 0..n_layers {
                let vp = fs.vertex_posteriors(l, k);
                let block = match cfg.representation {
                    Representation::Unigram => vp.to_owned(),
                    Representation::Unibigram => {
                        let bigram = vertex_bigram(g, &idx, vp)?;
                        ndarray::concatenate(Axis(1), &[vp, bigram.view()])
                            .expect("row counts match")
                    }
                };
                per_layer.push(block);
            }
            Ok(per_layer)
        })
        .collect();

    for (k, r) in blocks.into_iter().enumerate() {
        let per_layer = r?;
        for (l, block) in per_layer.into_iter().enumerate() {
            out.slice_mut(s![
                voff[k]..voff[k + 1],
                l * v_dim..(l + 1) * v_dim
            ])
            .assign(&block);
        }
    }
    Ok(out)
}

/// One embedding row per edge (dataset order): per-layer edge unigrams
/// concatenated.
pub fn edge_embedding(ds: &Dataset, fs: &FrozenStates) -> Result<Array2<f64>> {
    check_coverage(fs, ds)?;
    let c_e = fs.layers[0].edge.ncols();
    let n_layers = fs.n_layers();
    let mut out = Array2::zeros((ds.total_edges(), n_layers * c_e));
    for (l, layer) in fs.layers.iter().enumerate() {
        out.slice_mut(s![.., l * c_e..(l + 1) * c_e])
            .assign(&layer.edge);
    }
    Ok(out)
}

/// Unit kind an embedding matrix describes; controls the CSV id columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingScope {
    #[default]
    Graph,
    Vertex,
    Edge,
}

impl EmbeddingScope {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingScope::Graph => "graph",
            EmbeddingScope::Vertex => "vertex",
            EmbeddingScope::Edge => "edge",
        }
    }
}

/// Writes an embedding matrix as CSV: id columns first, then `e0..e{D-1}`.
/// Graph scope: `graph`; vertex scope: `graph,vertex`; edge scope:
/// `graph,edge,src,dst`.
pub fn write_embedding_csv(
    path: impl AsRef<Path>,
    scope: EmbeddingScope,
    ds: &Dataset,
    x: ArrayView2<f64>,
) -> Result<()> {
    let expected_rows = match scope {
        EmbeddingScope::Graph => ds.n_graphs(),
        EmbeddingScope::Vertex => ds.total_vertices(),
        EmbeddingScope::Edge => ds.total_edges(),
    };
    if x.nrows() != expected_rows {
        return Err(Error::Shape(format!(
            "{} embedding has {} rows, dataset implies {expected_rows}",
            scope.name(),
            x.nrows()
        )));
    }
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let id_header = match scope {
        EmbeddingScope::Graph => "graph",
        EmbeddingScope::Vertex => "graph,vertex",
        EmbeddingScope::Edge => "graph,edge,src,dst",
    };
    write!(w, "{id_header}")?;
    for d in 0..x.ncols() {
        write!(w, ",e{d}")?;
    }
    writeln!(w)?;
    let mut row = 0usize;
    match scope {
        EmbeddingScope::Graph => {
            for k in 0..ds.n_graphs() {
                write!(w, "{k}")?;
                write_values(&mut w, x.row(row))?;
                row += 1;
            }
        }
        EmbeddingScope::Vertex => {
            for (k, g) in ds.graphs.iter().enumerate() {
                for u in 0..g.n_vertices {
                    write!(w, "{k},{u}")?;
                    write_values(&mut w, x.row(row))?;
                    row += 1;
                }
            }
        }
        EmbeddingScope::Edge => {
            for (k, g) in ds.graphs.iter().enumerate() {
                for (e, &(u, v)) in g.edges.iter().enumerate() {
                    write!(w, "{k},{e},{u},{v}")?;
                    write_values(&mut w, x.row(row))?;
                    row += 1;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_values(w: &mut impl IoWrite, row: ndarray::ArrayView1<f64>) -> Result<()> {
    for &v in row.iter() {
        write!(w, ",{v}")?;
    }
    writeln!(w)?;
    Ok(())
}

const MATRIX_FORMAT: &str = "ecgmm-embedding";
const MATRIX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MatrixHeader {
    format: String,
    version: u32,
    rows: usize,
    cols: usize,
    dtype: String,
}

/// Writes a matrix in the compact binary format: one JSON header line, then
/// `rows × cols` little-endian f64 values in row-major order.
pub fn write_embedding_matrix(path: impl AsRef<Path>, x: ArrayView2<f64>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let header = MatrixHeader {
        format: MATRIX_FORMAT.into(),
        version: MATRIX_VERSION,
        rows: x.nrows(),
        cols: x.ncols(),
        dtype: "f64le".into(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for &v in x.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_embedding_matrix`].
pub fn read_embedding_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let file = File::open(path.as_ref())?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: MatrixHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Format(format!("bad embedding matrix header: {e}")))?;
    if header.format != MATRIX_FORMAT || header.dtype != "f64le" {
        return Err(Error::Format(format!(
            "not an embedding matrix (format {}, dtype {})",
            header.format, header.dtype
        )));
    }
    if header.version != MATRIX_VERSION {
        return Err(Error::Format(format!(
            "unsupported embedding matrix version {}",
            header.version
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected = header
        .rows
        .checked_mul(header.cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "matrix payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Array2::from_shape_vec((header.rows, header.cols), data)
        .map_err(|e| Error::Format(format!("matrix shape: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeFeatures, VertexFeatures};
    use crate::stack::{FrozenLayer, StateMode};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_simplex_rows(n: usize, c: usize, rng: &mut impl Rng) -> Array2<f64> {
        let mut out = Array2::zeros((n, c));
        for mut row in out.rows_mut() {
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = rng.random::<f64>() + 1e-3;
                s += *x;
            }
            row.mapv_inplace(|x| x / s);
        }
        out
    }

    /// Handcrafted frozen states covering `ds` with random simplex rows.
    fn fake_frozen(ds: &Dataset, n_layers: usize, c_v: usize, c_e: usize, seed: u64) -> FrozenStates {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..n_layers)
            .map(|_| {
                let vertex = random_simplex_rows(ds.total_vertices(), c_v, &mut rng);
                let edge = random_simplex_rows(ds.total_edges(), c_e, &mut rng);
                let vertex_argmax = vertex
                    .rows()
                    .into_iter()
                    .map(|r| crate::vertex::argmax(r))
                    .collect();
                let edge_argmax = edge
                    .rows()
                    .into_iter()
                    .map(|r| crate::vertex::argmax(r))
                    .collect();
                FrozenLayer {
                    vertex,
                    edge,
                    vertex_argmax,
                    edge_argmax,
                }
            })
            .collect();
        FrozenStates {
            mode: StateMode::Continuous,
            layers,
            vertex_offsets: ds.vertex_offsets(),
            edge_offsets: ds.edge_offsets(),
        }
    }

    fn simple_graph() -> Graph {
        Graph {
            n_vertices: 4,
            edges: vec![(1, 0), (2, 0), (3, 2)],
            vertex_features: VertexFeatures::Categorical(vec![0, 1, 0, 1]),
            edge_features: EdgeFeatures::Absent,
            target: None,
        }
    }

    #[test]
    fn bigram_hand_case() {
        // Vertex 0 one-hot at state 1, its two in-neighbors one-hot at 0:
        // φ_{1·2+0}(0) = 2, everything else about vertex 0 is zero.
        let g = simple_graph();
        let idx = build_index(&g);
        let q = array![[0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let b = vertex_bigram(&g, &idx, q.view()).unwrap();
        assert_eq!(b.dim(), (4, 4));
        assert_abs_diff_eq!(b[(0, 2)], 2.0);
        assert_abs_diff_eq!(b[(0, 0)], 0.0);
        assert_abs_diff_eq!(b[(0, 1)], 0.0);
        assert_abs_diff_eq!(b[(0, 3)], 0.0);
        // Vertex 1 is isolated (no incoming edges): zero row.
        assert!(b.row(1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bigram_rows_sum_to_in_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(2..8);
            let m = rng.random_range(0..12);
            let edges: Vec<(u32, u32)> = (0..m)
                .map(|_| (rng.random_range(0..n) as u32, rng.random_range(0..n) as u32))
                .collect();
            let g = Graph {
                n_vertices: n,
                edges,
                vertex_features: VertexFeatures::Categorical(vec![0; n]),
                edge_features: EdgeFeatures::Absent,
                target: None,
            };
            let idx = build_index(&g);
            let q = random_simplex_rows(n, 3, &mut rng);
            let b = vertex_bigram(&g, &idx, q.view()).unwrap();
            for u in 0..n {
                assert_abs_diff_eq!(
                    b.row(u).sum(),
                    idx.in_degree(u) as f64,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn bigram_shape_error() {
        let g = simple_graph();
        let idx = build_index(&g);
        let q = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            vertex_bigram(&g, &idx, q.view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn graph_dim_examples() {
        let ds = Dataset::from_graphs(vec![simple_graph()], false).unwrap();
        let fs = fake_frozen(&ds, 3, 20, 5, 1);
        let cfg = EmbeddingConfig {
            representation: Representation::Unigram,
            readout: Readout::Mean,
            include_edge_unigrams: true,
        };
        assert_eq!(graph_embedding_dim(&cfg, 3, 20, 5), 75);
        let x = graph_embedding(&ds, &fs, &cfg).unwrap();
        assert_eq!(x.dim(), (1, 75));
        let uni = EmbeddingConfig {
            representation: Representation::Unibigram,
            include_edge_unigrams: false,
            ..cfg
        };
        assert_eq!(graph_embedding_dim(&uni, 3, 20, 5), 3 * (20 + 400));
    }

    #[test]
    fn mean_readout_of_identical_rows_is_that_row() {
        let ds = Dataset::from_graphs(vec![simple_graph()], false).unwrap();
        let mut fs = fake_frozen(&ds, 1, 3, 2, 2);
        let row = array![0.2, 0.5, 0.3];
        for mut r in fs.layers[0].vertex.rows_mut() {
            r.assign(&row);
        }
        let cfg = EmbeddingConfig {
            representation: Representation::Unigram,
            readout: Readout::Mean,
            include_edge_unigrams: false,
        };
        let x = graph_embedding(&ds, &fs, &cfg).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(x[(0, i)], row[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let n = 6;
            let edges = vec![(0u32, 1u32), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (2, 5)];
            let g = Graph {
                n_vertices: n,
                edges: edges.clone(),
                vertex_features: VertexFeatures::Categorical(vec![0; n]),
                edge_features: EdgeFeatures::Absent,
                target: None,
            };
            let ds = Dataset::from_graphs(vec![g], false).unwrap();
            let fs = fake_frozen(&ds, 2, 3, 2, 100 + trial);

            // Random vertex permutation and edge-order shuffle.
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let mut edge_order: Vec<usize> = (0..edges.len()).collect();
            for i in (1..edges.len()).rev() {
                edge_order.swap(i, rng.random_range(0..=i));
            }
            let perm_edges: Vec<(u32, u32)> = edge_order
                .iter()
                .map(|&e| {
                    let (u, v) = edges[e];
                    (perm[u as usize] as u32, perm[v as usize] as u32)
                })
                .collect();
            let g2 = Graph {
                n_vertices: n,
                edges: perm_edges,
                vertex_features: VertexFeatures::Categorical(vec![0; n]),
                edge_features: EdgeFeatures::Absent,
                target: None,
            };
            let ds2 = Dataset::from_graphs(vec![g2], false).unwrap();
            let mut fs2 = fake_frozen(&ds2, 2, 3, 2, 100 + trial);
            for l in 0..2 {
                for u in 0..n {
                    let src = fs.layers[l].vertex.row(u).to_owned();
                    fs2.layers[l].vertex.row_mut(perm[u]).assign(&src);
                }
                for (new_e, &old_e) in edge_order.iter().enumerate() {
                    let src = fs.layers[l].edge.row(old_e).to_owned();
                    fs2.layers[l].edge.row_mut(new_e).assign(&src);
                }
            }

            for representation in [Representation::Unigram, Representation::Unibigram] {
                for readout in [Readout::Mean, Readout::Sum] {
                    let cfg = EmbeddingConfig {
                        representation,
                        readout,
                        include_edge_unigrams: true,
                    };
                    let x1 = graph_embedding(&ds, &fs, &cfg).unwrap();
                    let x2 = graph_embedding(&ds2, &fs2, &cfg).unwrap();
                    for d in 0..x1.ncols() {
                        assert_abs_diff_eq!(x1[(0, d)], x2[(0, d)], epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn mean_unigram_blocks_are_simplices() {
        let ds = Dataset::from_graphs(vec![simple_graph()], false).unwrap();
        let fs = fake_frozen(&ds, 3, 4, 2, 11);
        let cfg = EmbeddingConfig {
            representation: Representation::Unigram,
            readout: Readout::Mean,
            include_edge_unigrams: true,
        };
        let x = graph_embedding(&ds, &fs, &cfg).unwrap();
        for l in 0..3 {
            let base = l * 6;
            let v_block = x.slice(s![0, base..base + 4]);
            assert_abs_diff_eq!(v_block.sum(), 1.0, epsilon = 1e-9);
            assert!(v_block.iter().all(|&p| (0.0..=1.0).contains(&p)));
            let e_block = x.slice(s![0, base + 4..base + 6]);
            assert_abs_diff_eq!(e_block.sum(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn vertex_and_edge_unit_embeddings() {
        let ds = Dataset::from_graphs(vec![simple_graph()], false).unwrap();
        let fs = fake_frozen(&ds, 2, 3, 5, 12);
        let cfg = EmbeddingConfig {
            representation: Representation::Unigram,
            readout: Readout::Mean,
            include_edge_unigrams: true,
        };
        let xv = vertex_embedding(&ds, &fs, &cfg).unwrap();
        assert_eq!(xv.dim(), (4, 6));
        for u in 0..4 {
            for l in 0..2 {
                let block = xv.slice(s![u, l * 3..(l + 1) * 3]);
                assert_abs_diff_eq!(block.sum(), 1.0, epsilon = 1e-9);
            }
        }
        let xe = edge_embedding(&ds, &fs).unwrap();
        assert_eq!(xe.dim(), (3, 10));
        for e in 0..3 {
            assert_abs_diff_eq!(xe.row(e).sum(), 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_graph_embeds_as_zeros() {
        let empty = Graph {
            n_vertices: 0,
            edges: vec![],
            vertex_features: VertexFeatures::Categorical(vec![]),
            edge_features: EdgeFeatures::Absent,
            target: None,
        };
        let ds = Dataset::from_graphs(vec![simple_graph(), empty], false).unwrap();
        let fs = fake_frozen(&ds, 2, 3, 2, 13);
        for readout in [Readout::Mean, Readout::Sum] {
            let cfg = EmbeddingConfig {
                representation: Representation::Unigram,
                readout,
                include_edge_unigrams: true,
            };
            let x = graph_embedding(&ds, &fs, &cfg).unwrap();
            assert!(x.row(1).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn csv_layout() {
        let ds = Dataset::from_graphs(vec![simple_graph()], false).unwrap();
        let x = array![[0.25, 1.5], [0.5, 2.0], [0.75, 2.5]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.csv");
        write_embedding_csv(&path, EmbeddingScope::Edge, &ds, x.view()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "graph,edge,src,dst,e0,e1");
        assert_eq!(lines[1], "0,0,1,0,0.25,1.5");
        assert_eq!(lines[3], "0,2,3,2,0.75,2.5");
        // Row-count mismatch is rejected.
        let bad = array![[0.0, 0.0]];
        assert!(matches!(
            write_embedding_csv(&path, EmbeddingScope::Edge, &ds, bad.view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn binary_matrix_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = Array2::from_shape_fn((7, 5), |_| rng.random::<f64>() * 1e3 - 500.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        write_embedding_matrix(&path, x.view()).unwrap();
        let back = read_embedding_matrix(&path).unwrap();
        assert_eq!(x, back);
        // Corrupt header is a format error.
        std::fs::write(&path, b"not json\n").unwrap();
        assert!(matches!(read_embedding_matrix(&path), Err(Error::Format(_))));
    }
}
