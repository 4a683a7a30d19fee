//! Dataset loaders: the TU benchmark text format and a JSONL graph format.
//!
//! Both loaders take an `undirected` flag; when set they ensure every edge has
//! its reverse present (adding missing reversals with copied features) and
//! record the flag in the dataset metadata.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write as IoWrite};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graph::{Dataset, EdgeFeatures, Graph, Target, VertexFeatures};

/// Adds the missing reversed copies so the edge multiset becomes symmetric.
/// Features of an appended edge are copied from its forward edge. Graphs that
/// are already symmetric are returned unchanged.
pub fn symmetrize(g: &Graph) -> Graph {
    let mut count: HashMap<(u32, u32), i64> = HashMap::new();
    for &e in &g.edges {
        *count.entry(e).or_insert(0) += 1;
    }
    let mut surplus: HashMap<(u32, u32), i64> = HashMap::new();
    for (&(u, v), &c) in &count {
        if u == v {
            continue;
        }
        let rev = count.get(&(v, u)).copied().unwrap_or(0);
        if c > rev {
            surplus.insert((u, v), c - rev);
        }
    }
    if surplus.is_empty() {
        return g.clone();
    }
    let mut edges = g.edges.clone();
    let mut copied: Vec<usize> = Vec::new();
    for (k, &(u, v)) in g.edges.iter().enumerate() {
        if u == v {
            continue;
        }
        if let Some(s) = surplus.get_mut(&(u, v)) {
            if *s > 0 {
                *s -= 1;
                edges.push((v, u));
                copied.push(k);
            }
        }
    }
    let edge_features = match &g.edge_features {
        EdgeFeatures::Absent => EdgeFeatures::Absent,
        EdgeFeatures::Categorical(ids) => {
            let mut out = ids.clone();
            out.extend(copied.iter().map(|&k| ids[k]));
            EdgeFeatures::Categorical(out)
        }
        EdgeFeatures::Continuous(rows) => {
            let dim = rows.ncols();
            let mut out = Array2::zeros((edges.len(), dim));
            for (i, row) in rows.rows().into_iter().enumerate() {
                out.row_mut(i).assign(&row);
            }
            for (i, &k) in copied.iter().enumerate() {
                out.row_mut(rows.nrows() + i).assign(&rows.row(k));
            }
            EdgeFeatures::Continuous(out)
        }
    };
    Graph {
        edges,
        edge_features,
        ..g.clone()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line?);
    }
    Ok(lines)
}

fn parse_int(tok: &str, path: &Path, line: usize) -> Result<i64> {
    tok.trim().parse::<i64>().map_err(|_| {
        Error::Format(format!(
            "{} line {}: expected integer, got {:?}",
            path.display(),
            line,
            tok.trim()
        ))
    })
}

fn parse_float(tok: &str, path: &Path, line: usize) -> Result<f64> {
    let x = tok.trim().parse::<f64>().map_err(|_| {
        Error::Format(format!(
            "{} line {}: expected number, got {:?}",
            path.display(),
            line,
            tok.trim()
        ))
    })?;
    if !x.is_finite() {
        return Err(Error::Value(format!(
            "{} line {}: non-finite value {x}",
            path.display(),
            line
        )));
    }
    Ok(x)
}

/// Reads a file of integer rows, skipping blank lines. Returns values with
/// their original 1-based line numbers.
fn int_column(path: &Path) -> Result<Vec<i64>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_int(line, path, i + 1)?);
    }
    Ok(out)
}

fn float_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|tok| parse_float(tok, path, i + 1))
            .collect();
        let row = row?;
        if let Some(first) = out.first() {
            if row.len() != first.len() {
                return Err(Error::Format(format!(
                    "{} line {}: ragged row, expected {} columns, got {}",
                    path.display(),
                    i + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Dense remap of raw integer labels to `0..K` by ascending raw value.
/// Returns (dense ids, raw label per dense id).
fn dense_remap(raw: &[i64]) -> (Vec<u32>, Vec<i64>) {
    let mut distinct: Vec<i64> = raw.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let index: HashMap<i64, u32> = distinct
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i as u32))
        .collect();
    (raw.iter().map(|l| index[l]).collect(), distinct)
}

/// Loads a dataset in the TU benchmark text format from a directory.
///
/// The directory must contain exactly one `<prefix>_A.txt` (comma-separated
/// 1-indexed vertex pairs in a dataset-wide numbering) and the matching
/// `<prefix>_graph_indicator.txt` (graph id per vertex). Optional files:
/// `<prefix>_node_labels.txt`, `<prefix>_node_attributes.txt`,
/// `<prefix>_edge_labels.txt`, `<prefix>_edge_attributes.txt`,
/// `<prefix>_graph_labels.txt`, `<prefix>_graph_attributes.txt`.
///
/// Vertex ids are converted to a per-graph 0-indexed numbering. Categorical
/// vertex and class labels are remapped to dense `0..K` ranges with the raw
/// values recorded in the metadata. With `undirected`, each graph's edge list
/// is symmetrized unless already symmetric.
pub fn load_tu_dataset(dir: impl AsRef<Path>, undirected: bool) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut a_files: Vec<String> = Vec::new();
    let rd = fs::read_dir(dir)
        .map_err(|e| Error::Format(format!("cannot read directory {}: {e}", dir.display())))?;
    for entry in rd {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(prefix) = name.strip_suffix("_A.txt") {
            a_files.push(prefix.to_string());
        }
    }
    a_files.sort();
    let prefix = match a_files.as_slice() {
        [p] => p.clone(),
        [] => {
            return Err(Error::Format(format!(
                "no *_A.txt edge file in {}",
                dir.display()
            )))
        }
        _ => {
            return Err(Error::Format(format!(
                "multiple *_A.txt edge files in {}: {}",
                dir.display(),
                a_files.join(", ")
            )))
        }
    };
    let fpath = |suffix: &str| dir.join(format!("{prefix}_{suffix}.txt"));

    let indicator_path = fpath("graph_indicator");
    if !indicator_path.exists() {
        return Err(Error::Format(format!(
            "missing mandatory file {}",
            indicator_path.display()
        )));
    }
    let indicator = int_column(&indicator_path)?;
    if indicator.is_empty() {
        return Err(Error::Format(format!(
            "{} is empty",
            indicator_path.display()
        )));
    }
    let n_graphs = *indicator.iter().max().unwrap();
    if n_graphs < 1 || indicator.iter().any(|&g| g < 1 || g > n_graphs) {
        return Err(Error::Integrity(format!(
            "{}: graph ids must cover 1..=G",
            indicator_path.display()
        )));
    }
    let n_graphs = n_graphs as usize;
    let n_total = indicator.len();

    // Per-graph renumbering of the dataset-wide vertex ids, by order of
    // appearance in the indicator file.
    let mut graph_of = vec![0usize; n_total];
    let mut local_of = vec![0u32; n_total];
    let mut sizes = vec![0usize; n_graphs];
    for (v, &gid) in indicator.iter().enumerate() {
        let gi = gid as usize - 1;
        graph_of[v] = gi;
        local_of[v] = sizes[gi] as u32;
        sizes[gi] += 1;
    }

    let a_path = fpath("A");
    let mut edges: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_graphs];
    let mut edge_graph: Vec<usize> = Vec::new();
    for (i, line) in read_lines(&a_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 2 {
            return Err(Error::Format(format!(
                "{} line {}: expected two comma-separated ids",
                a_path.display(),
                i + 1
            )));
        }
        let u = parse_int(toks[0], &a_path, i + 1)?;
        let v = parse_int(toks[1], &a_path, i + 1)?;
        if u < 1 || u as usize > n_total || v < 1 || v as usize > n_total {
            return Err(Error::Integrity(format!(
                "{} line {}: vertex id out of range 1..={}",
                a_path.display(),
                i + 1,
                n_total
            )));
        }
        let (u, v) = (u as usize - 1, v as usize - 1);
        if graph_of[u] != graph_of[v] {
            return Err(Error::Integrity(format!(
                "{} line {}: edge endpoints belong to different graphs",
                a_path.display(),
                i + 1
            )));
        }
        edges[graph_of[u]].push((local_of[u], local_of[v]));
        edge_graph.push(graph_of[u]);
    }
    let n_edges_total = edge_graph.len();

    // Optional vertex features. Attributes win over labels when both exist.
    let node_attr_path = fpath("node_attributes");
    let node_label_path = fpath("node_labels");
    let mut vertex_label_map = None;
    let vertex_feats: Vec<VertexFeatures> = if node_attr_path.exists() {
        let rows = float_rows(&node_attr_path)?;
        if rows.len() != n_total {
            return Err(Error::Format(format!(
                "{}: {} rows for {} vertices",
                node_attr_path.display(),
                rows.len(),
                n_total
            )));
        }
        let dim = rows.first().map_or(0, |r| r.len());
        let mut per_graph: Vec<Vec<f64>> = vec![Vec::new(); n_graphs];
        for (v, row) in rows.iter().enumerate() {
            per_graph[graph_of[v]].extend_from_slice(row);
        }
        per_graph
            .into_iter()
            .enumerate()
            .map(|(gi, flat)| {
                VertexFeatures::Continuous(
                    Array2::from_shape_vec((sizes[gi], dim), flat).expect("attr shape"),
                )
            })
            .collect()
    } else if node_label_path.exists() {
        let raw = int_column(&node_label_path)?;
        if raw.len() != n_total {
            return Err(Error::Format(format!(
                "{}: {} rows for {} vertices",
                node_label_path.display(),
                raw.len(),
                n_total
            )));
        }
        let (dense, map) = dense_remap(&raw);
        vertex_label_map = Some(map);
        let mut per_graph: Vec<Vec<u32>> = vec![Vec::new(); n_graphs];
        for (v, &id) in dense.iter().enumerate() {
            per_graph[graph_of[v]].push(id);
        }
        per_graph.into_iter().map(VertexFeatures::Categorical).collect()
    } else {
        sizes
            .iter()
            .map(|&n| VertexFeatures::Categorical(vec![0; n]))
            .collect()
    };

    // Optional edge features, aligned with the rows of the A file.
    let edge_attr_path = fpath("edge_attributes");
    let edge_label_path = fpath("edge_labels");
    let edge_feats: Vec<EdgeFeatures> = if edge_attr_path.exists() {
        let rows = float_rows(&edge_attr_path)?;
        if rows.len() != n_edges_total {
            return Err(Error::Format(format!(
                "{}: {} rows for {} edges",
                edge_attr_path.display(),
                rows.len(),
                n_edges_total
            )));
        }
        let dim = rows.first().map_or(0, |r| r.len());
        let mut per_graph: Vec<Vec<f64>> = vec![Vec::new(); n_graphs];
        for (e, row) in rows.iter().enumerate() {
            per_graph[edge_graph[e]].extend_from_slice(row);
        }
        per_graph
            .into_iter()
            .enumerate()
            .map(|(gi, flat)| {
                EdgeFeatures::Continuous(
                    Array2::from_shape_vec((edges[gi].len(), dim), flat).expect("attr shape"),
                )
            })
            .collect()
    } else if edge_label_path.exists() {
        let raw = int_column(&edge_label_path)?;
        if raw.len() != n_edges_total {
            return Err(Error::Format(format!(
                "{}: {} rows for {} edges",
                edge_label_path.display(),
                raw.len(),
                n_edges_total
            )));
        }
        let (dense, _map) = dense_remap(&raw);
        let mut per_graph: Vec<Vec<u32>> = vec![Vec::new(); n_graphs];
        for (e, &id) in dense.iter().enumerate() {
            per_graph[edge_graph[e]].push(id);
        }
        per_graph.into_iter().map(EdgeFeatures::Categorical).collect()
    } else {
        (0..n_graphs).map(|_| EdgeFeatures::Absent).collect()
    };

    // Optional targets. Class labels win over real-valued attributes.
    let graph_label_path = fpath("graph_labels");
    let graph_attr_path = fpath("graph_attributes");
    let mut class_label_map = None;
    let targets: Vec<Option<Target>> = if graph_label_path.exists() {
        let raw = int_column(&graph_label_path)?;
        if raw.len() != n_graphs {
            return Err(Error::Format(format!(
                "{}: {} rows for {} graphs",
                graph_label_path.display(),
                raw.len(),
                n_graphs
            )));
        }
        let (dense, map) = dense_remap(&raw);
        class_label_map = Some(map);
        dense.into_iter().map(|c| Some(Target::Class(c))).collect()
    } else if graph_attr_path.exists() {
        let rows = float_rows(&graph_attr_path)?;
        if rows.len() != n_graphs {
            return Err(Error::Format(format!(
                "{}: {} rows for {} graphs",
                graph_attr_path.display(),
                rows.len(),
                n_graphs
            )));
        }
        rows.into_iter()
            .map(|r| Some(Target::Values(Array1::from_vec(r))))
            .collect()
    } else {
        (0..n_graphs).map(|_| None).collect()
    };

    let mut graphs = Vec::with_capacity(n_graphs);
    for gi in 0..n_graphs {
        let mut g = Graph {
            n_vertices: sizes[gi],
            edges: std::mem::take(&mut edges[gi]),
            vertex_features: vertex_feats[gi].clone(),
            edge_features: edge_feats[gi].clone(),
            target: targets[gi].clone(),
        };
        if undirected {
            g = symmetrize(&g);
        }
        graphs.push(g);
    }
    let mut ds = Dataset::from_graphs(graphs, undirected)?;
    ds.meta.vertex_label_map = vertex_label_map;
    ds.meta.class_label_map = class_label_map;
    Ok(ds)
}

fn jsonl_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

fn value_as_u32(v: &Value, line: usize, what: &str) -> Result<u32> {
    v.as_u64()
        .filter(|&x| x <= u32::MAX as u64)
        .map(|x| x as u32)
        .ok_or_else(|| jsonl_err(line, format!("{what} must be a non-negative integer, got {v}")))
}

fn value_as_f64(v: &Value, line: usize, what: &str) -> Result<f64> {
    let x = v
        .as_f64()
        .ok_or_else(|| jsonl_err(line, format!("{what} must be a number, got {v}")))?;
    if !x.is_finite() {
        return Err(Error::Value(format!("line {line}: non-finite {what}")));
    }
    Ok(x)
}

fn parse_feature_array(
    arr: &[Value],
    line: usize,
    what: &str,
) -> Result<std::result::Result<Vec<u32>, Array2<f64>>> {
    // An array of integers is categorical; an array of arrays of numbers is
    // continuous. Anything mixed is a format error.
    if arr.is_empty() {
        return Ok(Ok(Vec::new()));
    }
    match &arr[0] {
        Value::Array(_) => {
            let mut dim: Option<usize> = None;
            let mut flat: Vec<f64> = Vec::new();
            for v in arr {
                let row = v.as_array().ok_or_else(|| {
                    jsonl_err(line, format!("{what} rows must all be arrays"))
                })?;
                if let Some(d) = dim {
                    if row.len() != d {
                        return Err(jsonl_err(
                            line,
                            format!("{what} rows must have uniform length"),
                        ));
                    }
                } else {
                    dim = Some(row.len());
                }
                for x in row {
                    flat.push(value_as_f64(x, line, what)?);
                }
            }
            let dim = dim.unwrap_or(0);
            Ok(Err(Array2::from_shape_vec((arr.len(), dim), flat)
                .expect("uniform rows")))
        }
        _ => {
            let mut ids = Vec::with_capacity(arr.len());
            for v in arr {
                ids.push(value_as_u32(v, line, what)?);
            }
            Ok(Ok(ids))
        }
    }
}

/// Loads a dataset from a JSONL file: one JSON object per line, of the form
/// `{"n": int, "edges": [[u,v],...], "x": [...], "a": [...]|null, "y": ...|null}`.
///
/// `x` (and `a`) hold either one integer per unit (categorical) or one array
/// of numbers per unit (continuous). `y` is an integer class, a number, or an
/// array of numbers. With `undirected`, edge lists are symmetrized unless
/// already symmetric.
pub fn load_jsonl(path: impl AsRef<Path>, undirected: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let mut graphs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)
            .map_err(|e| jsonl_err(lineno, format!("malformed JSON: {e}")))?;
        let obj = v
            .as_object()
            .ok_or_else(|| jsonl_err(lineno, "expected a JSON object"))?;
        let n = obj
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| jsonl_err(lineno, "\"n\" must be a non-negative integer"))?
            as usize;
        let edges_val = obj
            .get("edges")
            .and_then(Value::as_array)
            .ok_or_else(|| jsonl_err(lineno, "\"edges\" must be an array"))?;
        let mut edges = Vec::with_capacity(edges_val.len());
        for pair in edges_val {
            let pair = pair
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| jsonl_err(lineno, "each edge must be a [u,v] pair"))?;
            edges.push((
                value_as_u32(&pair[0], lineno, "edge endpoint")?,
                value_as_u32(&pair[1], lineno, "edge endpoint")?,
            ));
        }
        let x = obj
            .get("x")
            .and_then(Value::as_array)
            .ok_or_else(|| jsonl_err(lineno, "\"x\" must be an array"))?;
        let vertex_features = match parse_feature_array(x, lineno, "\"x\"")? {
            Ok(ids) => VertexFeatures::Categorical(ids),
            Err(rows) => VertexFeatures::Continuous(rows),
        };
        let edge_features = match obj.get("a") {
            None | Some(Value::Null) => EdgeFeatures::Absent,
            Some(Value::Array(arr)) => match parse_feature_array(arr, lineno, "\"a\"")? {
                Ok(ids) => EdgeFeatures::Categorical(ids),
                Err(rows) => EdgeFeatures::Continuous(rows),
            },
            Some(other) => {
                return Err(jsonl_err(
                    lineno,
                    format!("\"a\" must be an array or null, got {other}"),
                ))
            }
        };
        let target = match obj.get("y") {
            None | Some(Value::Null) => None,
            Some(Value::Number(num)) if num.is_u64() || num.is_i64() => {
                Some(Target::Class(value_as_u32(
                    obj.get("y").unwrap(),
                    lineno,
                    "\"y\" class",
                )?))
            }
            Some(Value::Number(_)) => Some(Target::Values(Array1::from_vec(vec![
                value_as_f64(obj.get("y").unwrap(), lineno, "\"y\"")?,
            ]))),
            Some(Value::Array(arr)) => {
                let mut vals = Vec::with_capacity(arr.len());
                for v in arr {
                    vals.push(value_as_f64(v, lineno, "\"y\"")?);
                }
                Some(Target::Values(Array1::from_vec(vals)))
            }
            Some(other) => {
                return Err(jsonl_err(
                    lineno,
                    format!("\"y\" must be a number, array or null, got {other}"),
                ))
            }
        };
        let mut g = Graph {
            n_vertices: n,
            edges,
            vertex_features,
            edge_features,
            target,
        };
        g.validate()
            .map_err(|e| jsonl_err(lineno, format!("invalid graph: {e}")))?;
        if undirected {
            g = symmetrize(&g);
        }
        graphs.push(g);
    }
    Dataset::from_graphs(graphs, undirected)
}

/// Writes a dataset in the JSONL format read by [`load_jsonl`].
/// `load_jsonl(save_jsonl(ds))` reproduces the graphs bit-exactly; raw-label
/// provenance in the metadata is not part of the format.
pub fn save_jsonl(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path)
        .map_err(|e| Error::Format(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    for g in &ds.graphs {
        let x = match &g.vertex_features {
            VertexFeatures::Categorical(ids) => json!(ids),
            VertexFeatures::Continuous(rows) => {
                json!(rows.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            }
        };
        let a = match &g.edge_features {
            EdgeFeatures::Absent => Value::Null,
            EdgeFeatures::Categorical(ids) => json!(ids),
            EdgeFeatures::Continuous(rows) => {
                json!(rows.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            }
        };
        let y = match &g.target {
            None => Value::Null,
            Some(Target::Class(c)) => json!(c),
            Some(Target::Values(v)) => json!(v.to_vec()),
        };
        let edges: Vec<[u32; 2]> = g.edges.iter().map(|&(u, v)| [u, v]).collect();
        let line = json!({
            "n": g.n_vertices,
            "edges": edges,
            "x": x,
            "a": a,
            "y": y,
        });
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FeatureKind;
    use ndarray::array;

    fn fixture_dir() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/tu_fixture")
    }

    #[test]
    fn tu_fixture_counts_and_remaps() {
        let ds = load_tu_dataset(fixture_dir(), true).unwrap();
        assert_eq!(ds.n_graphs(), 2);
        let sizes: Vec<usize> = ds.graphs.iter().map(|g| g.n_vertices).collect();
        assert_eq!(sizes, vec![3, 2]);
        let edge_counts: Vec<usize> = ds.graphs.iter().map(|g| g.n_edges()).collect();
        assert_eq!(edge_counts, vec![4, 2]);
        // Labels {7,9} become {0,1}.
        assert_eq!(
            ds.meta.vertex_kind,
            FeatureKind::Categorical { domain: 2 }
        );
        assert_eq!(ds.meta.vertex_label_map, Some(vec![7, 9]));
        match &ds.graphs[0].vertex_features {
            VertexFeatures::Categorical(ids) => assert_eq!(ids, &vec![0, 1, 0]),
            _ => panic!("expected categorical labels"),
        }
        // Raw classes {-1, 1} become {0, 1}.
        assert_eq!(ds.meta.class_label_map, Some(vec![-1, 1]));
        assert_eq!(ds.graphs[0].target, Some(Target::Class(1)));
        assert_eq!(ds.graphs[1].target, Some(Target::Class(0)));
        // Reversed edges copy the forward edge attribute.
        match &ds.graphs[0].edge_features {
            EdgeFeatures::Continuous(rows) => {
                assert_eq!(rows.column(0).to_vec(), vec![0.5, 1.5, 0.5, 1.5]);
            }
            _ => panic!("expected continuous edge attributes"),
        }
        assert!(ds.meta.undirected);
    }

    #[test]
    fn tu_already_symmetric_is_unchanged() {
        let g = Graph {
            n_vertices: 2,
            edges: vec![(0, 1), (1, 0)],
            vertex_features: VertexFeatures::Categorical(vec![0, 0]),
            edge_features: EdgeFeatures::Absent,
            target: None,
        };
        assert_eq!(symmetrize(&g), g);
        // Self-loops need no reversal.
        let loopy = Graph {
            edges: vec![(0, 0)],
            ..g.clone()
        };
        assert_eq!(symmetrize(&loopy), loopy);
    }

    #[test]
    fn tu_empty_edge_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("E_A.txt"), "").unwrap();
        std::fs::write(dir.path().join("E_graph_indicator.txt"), "1\n1\n2\n").unwrap();
        let ds = load_tu_dataset(dir.path(), false).unwrap();
        assert_eq!(ds.n_graphs(), 2);
        assert_eq!(ds.total_edges(), 0);
        let sizes: Vec<usize> = ds.graphs.iter().map(|g| g.n_vertices).collect();
        assert_eq!(sizes, vec![2, 1]);
    }

    #[test]
    fn tu_missing_indicator_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("M_A.txt"), "1, 2\n").unwrap();
        assert!(matches!(
            load_tu_dataset(dir.path(), false),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn tu_out_of_range_vertex_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("R_A.txt"), "1, 5\n").unwrap();
        std::fs::write(dir.path().join("R_graph_indicator.txt"), "1\n1\n").unwrap();
        assert!(matches!(
            load_tu_dataset(dir.path(), false),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn tu_ragged_attributes_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("G_A.txt"), "1, 2\n2, 1\n").unwrap();
        std::fs::write(dir.path().join("G_graph_indicator.txt"), "1\n1\n").unwrap();
        std::fs::write(dir.path().join("G_edge_attributes.txt"), "0.5, 1.0\n0.5\n").unwrap();
        assert!(matches!(
            load_tu_dataset(dir.path(), false),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn jsonl_single_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        std::fs::write(&path, "{\"n\":2,\"edges\":[[0,1]],\"x\":[0,1]}\n").unwrap();
        let ds = load_jsonl(&path, false).unwrap();
        assert_eq!(ds.n_graphs(), 1);
        assert_eq!(ds.graphs[0].n_vertices, 2);
        assert_eq!(ds.graphs[0].edges, vec![(0, 1)]);
        assert_eq!(ds.meta.edge_kind, FeatureKind::Absent);
    }

    #[test]
    fn jsonl_bad_type_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        std::fs::write(&path, "{\"n\":2,\"edges\":[],\"x\":[0,\"a\"]}\n").unwrap();
        match load_jsonl(&path, false) {
            Err(Error::Format(msg)) => assert!(msg.contains("line 1"), "got {msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_malformed_json_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        std::fs::write(
            &path,
            "{\"n\":1,\"edges\":[],\"x\":[0]}\n{\"n\":1,\"edges\":\n",
        )
        .unwrap();
        match load_jsonl(&path, false) {
            Err(Error::Format(msg)) => assert!(msg.contains("line 2"), "got {msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_rejects_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        // JSON has no NaN literal; a huge exponent overflows to infinity on
        // some parsers, so use an explicit float check via 1e999.
        std::fs::write(&path, "{\"n\":1,\"edges\":[],\"x\":[[1e999]]}\n").unwrap();
        let res = load_jsonl(&path, false);
        assert!(res.is_err(), "expected rejection of non-finite value");
    }

    fn strip_label_maps(mut ds: Dataset) -> Dataset {
        ds.meta.vertex_label_map = None;
        ds.meta.class_label_map = None;
        ds
    }

    #[test]
    fn jsonl_round_trip_tu_fixture() {
        let ds = load_tu_dataset(fixture_dir(), true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        save_jsonl(&ds, &path).unwrap();
        let back = load_jsonl(&path, true).unwrap();
        assert_eq!(strip_label_maps(ds), back);
    }

    #[test]
    fn jsonl_round_trip_continuous_bits() {
        let g = Graph {
            n_vertices: 3,
            edges: vec![(0, 1), (1, 2)],
            vertex_features: VertexFeatures::Continuous(array![
                [0.1, -1.0e-17],
                [std::f64::consts::PI, 2.0],
                [f64::MIN_POSITIVE, 1.0 / 3.0]
            ]),
            edge_features: EdgeFeatures::Continuous(array![[0.3], [0.7000000000000001]]),
            target: Some(Target::Values(array![1.0 / 7.0])),
        };
        let ds = Dataset::from_graphs(vec![g], false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bits.jsonl");
        save_jsonl(&ds, &path).unwrap();
        let back = load_jsonl(&path, false).unwrap();
        assert_eq!(ds, back);
    }
}
