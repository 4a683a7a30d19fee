//! Link prediction on a single large graph: hold out positive edges, sample
//! negatives, train per-layer binary predictors on candidate-pair edge
//! priors, and average the per-layer probabilities. A mean-vertex-embedding
//! baseline with a single predictor covers the edge-blind comparison.

use std::collections::HashSet;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::edge::edge_prior;
use crate::error::{Error, Result};
use crate::graph::{EdgeFeatures, FeatureRef, Graph};
use crate::stack::{derive_seed, FrozenStates, StackModel};

use super::mlp::{train_mlp_with_val, Loss, MLPConfig, Predictor, Targets};

/// A labeled candidate pair: endpoints plus whether the edge truly exists.
pub type LabeledPair = (u32, u32, bool);

/// Train graph plus labeled pair sets. Pairs are unordered `(min, max)` for
/// undirected graphs and ordered otherwise; positive/negative sets are
/// disjoint within and across splits.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSplit {
    pub train_graph: Graph,
    pub train_pairs: Vec<LabeledPair>,
    pub val_pairs: Vec<LabeledPair>,
    pub test_pairs: Vec<LabeledPair>,
    pub undirected: bool,
}

pub fn labels_of(pairs: &[LabeledPair]) -> Vec<bool> {
    pairs.iter().map(|&(_, _, y)| y).collect()
}

fn canonical(u: u32, v: u32, undirected: bool) -> (u32, u32) {
    if undirected && u > v {
        (v, u)
    } else {
        (u, v)
    }
}

/// Splits a graph for link prediction: removes `val_frac`/`test_frac` of the
/// unique positive pairs from the training graph (both directions when
/// undirected), and samples `neg_ratio` negatives per positive, uniformly
/// over non-edges without self-loops, disjoint across splits.
pub fn linkpred_prepare(
    g: &Graph,
    undirected: bool,
    val_frac: f64,
    test_frac: f64,
    neg_ratio: f64,
    seed: u64,
) -> Result<LinkSplit> {
    if !(0.0..1.0).contains(&val_frac)
        || !(0.0..1.0).contains(&test_frac)
        || val_frac + test_frac >= 1.0
    {
        return Err(Error::Config(format!(
            "val_frac {val_frac} and test_frac {test_frac} must lie in (0,1) and sum below 1"
        )));
    }
    if !(neg_ratio > 0.0) {
        return Err(Error::Config("neg_ratio must be positive".into()));
    }
    g.validate()?;
    let n = g.n_vertices;

    // Unique candidate pairs (self-loops stay in the training graph).
    let mut seen = HashSet::new();
    let mut positives: Vec<(u32, u32)> = Vec::new();
    for &(u, v) in &g.edges {
        if u == v {
            continue;
        }
        let p = canonical(u, v, undirected);
        if seen.insert(p) {
            positives.push(p);
        }
    }
    let n_pos = positives.len();
    let n_val = (val_frac * n_pos as f64).floor() as usize;
    let n_test = (test_frac * n_pos as f64).floor() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n_pos {
        return Err(Error::Config(format!(
            "{n_pos} positive pairs cannot supply val {val_frac} and test {test_frac} splits"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n_pos).rev() {
        positives.swap(i, rng.random_range(0..=i));
    }
    let test_pos: Vec<(u32, u32)> = positives[..n_test].to_vec();
    let val_pos: Vec<(u32, u32)> = positives[n_test..n_test + n_val].to_vec();
    let train_pos: Vec<(u32, u32)> = positives[n_test + n_val..].to_vec();

    // Training graph keeps only edges whose pair was not held out.
    let held: HashSet<(u32, u32)> = test_pos.iter().chain(val_pos.iter()).copied().collect();
    let kept: Vec<usize> = (0..g.n_edges())
        .filter(|&e| {
            let (u, v) = g.edges[e];
            u == v || !held.contains(&canonical(u, v, undirected))
        })
        .collect();
    let edges: Vec<(u32, u32)> = kept.iter().map(|&e| g.edges[e]).collect();
    let edge_features = match &g.edge_features {
        EdgeFeatures::Absent => EdgeFeatures::Absent,
        EdgeFeatures::Categorical(ids) => {
            EdgeFeatures::Categorical(kept.iter().map(|&e| ids[e]).collect())
        }
        EdgeFeatures::Continuous(rows) => {
            let mut out = Array2::zeros((kept.len(), rows.ncols()));
            for (r, &e) in kept.iter().enumerate() {
                out.row_mut(r).assign(&rows.row(e));
            }
            EdgeFeatures::Continuous(out)
        }
    };
    let train_graph = Graph {
        n_vertices: n,
        edges,
        vertex_features: g.vertex_features.clone(),
        edge_features,
        target: g.target.clone(),
    };

    // Negative sampling, excluding every true edge and earlier draws.
    let mut existing: HashSet<(u32, u32)> = positives.iter().copied().collect();
    let needed: [usize; 3] = [
        (neg_ratio * train_pos.len() as f64).round() as usize,
        (neg_ratio * n_val as f64).round() as usize,
        (neg_ratio * n_test as f64).round() as usize,
    ];
    let total_needed: usize = needed.iter().sum();
    let mut budget = 200 * total_needed + 10_000;
    let mut sample_negs = |count: usize,
                           existing: &mut HashSet<(u32, u32)>,
                           rng: &mut ChaCha8Rng|
     -> Result<Vec<(u32, u32)>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if budget == 0 {
                return Err(Error::Sampling(format!(
                    "could not sample {count} negative pairs; graph too dense"
                )));
            }
            budget -= 1;
            let u = rng.random_range(0..n) as u32;
            let v = rng.random_range(0..n) as u32;
            if u == v {
                continue;
            }
            let p = canonical(u, v, undirected);
            if existing.insert(p) {
                out.push(p);
            }
        }
        Ok(out)
    };
    let train_neg = sample_negs(needed[0], &mut existing, &mut rng)?;
    let val_neg = sample_negs(needed[1], &mut existing, &mut rng)?;
    let test_neg = sample_negs(needed[2], &mut existing, &mut rng)?;

    let tag = |pos: Vec<(u32, u32)>, neg: Vec<(u32, u32)>| -> Vec<LabeledPair> {
        pos.into_iter()
            .map(|(u, v)| (u, v, true))
            .chain(neg.into_iter().map(|(u, v)| (u, v, false)))
            .collect()
    };
    Ok(LinkSplit {
        train_graph,
        train_pairs: tag(train_pos, train_neg),
        val_pairs: tag(val_pos, val_neg),
        test_pairs: tag(test_pos, test_neg),
        undirected,
    })
}

fn check_vertex(fs: &FrozenStates, graph_idx: usize, u: u32) -> Result<()> {
    let n = fs.vertex_offsets[graph_idx + 1] - fs.vertex_offsets[graph_idx];
    if u as usize >= n {
        return Err(Error::Value(format!(
            "vertex {u} is not part of the training graph (n = {n})"
        )));
    }
    Ok(())
}

/// Per-layer candidate-pair features: the layer-`ℓ` edge prior under the
/// frozen layer-`ℓ−1` endpoint posteriors (uniform at layer 0), replaced by
/// the full posterior when a candidate feature is supplied.
pub fn candidate_layer_features(
    model: &StackModel,
    fs: &FrozenStates,
    graph_idx: usize,
    u: u32,
    v: u32,
    feature: Option<FeatureRef>,
) -> Result<Vec<Array1<f64>>> {
    check_vertex(fs, graph_idx, u)?;
    check_vertex(fs, graph_idx, v)?;
    let c_v = model.config.vertex_states;
    let uniform = Array1::from_elem(c_v, 1.0 / c_v as f64);
    let mut out = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate() {
        let prior = if l == 0 {
            edge_prior(&layer.edge, uniform.view(), uniform.view())?
        } else {
            let prev = fs.vertex_posteriors(l - 1, graph_idx);
            edge_prior(&layer.edge, prev.row(u as usize), prev.row(v as usize))?
        };
        let feat = match feature {
            None => prior,
            Some(x) => {
                layer.edge.emission.check_feature(x)?;
                let c_e = prior.len();
                let mut log_em = vec![0.0; c_e];
                layer.edge.emission.log_density_into(x, &mut log_em);
                let m = log_em.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut post = Array1::zeros(c_e);
                for i in 0..c_e {
                    post[i] = (log_em[i] - m).exp() * prior[i];
                }
                let z = post.sum();
                if !(z > 0.0) {
                    return Err(Error::Numeric(format!(
                        "degenerate candidate posterior for pair ({u},{v})"
                    )));
                }
                post.mapv_inplace(|p| p / z);
                post
            }
        };
        out.push(feat);
    }
    Ok(out)
}

/// Per-layer binary predictors over candidate edge priors; the final score
/// averages layer probabilities (and both orderings when undirected).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPredictor {
    pub per_layer: Vec<Predictor>,
    pub undirected: bool,
}

/// Per-layer input rows for one ordering of a pair. Undirected graphs carry
/// two directed edges per pair, so the row concatenates both directions'
/// priors; a source-heavy learned component then still leaves the
/// destination's information visible to the predictor.
fn pair_rows(
    model: &StackModel,
    fs: &FrozenStates,
    u: u32,
    v: u32,
    undirected: bool,
) -> Result<Vec<Array1<f64>>> {
    let fwd = candidate_layer_features(model, fs, 0, u, v, None)?;
    if !undirected {
        return Ok(fwd);
    }
    let bwd = candidate_layer_features(model, fs, 0, v, u, None)?;
    Ok(fwd
        .into_iter()
        .zip(bwd)
        .map(|(f, b)| {
            let mut row = Array1::zeros(f.len() + b.len());
            row.slice_mut(ndarray::s![..f.len()]).assign(&f);
            row.slice_mut(ndarray::s![f.len()..]).assign(&b);
            row
        })
        .collect())
}

/// One matrix per layer. Undirected training pairs are mirror-augmented so
/// the predictor sees both orderings of every pair.
fn layer_feature_matrix(
    model: &StackModel,
    fs: &FrozenStates,
    pairs: &[LabeledPair],
    undirected: bool,
    augment: bool,
) -> Result<(Vec<Array2<f64>>, Vec<u32>)> {
    let c_e = model.config.edge_states;
    let n_layers = model.layers.len();
    let width = if undirected { 2 * c_e } else { c_e };
    let mirror = undirected && augment;
    let rows = if mirror { 2 * pairs.len() } else { pairs.len() };
    let mut mats = vec![Array2::zeros((rows, width)); n_layers];
    let mut labels = Vec::with_capacity(rows);
    for (r, &(u, v, y)) in pairs.iter().enumerate() {
        let feats = pair_rows(model, fs, u, v, undirected)?;
        for (l, f) in feats.into_iter().enumerate() {
            mats[l].row_mut(r).assign(&f);
            if mirror {
                // The mirrored ordering swaps the two direction blocks.
                let mut row = mats[l].row_mut(pairs.len() + r);
                for i in 0..c_e {
                    row[i] = f[c_e + i];
                    row[c_e + i] = f[i];
                }
            }
        }
        labels.push(y as u32);
    }
    if mirror {
        let mirrored: Vec<u32> = labels.clone();
        labels.extend(mirrored);
    }
    Ok((mats, labels))
}

/// Trains one binary predictor per layer on the split's training pairs, with
/// the validation pairs driving early stopping.
pub fn train_link_predictor(
    model: &StackModel,
    fs: &FrozenStates,
    split: &LinkSplit,
    mlp: &MLPConfig,
) -> Result<LinkPredictor> {
    let und = split.undirected;
    let (x_train, y_train) = layer_feature_matrix(model, fs, &split.train_pairs, und, true)?;
    let (x_val, y_val) = layer_feature_matrix(model, fs, &split.val_pairs, und, false)?;
    let t_train = Targets::Classes {
        ids: &y_train,
        n_classes: 2,
    };
    let t_val = Targets::Classes {
        ids: &y_val,
        n_classes: 2,
    };
    let mut per_layer = Vec::with_capacity(model.layers.len());
    for l in 0..model.layers.len() {
        let cfg = MLPConfig {
            loss: Loss::BinaryCrossEntropy,
            seed: derive_seed(mlp.seed, 3, l as u64),
            ..mlp.clone()
        };
        per_layer.push(train_mlp_with_val(
            x_train[l].view(),
            &t_train,
            x_val[l].view(),
            &t_val,
            &cfg,
        )?);
    }
    Ok(LinkPredictor {
        per_layer,
        undirected: split.undirected,
    })
}

impl LinkPredictor {
    fn score_directed(
        &self,
        model: &StackModel,
        fs: &FrozenStates,
        u: u32,
        v: u32,
    ) -> Result<f64> {
        let feats = pair_rows(model, fs, u, v, self.undirected)?;
        let mut acc = 0.0;
        for (l, f) in feats.iter().enumerate() {
            let x = f.view().insert_axis(ndarray::Axis(0));
            let p = self.per_layer[l].predict_proba(x)?;
            acc += p[(0, 0)];
        }
        Ok(acc / self.per_layer.len() as f64)
    }

    /// Probability that the pair is a true edge: mean per-layer probability,
    /// averaged over both directions for undirected graphs.
    pub fn score_pair(
        &self,
        model: &StackModel,
        fs: &FrozenStates,
        u: u32,
        v: u32,
    ) -> Result<f64> {
        let s = self.score_directed(model, fs, u, v)?;
        if self.undirected {
            let t = self.score_directed(model, fs, v, u)?;
            Ok((s + t) / 2.0)
        } else {
            Ok(s)
        }
    }

    pub fn score_pairs(
        &self,
        model: &StackModel,
        fs: &FrozenStates,
        pairs: &[LabeledPair],
    ) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|&(u, v, _)| self.score_pair(model, fs, u, v))
            .collect()
    }
}

/// Mean of the two endpoints' layer-concatenated vertex unigrams: the
/// edge-blind pair representation.
pub fn baseline_pair_feature(
    fs: &FrozenStates,
    graph_idx: usize,
    u: u32,
    v: u32,
) -> Result<Array1<f64>> {
    check_vertex(fs, graph_idx, u)?;
    check_vertex(fs, graph_idx, v)?;
    let c_v = fs.layers[0].vertex.ncols();
    let mut out = Array1::zeros(fs.n_layers() * c_v);
    for l in 0..fs.n_layers() {
        let p = fs.vertex_posteriors(l, graph_idx);
        for i in 0..c_v {
            out[l * c_v + i] = (p[(u as usize, i)] + p[(v as usize, i)]) / 2.0;
        }
    }
    Ok(out)
}

/// Single binary predictor over mean vertex embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineLinkPredictor {
    pub mlp: Predictor,
}

pub fn train_baseline_link_predictor(
    fs: &FrozenStates,
    split: &LinkSplit,
    mlp: &MLPConfig,
) -> Result<BaselineLinkPredictor> {
    let build = |pairs: &[LabeledPair]| -> Result<Array2<f64>> {
        let c = fs.n_layers() * fs.layers[0].vertex.ncols();
        let mut x = Array2::zeros((pairs.len(), c));
        for (r, &(u, v, _)) in pairs.iter().enumerate() {
            x.row_mut(r).assign(&baseline_pair_feature(fs, 0, u, v)?);
        }
        Ok(x)
    };
    let x_train = build(&split.train_pairs)?;
    let x_val = build(&split.val_pairs)?;
    let y_train: Vec<u32> = split.train_pairs.iter().map(|&(_, _, y)| y as u32).collect();
    let y_val: Vec<u32> = split.val_pairs.iter().map(|&(_, _, y)| y as u32).collect();
    let cfg = MLPConfig {
        loss: Loss::BinaryCrossEntropy,
        seed: derive_seed(mlp.seed, 4, 0),
        ..mlp.clone()
    };
    let predictor = train_mlp_with_val(
        x_train.view(),
        &Targets::Classes {
            ids: &y_train,
            n_classes: 2,
        },
        x_val.view(),
        &Targets::Classes {
            ids: &y_val,
            n_classes: 2,
        },
        &cfg,
    )?;
    Ok(BaselineLinkPredictor { mlp: predictor })
}

impl BaselineLinkPredictor {
    pub fn score_pair(&self, fs: &FrozenStates, u: u32, v: u32) -> Result<f64> {
        let f = baseline_pair_feature(fs, 0, u, v)?;
        let x = f.view().insert_axis(ndarray::Axis(0));
        Ok(self.mlp.predict_proba(x)?[(0, 0)])
    }

    pub fn score_pairs(&self, fs: &FrozenStates, pairs: &[LabeledPair]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|&(u, v, _)| self.score_pair(fs, u, v))
            .collect()
    }
}
