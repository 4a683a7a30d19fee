//! Incremental deep architecture: one vertex and one edge component per
//! layer, trained greedily. After a layer converges its posteriors are
//! inferred once, optionally discretized to one-hot, and frozen as the
//! context of the next layer.
//!
//! The first layer has no previous states: the vertex component trains as a
//! plain mixture model and the edge component runs against uniform endpoint
//! posteriors. All randomness flows from the config seed through per-layer,
//! per-component derived seeds; E-steps parallelize over graphs and merge
//! per-graph statistics in graph order, so results do not depend on the
//! thread count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as IoWrite};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    Emission, SuffStats, DEFAULT_PROB_FLOOR, DEFAULT_VAR_FLOOR,
};
use crate::edge::{edge_e_step, edge_infer, edge_m_step, EdgeLayerParams};
use crate::error::{Error, Result};
use crate::graph::{build_index, Dataset, FeatureKind, NeighborhoodIndex, VertexFeatures};
use crate::vertex::{
    vertex_e_step, vertex_infer, vertex_m_step, PrevPosteriors, VertexLayerParams,
};

/// On-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// How inferred states are frozen for the next layer and the embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateMode {
    /// One-hot rows at the argmax state.
    Discrete,
    /// Full posterior rows.
    Continuous,
}

/// Network component id, used in logs and seed derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Vertex,
    Edge,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::Vertex => "vertex",
            Component::Edge => "edge",
        }
    }
}

/// Stack hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub n_layers: usize,
    pub vertex_states: usize,
    pub edge_states: usize,
    pub em_iterations: usize,
    /// Early stop when the relative likelihood gain of one EM iteration
    /// drops below this; `None` always runs `em_iterations`.
    pub em_rel_tolerance: Option<f64>,
    /// Independently seeded EM runs per component; the run with the best
    /// final training log-likelihood wins. 1 trains each component once.
    pub em_restarts: usize,
    pub state_mode: StateMode,
    pub seed: u64,
    /// Expected feature kinds; `None` adopts the dataset's kinds.
    pub vertex_feature_kind: Option<FeatureKind>,
    pub edge_feature_kind: Option<FeatureKind>,
    /// Floor applied to every probability after normalization.
    pub prob_floor: f64,
    /// Lower clamp for Gaussian variances.
    pub var_floor: f64,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            n_layers: 3,
            vertex_states: 10,
            edge_states: 5,
            em_iterations: 20,
            em_rel_tolerance: None,
            em_restarts: 1,
            state_mode: StateMode::Continuous,
            seed: 0,
            vertex_feature_kind: None,
            edge_feature_kind: None,
            prob_floor: DEFAULT_PROB_FLOOR,
            var_floor: DEFAULT_VAR_FLOOR,
        }
    }
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 1 {
            return Err(Error::Config("n_layers must be at least 1".into()));
        }
        if self.vertex_states < 1 || self.edge_states < 1 {
            return Err(Error::Config(
                "vertex_states and edge_states must be at least 1".into(),
            ));
        }
        if self.em_iterations < 1 {
            return Err(Error::Config("em_iterations must be at least 1".into()));
        }
        if self.em_restarts < 1 {
            return Err(Error::Config("em_restarts must be at least 1".into()));
        }
        if !(self.prob_floor >= 0.0 && self.prob_floor < 1e-3) {
            return Err(Error::Config(format!(
                "prob_floor {} outside [0, 1e-3)",
                self.prob_floor
            )));
        }
        if !(self.var_floor > 0.0) {
            return Err(Error::Config("var_floor must be positive".into()));
        }
        if let Some(tol) = self.em_rel_tolerance {
            if !(tol >= 0.0) {
                return Err(Error::Config("em_rel_tolerance must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// One trained layer: the paired components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub vertex: VertexLayerParams,
    pub edge: EdgeLayerParams,
}

/// Likelihood trace of one component at one layer; entry `t` is the
/// log-likelihood of the parameters entering EM iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub layer: usize,
    pub component: Component,
    pub log_likelihoods: Vec<f64>,
}

/// A trained stack: per-layer parameters plus the config and training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackModel {
    pub version: u32,
    pub config: StackConfig,
    /// Feature kinds the model was trained on.
    pub vertex_kind: FeatureKind,
    pub edge_kind: FeatureKind,
    pub layers: Vec<Layer>,
    pub training_log: Vec<LayerTrace>,
}

impl StackModel {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        if self.layers.len() != self.config.n_layers {
            return Err(Error::Integrity(format!(
                "model has {} layers, config says {}",
                self.layers.len(),
                self.config.n_layers
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer
                .vertex
                .validate(self.config.var_floor)
                .map_err(|e| Error::Integrity(format!("layer {l} vertex params: {e}")))?;
            layer
                .edge
                .validate(self.config.var_floor)
                .map_err(|e| Error::Integrity(format!("layer {l} edge params: {e}")))?;
            if layer.vertex.vertex_states() != self.config.vertex_states
                || layer.vertex.edge_states() != self.config.edge_states
                || layer.edge.edge_states() != self.config.edge_states
                || layer.edge.vertex_states() != self.config.vertex_states
            {
                return Err(Error::Integrity(format!(
                    "layer {l} shapes do not match config"
                )));
            }
        }
        Ok(())
    }

    /// Checks a dataset's feature kinds against the kinds seen at training.
    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        let compatible = |model: FeatureKind, data: FeatureKind| match (model, data) {
            (FeatureKind::Absent, FeatureKind::Absent) => true,
            (
                FeatureKind::Categorical { domain: dm },
                FeatureKind::Categorical { domain: dd },
            ) => dd <= dm,
            (FeatureKind::Continuous { dim: a }, FeatureKind::Continuous { dim: b }) => a == b,
            _ => false,
        };
        if !compatible(self.vertex_kind, ds.meta.vertex_kind) {
            return Err(Error::Config(format!(
                "dataset vertex features {:?} incompatible with model {:?}",
                ds.meta.vertex_kind, self.vertex_kind
            )));
        }
        if !compatible(self.edge_kind, ds.meta.edge_kind) {
            return Err(Error::Config(format!(
                "dataset edge features {:?} incompatible with model {:?}",
                ds.meta.edge_kind, self.edge_kind
            )));
        }
        Ok(())
    }
}

/// Frozen per-layer states of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLayer {
    /// `n_total × vertex_states`; one-hot rows in discrete mode.
    pub vertex: Array2<f64>,
    /// `m_total × edge_states`; one-hot rows in discrete mode.
    pub edge: Array2<f64>,
    pub vertex_argmax: Vec<u32>,
    pub edge_argmax: Vec<u32>,
}

/// All layers' frozen states plus dataset offsets for per-graph slicing.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenStates {
    pub mode: StateMode,
    pub layers: Vec<FrozenLayer>,
    pub vertex_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
}

impl FrozenStates {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_graphs(&self) -> usize {
        self.vertex_offsets.len() - 1
    }

    pub fn vertex_posteriors(&self, layer: usize, graph: usize) -> ArrayView2<'_, f64> {
        let (a, b) = (self.vertex_offsets[graph], self.vertex_offsets[graph + 1]);
        self.layers[layer].vertex.slice(s![a..b, ..])
    }

    pub fn edge_posteriors(&self, layer: usize, graph: usize) -> ArrayView2<'_, f64> {
        let (a, b) = (self.edge_offsets[graph], self.edge_offsets[graph + 1]);
        self.layers[layer].edge.slice(s![a..b, ..])
    }

    pub fn vertex_argmax(&self, layer: usize, graph: usize) -> &[u32] {
        let (a, b) = (self.vertex_offsets[graph], self.vertex_offsets[graph + 1]);
        &self.layers[layer].vertex_argmax[a..b]
    }

    pub fn edge_argmax(&self, layer: usize, graph: usize) -> &[u32] {
        let (a, b) = (self.edge_offsets[graph], self.edge_offsets[graph + 1]);
        &self.layers[layer].edge_argmax[a..b]
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic seed stream: one independent seed per (layer, component) or
/// any other (stream, substream) pair.
pub fn derive_seed(seed: u64, stream: u64, substream: u64) -> u64 {
    mix64(mix64(seed ^ 0x9E3779B97F4A7C15u64.wrapping_mul(stream.wrapping_add(1)))
        ^ 0xD1B54A32D192ED03u64.wrapping_mul(substream.wrapping_add(1)))
}

const VERTEX_STREAM: u64 = 0;
const EDGE_STREAM: u64 = 1;

/// Stacks every graph's continuous vertex features into one matrix.
fn stacked_vertex_data(ds: &Dataset, dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((ds.total_vertices(), dim));
    let mut row = 0;
    for g in &ds.graphs {
        if let VertexFeatures::Continuous(rows) = &g.vertex_features {
            out.slice_mut(s![row..row + rows.nrows(), ..]).assign(rows);
            row += rows.nrows();
        }
    }
    out
}

fn stacked_edge_data(ds: &Dataset, dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((ds.total_edges(), dim));
    let mut row = 0;
    for g in &ds.graphs {
        if let crate::graph::EdgeFeatures::Continuous(rows) = &g.edge_features {
            out.slice_mut(s![row..row + rows.nrows(), ..]).assign(rows);
            row += rows.nrows();
        }
    }
    out
}

fn init_vertex_params(
    ds: &Dataset,
    cfg: &StackConfig,
    layer: usize,
    restart: usize,
) -> Result<VertexLayerParams> {
    // Restart 0 reuses the plain component stream, so a single-restart run
    // is bit-identical to the unrestarted trainer.
    let substream = VERTEX_STREAM + 2 * restart as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, layer as u64, substream));
    let emission = match ds.meta.vertex_kind {
        FeatureKind::Categorical { domain } => {
            Emission::init_categorical(cfg.vertex_states, domain, cfg.prob_floor, &mut rng)
        }
        FeatureKind::Continuous { dim } => {
            let data = stacked_vertex_data(ds, dim);
            Emission::init_gaussian(cfg.vertex_states, data.view(), cfg.var_floor, &mut rng)?
        }
        FeatureKind::Absent => {
            return Err(Error::Config("vertex features cannot be absent".into()))
        }
    };
    Ok(VertexLayerParams::init(
        emission,
        cfg.edge_states,
        cfg.prob_floor,
        &mut rng,
    ))
}

fn init_edge_params(
    ds: &Dataset,
    cfg: &StackConfig,
    layer: usize,
    restart: usize,
) -> Result<EdgeLayerParams> {
    let substream = EDGE_STREAM + 2 * restart as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, layer as u64, substream));
    let emission = match ds.meta.edge_kind {
        FeatureKind::Categorical { domain } => {
            Emission::init_categorical(cfg.edge_states, domain, cfg.prob_floor, &mut rng)
        }
        FeatureKind::Continuous { dim } => {
            if ds.total_edges() == 0 {
                // No observations to seed from; any valid emission works
                // since the component is never trained or applied.
                Emission::Gaussian {
                    means: Array2::zeros((cfg.edge_states, dim)),
                    vars: Array2::from_elem((cfg.edge_states, dim), cfg.var_floor.max(1.0)),
                }
            } else {
                let data = stacked_edge_data(ds, dim);
                Emission::init_gaussian(cfg.edge_states, data.view(), cfg.var_floor, &mut rng)?
            }
        }
        FeatureKind::Absent => {
            // Missing features act as a constant scalar 0.0 observation.
            Emission::Gaussian {
                means: Array2::zeros((cfg.edge_states, 1)),
                vars: Array2::from_elem((cfg.edge_states, 1), cfg.var_floor.max(1.0)),
            }
        }
    };
    Ok(EdgeLayerParams::init(
        emission,
        cfg.vertex_states,
        cfg.prob_floor,
        &mut rng,
    ))
}

/// One dataset-wide vertex E-step: parallel over graphs, merged in graph
/// order.
fn vertex_dataset_e_step(
    ds: &Dataset,
    idxs: &[NeighborhoodIndex],
    params: &VertexLayerParams,
    prev: Option<&FrozenLayer>,
    voff: &[usize],
    eoff: &[usize],
) -> Result<(SuffStats, f64, Array2<f64>)> {
    let per_graph: Vec<Result<(SuffStats, f64, Array2<f64>)>> = (0..ds.n_graphs())
        .into_par_iter()
        .map(|k| {
            let prev_arg = prev.map(|f| PrevPosteriors {
                vertex: f.vertex.slice(s![voff[k]..voff[k + 1], ..]),
                edge: f.edge.slice(s![eoff[k]..eoff[k + 1], ..]),
            });
            vertex_e_step(&ds.graphs[k], &idxs[k], params, prev_arg)
        })
        .collect();
    let mut total: Option<SuffStats> = None;
    let mut ll = 0.0;
    let mut posts = Array2::zeros((ds.total_vertices(), params.vertex_states()));
    for (k, r) in per_graph.into_iter().enumerate() {
        let (stats, l, p) = r?;
        ll += l;
        posts.slice_mut(s![voff[k]..voff[k + 1], ..]).assign(&p);
        match &mut total {
            None => total = Some(stats),
            Some(t) => t.merge(&stats),
        }
    }
    let total = total.ok_or_else(|| Error::State("empty dataset".into()))?;
    Ok((total, ll, posts))
}

/// One dataset-wide edge E-step against the given previous vertex posteriors.
fn edge_dataset_e_step(
    ds: &Dataset,
    params: &EdgeLayerParams,
    prev_vertex: &Array2<f64>,
    voff: &[usize],
    eoff: &[usize],
) -> Result<(SuffStats, f64, Array2<f64>)> {
    let per_graph: Vec<Result<(SuffStats, f64, Array2<f64>)>> = (0..ds.n_graphs())
        .into_par_iter()
        .map(|k| {
            edge_e_step(
                &ds.graphs[k],
                params,
                prev_vertex.slice(s![voff[k]..voff[k + 1], ..]),
            )
        })
        .collect();
    let mut total: Option<SuffStats> = None;
    let mut ll = 0.0;
    let mut posts = Array2::zeros((ds.total_edges(), params.edge_states()));
    for (k, r) in per_graph.into_iter().enumerate() {
        let (stats, l, p) = r?;
        ll += l;
        posts.slice_mut(s![eoff[k]..eoff[k + 1], ..]).assign(&p);
        match &mut total {
            None => total = Some(stats),
            Some(t) => t.merge(&stats),
        }
    }
    let total = total.ok_or_else(|| Error::State("empty dataset".into()))?;
    Ok((total, ll, posts))
}

/// Whether one more EM iteration is warranted given the last two likelihoods.
fn keep_iterating(lls: &[f64], tol: Option<f64>) -> bool {
    match (tol, lls.len()) {
        (Some(tol), n) if n >= 2 => {
            let prev = lls[n - 2];
            let gain = lls[n - 1] - prev;
            gain / prev.abs().max(f64::MIN_POSITIVE) >= tol
        }
        _ => true,
    }
}

/// Whether a candidate restart's likelihood trace strictly beats the best so
/// far. Non-finite or empty traces never win; ties keep the earlier run.
fn better_run<P>(best: &Option<(P, Vec<f64>)>, lls: &[f64]) -> bool {
    let score = |t: &[f64]| match t.last() {
        Some(&ll) if ll.is_finite() => ll,
        _ => f64::NEG_INFINITY,
    };
    match best {
        None => true,
        Some((_, b)) => score(lls) > score(b),
    }
}

fn one_hot(argmax: &[u32], width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((argmax.len(), width));
    for (r, &s) in argmax.iter().enumerate() {
        out[(r, s as usize)] = 1.0;
    }
    out
}

/// Inference pass of one trained layer over the whole dataset; applies the
/// state mode to produce the frozen representation.
fn infer_one_layer(
    layer: &Layer,
    ds: &Dataset,
    idxs: &[NeighborhoodIndex],
    prev: Option<&FrozenLayer>,
    uniform_vertex: &Array2<f64>,
    mode: StateMode,
    voff: &[usize],
    eoff: &[usize],
) -> Result<FrozenLayer> {
    let prev_vertex_for_edges: &Array2<f64> = match prev {
        Some(f) => &f.vertex,
        None => uniform_vertex,
    };
    let results: Vec<Result<(Array2<f64>, Vec<u32>, Array2<f64>, Vec<u32>)>> = (0..ds.n_graphs())
        .into_par_iter()
        .map(|k| {
            let prev_arg = prev.map(|f| PrevPosteriors {
                vertex: f.vertex.slice(s![voff[k]..voff[k + 1], ..]),
                edge: f.edge.slice(s![eoff[k]..eoff[k + 1], ..]),
            });
            let (vp, vs) = vertex_infer(&ds.graphs[k], &idxs[k], &layer.vertex, prev_arg)?;
            let (ep, es) = edge_infer(
                &ds.graphs[k],
                &layer.edge,
                prev_vertex_for_edges.slice(s![voff[k]..voff[k + 1], ..]),
            )?;
            Ok((vp, vs, ep, es))
        })
        .collect();
    let c_v = layer.vertex.vertex_states();
    let c_e = layer.edge.edge_states();
    let mut vertex = Array2::zeros((ds.total_vertices(), c_v));
    let mut edge = Array2::zeros((ds.total_edges(), c_e));
    let mut vertex_argmax = Vec::with_capacity(ds.total_vertices());
    let mut edge_argmax = Vec::with_capacity(ds.total_edges());
    for (k, r) in results.into_iter().enumerate() {
        let (vp, vs, ep, es) = r?;
        vertex.slice_mut(s![voff[k]..voff[k + 1], ..]).assign(&vp);
        edge.slice_mut(s![eoff[k]..eoff[k + 1], ..]).assign(&ep);
        vertex_argmax.extend(vs);
        edge_argmax.extend(es);
    }
    if mode == StateMode::Discrete {
        vertex = one_hot(&vertex_argmax, c_v);
        edge = one_hot(&edge_argmax, c_e);
    }
    Ok(FrozenLayer {
        vertex,
        edge,
        vertex_argmax,
        edge_argmax,
    })
}

fn check_declared_kinds(ds: &Dataset, cfg: &StackConfig) -> Result<()> {
    if let Some(k) = cfg.vertex_feature_kind {
        if k != ds.meta.vertex_kind {
            return Err(Error::Config(format!(
                "config expects vertex features {k:?}, dataset has {:?}",
                ds.meta.vertex_kind
            )));
        }
    }
    if let Some(k) = cfg.edge_feature_kind {
        if k != ds.meta.edge_kind {
            return Err(Error::Config(format!(
                "config expects edge features {k:?}, dataset has {:?}",
                ds.meta.edge_kind
            )));
        }
    }
    Ok(())
}

/// Trains the full stack layer by layer and returns the model together with
/// the frozen states of the training set.
pub fn train_stack(ds: &Dataset, cfg: &StackConfig) -> Result<(StackModel, FrozenStates)> {
    cfg.validate()?;
    ds.check_consistency()?;
    check_declared_kinds(ds, cfg)?;
    if ds.meta.vertex_kind == FeatureKind::Absent {
        return Err(Error::Config("vertex features cannot be absent".into()));
    }
    let idxs: Vec<NeighborhoodIndex> = ds.graphs.par_iter().map(build_index).collect();
    let voff = ds.vertex_offsets();
    let eoff = ds.edge_offsets();
    let uniform_vertex = Array2::from_elem(
        (ds.total_vertices(), cfg.vertex_states),
        1.0 / cfg.vertex_states as f64,
    );
    let has_edges = ds.total_edges() > 0;

    let mut layers: Vec<Layer> = Vec::with_capacity(cfg.n_layers);
    let mut training_log: Vec<LayerTrace> = Vec::new();
    let mut frozen: Vec<FrozenLayer> = Vec::with_capacity(cfg.n_layers);

    for l in 0..cfg.n_layers {
        let prev = frozen.last();

        // Vertex component: best of `em_restarts` seeded runs by final
        // training log-likelihood (ties keep the earliest run).
        let mut vbest: Option<(VertexLayerParams, Vec<f64>)> = None;
        for r in 0..cfg.em_restarts {
            let mut vparams = init_vertex_params(ds, cfg, l, r)?;
            let mut v_lls: Vec<f64> = Vec::new();
            for _ in 0..cfg.em_iterations {
                let (stats, ll, _) =
                    vertex_dataset_e_step(ds, &idxs, &vparams, prev, &voff, &eoff)?;
                v_lls.push(ll);
                if !keep_iterating(&v_lls, cfg.em_rel_tolerance) {
                    break;
                }
                vparams = vertex_m_step(&stats, &vparams, cfg.prob_floor, cfg.var_floor)?;
            }
            if better_run(&vbest, &v_lls) {
                if r > 0 {
                    log::info!("layer {l} vertex: restart {r} improved the run");
                }
                vbest = Some((vparams, v_lls));
            }
        }
        let (vparams, v_lls) = vbest.expect("em_restarts is validated positive");
        log::info!(
            "layer {l} vertex: {} EM iterations, log-likelihood {:.6}",
            v_lls.len(),
            v_lls.last().copied().unwrap_or(f64::NAN)
        );
        training_log.push(LayerTrace {
            layer: l,
            component: Component::Vertex,
            log_likelihoods: v_lls,
        });

        // Edge component. With no edges anywhere it keeps its initial
        // parameters; nothing downstream ever evaluates them.
        let mut e_lls: Vec<f64> = Vec::new();
        let eparams = if has_edges {
            let prev_vertex: &Array2<f64> = match prev {
                Some(f) => &f.vertex,
                None => &uniform_vertex,
            };
            let mut ebest: Option<(EdgeLayerParams, Vec<f64>)> = None;
            for r in 0..cfg.em_restarts {
                let mut eparams = init_edge_params(ds, cfg, l, r)?;
                let mut lls: Vec<f64> = Vec::new();
                for _ in 0..cfg.em_iterations {
                    let (stats, ll, _) =
                        edge_dataset_e_step(ds, &eparams, prev_vertex, &voff, &eoff)?;
                    lls.push(ll);
                    if !keep_iterating(&lls, cfg.em_rel_tolerance) {
                        break;
                    }
                    eparams = edge_m_step(&stats, &eparams, cfg.prob_floor, cfg.var_floor)?;
                }
                if better_run(&ebest, &lls) {
                    if r > 0 {
                        log::info!("layer {l} edge: restart {r} improved the run");
                    }
                    ebest = Some((eparams, lls));
                }
            }
            let (eparams, lls) = ebest.expect("em_restarts is validated positive");
            e_lls = lls;
            log::info!(
                "layer {l} edge: {} EM iterations, log-likelihood {:.6}",
                e_lls.len(),
                e_lls.last().copied().unwrap_or(f64::NAN)
            );
            eparams
        } else {
            log::warn!("layer {l} edge: dataset has no edges, component untrained");
            init_edge_params(ds, cfg, l, 0)?
        };
        training_log.push(LayerTrace {
            layer: l,
            component: Component::Edge,
            log_likelihoods: e_lls,
        });

        let layer = Layer {
            vertex: vparams,
            edge: eparams,
        };
        let fl = infer_one_layer(
            &layer,
            ds,
            &idxs,
            prev,
            &uniform_vertex,
            cfg.state_mode,
            &voff,
            &eoff,
        )?;
        layers.push(layer);
        frozen.push(fl);
    }

    let model = StackModel {
        version: MODEL_FORMAT_VERSION,
        config: cfg.clone(),
        vertex_kind: ds.meta.vertex_kind,
        edge_kind: ds.meta.edge_kind,
        layers,
        training_log,
    };
    let fs = FrozenStates {
        mode: cfg.state_mode,
        layers: frozen,
        vertex_offsets: voff,
        edge_offsets: eoff,
    };
    Ok((model, fs))
}

/// Replays layer-wise inference with trained parameters on a dataset.
/// On the training set this reproduces the training-time frozen states
/// exactly (identical code path).
pub fn infer_stack(model: &StackModel, ds: &Dataset) -> Result<FrozenStates> {
    model.validate()?;
    ds.check_consistency()?;
    model.check_dataset(ds)?;
    let idxs: Vec<NeighborhoodIndex> = ds.graphs.par_iter().map(build_index).collect();
    let voff = ds.vertex_offsets();
    let eoff = ds.edge_offsets();
    let uniform_vertex = Array2::from_elem(
        (ds.total_vertices(), model.config.vertex_states),
        1.0 / model.config.vertex_states as f64,
    );
    let mut frozen: Vec<FrozenLayer> = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let fl = infer_one_layer(
            layer,
            ds,
            &idxs,
            frozen.last(),
            &uniform_vertex,
            model.config.state_mode,
            &voff,
            &eoff,
        )?;
        frozen.push(fl);
    }
    Ok(FrozenStates {
        mode: model.config.state_mode,
        layers: frozen,
        vertex_offsets: voff,
        edge_offsets: eoff,
    })
}

/// Counts edges per (layer, argmax state); every row sums to the total edge
/// count.
pub fn edge_state_histogram(fs: &FrozenStates) -> Array2<u64> {
    let n_layers = fs.layers.len();
    let c_e = fs.layers.first().map_or(0, |f| f.edge.ncols());
    let mut hist = Array2::zeros((n_layers, c_e));
    for (l, layer) in fs.layers.iter().enumerate() {
        for &s in &layer.edge_argmax {
            hist[(l, s as usize)] += 1;
        }
    }
    hist
}

/// Saves a model as a versioned JSON document. All probabilities survive the
/// decimal round trip bit-exactly.
pub fn save_model(model: &StackModel, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StackModel> {
    let file = File::open(path.as_ref())?;
    let model: StackModel = serde_json::from_reader(BufReader::new(file))?;
    model.validate()?;
    Ok(model)
}

/// Writes the training log as CSV: `layer,component,iteration,log_likelihood`.
pub fn write_training_log_csv(model: &StackModel, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    writeln!(w, "layer,component,iteration,log_likelihood")?;
    for trace in &model.training_log {
        for (it, ll) in trace.log_likelihoods.iter().enumerate() {
            writeln!(w, "{},{},{},{}", trace.layer, trace.component.name(), it, ll)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean per-unit log-likelihood of a dataset under each layer, useful as a
/// quick fit diagnostic.
pub fn dataset_log_likelihood(model: &StackModel, ds: &Dataset) -> Result<Vec<(f64, f64)>> {
    model.validate()?;
    model.check_dataset(ds)?;
    let idxs: Vec<NeighborhoodIndex> = ds.graphs.par_iter().map(build_index).collect();
    let voff = ds.vertex_offsets();
    let eoff = ds.edge_offsets();
    let uniform_vertex = Array2::from_elem(
        (ds.total_vertices(), model.config.vertex_states),
        1.0 / model.config.vertex_states as f64,
    );
    let mut out = Vec::with_capacity(model.layers.len());
    let mut prev: Option<FrozenLayer> = None;
    for layer in &model.layers {
        let (_, v_ll, _) =
            vertex_dataset_e_step(ds, &idxs, &layer.vertex, prev.as_ref(), &voff, &eoff)?;
        let e_ll = if ds.total_edges() > 0 {
            let prev_vertex: &Array2<f64> = match &prev {
                Some(f) => &f.vertex,
                None => &uniform_vertex,
            };
            let (_, e_ll, _) = edge_dataset_e_step(ds, &layer.edge, prev_vertex, &voff, &eoff)?;
            e_ll
        } else {
            0.0
        };
        out.push((v_ll, e_ll));
        let fl = infer_one_layer(
            layer,
            ds,
            &idxs,
            prev.as_ref(),
            &uniform_vertex,
            model.config.state_mode,
            &voff,
            &eoff,
        )?;
        prev = Some(fl);
    }
    Ok(out)
}
