//! Deep Bayesian networks for graphs built from paired vertex and edge
//! components (E-CGMM). Layers are trained greedily with EM; frozen
//! posteriors from one layer become the context of the next. The stack yields
//! unsupervised vertex, edge and graph embeddings for downstream classifiers,
//! regressors and link predictors.
//!
//! Entry points:
//! - [`graph`] / [`io`]: data model and loaders (TU text format, JSONL);
//! - [`stack`]: training and inference over the layered model;
//! - [`embeddings`]: unigram/bigram vertex, edge and graph embeddings;
//! - [`downstream`]: MLP readouts, evaluation protocols, link prediction;
//! - [`cli`]: the `ecgmm` command-line front end.
//!
//! The `examples/` directory shows one runnable end-to-end flow per
//! capability.

pub mod cli;
pub mod distributions;
pub mod downstream;
pub mod edge;
pub mod embeddings;
pub mod error;
pub mod graph;
pub mod io;
pub mod stack;
pub mod synth;
pub mod vertex;

pub use error::{Error, Result};
