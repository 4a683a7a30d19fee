//! Downstream predictors and protocols that consume frozen embeddings:
//! a small feed-forward network, scoring metrics, cross-validated
//! classification/regression, and transductive link prediction.

pub mod eval;
pub mod linkpred;
pub mod metrics;
pub mod mlp;

pub use eval::{
    evaluate_classification, evaluate_regression, write_report_csv, write_report_json,
    EvalReport, GridSpec,
};
pub use linkpred::{
    labels_of, linkpred_prepare, train_baseline_link_predictor, train_link_predictor,
};
pub use mlp::{train_mlp, train_mlp_with_val, Loss, MLPConfig, Predictor, Targets};
