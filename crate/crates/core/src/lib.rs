//! Learning and evaluating multi-class classifiers for performance metrics
//! that are nonlinear functions of the confusion matrix.
//!
//! Labels are 0-based throughout the library. The CLI reads and writes
//! 1-based labels.

pub mod cg;
pub mod confusion;
pub mod cpe;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod plugin;
pub mod rule;
pub mod synth;

pub use cg::{
    bayescg, cg_on, cg_regret_bound, exact_linear_max, idealized_cg, CgConfig, CgResult, CgTrace,
};
pub use confusion::{
    empirical_conf, ensemble_predict, exact_conf, mix_conf, ClassDistribution, ConfusionMatrix,
    GainMatrix, LabeledSample,
};
pub use cpe::{train_cpe, CpeModel, CpeSource, CpeTrainConfig, Scorer};
pub use error::{Error, Result};
pub use metrics::{
    eval_metric, eval_smoothed, grad_smoothed, smoothing_constants, xi_constant, MetricId,
    MetricSpec, SmoothedMetric, SmoothingConstants,
};
pub use oracle::{grid_oracle_optimum, regret, vertex_oracle_optimum, OracleResult};
pub use plugin::{
    binary_threshold_plugin, brute_force_plugin, weighted_argmax_classifier, GainGridConfig,
    SplitConfig, TuningSet,
};
pub use rule::ClassifierRule;
pub use synth::{FiniteDistribution, GaussianMixtureSpec};
