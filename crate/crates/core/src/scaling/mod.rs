//! Empirical scaling law for the shortfall ratio as a function of relative
//! subproblem size, and a linear model predicting its parameters from
//! instance summary statistics.

pub mod dataset;
pub mod features;
pub mod fit;
pub mod metrics;
pub mod model;
pub mod sigmoid;

pub use dataset::{split_dataset, ScalingDataset, ScalingRecord, Split};
pub use features::{compute_features, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use fit::{fit_sigmoid, FitMetrics, FitOptions, SigmoidFit};
pub use metrics::{evaluate_model, ModelMetrics};
pub use model::{train_param_model, LinearParamModel, TrainOptions};
pub use sigmoid::{collapse_deviations, collapse_transform, log_sigmoid_eval, sigmoid_eval, SigmoidParams};
