//! Synthetic data, folds, training, evaluation and reporting.

pub mod config;
pub mod cv;
pub mod dataset;
pub mod describe;
pub mod export;
pub mod folds;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod train;

pub use config::{Ablation, Config, ExperimentConfig, Task};
pub use dataset::{gen_synthetic_dataset, Clip, Dataset};
pub use folds::{make_folds, Fold, FoldPlan};
pub use model::GaitModel;
pub use train::{evaluate, train, EvalReport, TrainOptions, TrainOutcome};
