//! Synthetic data, cross-validation, tuning and evaluation.

pub mod cv;
pub mod evaluate;
pub mod io;
pub mod metrics;
pub mod synthetic;
pub mod tune;

pub use cv::{stratified_kfold, Split};
pub use evaluate::{evaluate_fold, run_evaluation, write_metrics_csv, write_tuning_csv, FoldOutcome, MetricsRecord, RunTags};
pub use metrics::{accuracy, roc_auc, score_metric, MetricKind};
pub use synthetic::{generate_synthetic, Effect, SyntheticConfig};
pub use tune::{score_truncations, tune_hyperparameters, CandidateScore, EvalSettings, TuningGrid, TuningReport};
