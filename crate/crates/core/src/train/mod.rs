//! Loss, optimization loop, metrics and cross-validation.

mod cv;
mod loss;
mod metrics;
mod trainer;

pub use cv::{cross_validate, review_window_grid, write_csv_rows, CvReport, FoldData, FoldReport, KGridRow};
pub use loss::{full_loss, gradcheck_model, sum_bce};
pub use metrics::{auc, bce, mean_report, metrics, MetricsReport};
pub use trainer::{evaluate, mean_bce, predictions, train, write_training_log, EpochLog, TrainConfig, TrainOutcome};
