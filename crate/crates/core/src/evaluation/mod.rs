//! Forward-chaining cross-validation, ROC/AUC and the report tables.

mod matrix;
mod metrics;
mod report;
mod split;

pub use matrix::{
    evaluate_dataset, evaluate_matrix, DatasetInfo, EvalCell, EvalConfig, EvalRun, FoldInputs,
    FoldOutcome, ModelScorer, Scorer,
};
pub use metrics::{
    auc, confusion_at, roc_curve, sweep_scores, threshold_sweep, RocPoint, ThresholdMetrics,
};
pub use report::{format_cell, render_report, report_json, ReportFormat, BOLD_TOLERANCE};
pub use split::{forward_chain_split, Fold, FoldPlan, WindowMode, PART_COUNT};
