//! Accuracy and feature-geometry metrics, and the experiment matrix runner.

mod matrix;
mod metrics;

pub use matrix::{
    cell_dir, mean, read_summary_means, run_experiment_matrix, run_matrix, sample_std,
    summarize, summary_csv, write_run, CellOutcome, MatrixConfig, Variant, VariantSummary,
    SUMMARY_CSV_HEADER,
};
pub use metrics::{
    accuracy, accuracy_from_logits, evaluate, evaluate_outputs, evaluate_with, feature_geometry,
    predictions, EvalReport, HeadTailSplit,
};
