//! The curriculum-driven two-branch training loop, its reports and
//! checkpoints.

pub mod checkpoint;
mod config;
mod report;
mod trainer;

pub use config::{LossKind, Reduction, TrainConfig};
pub use report::{EpochRecord, RunReport, EPOCH_CSV_HEADER};
pub use trainer::{
    hybrid_backward, stream_rng, train, train_model, train_two_stage, RngStream, Stage,
    StepLosses, Trainer,
};
