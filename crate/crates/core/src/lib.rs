//! Hybrid networks for long-tailed classification: a supervised contrastive
//! feature branch and a cross-entropy classifier branch over a shared
//! backbone, blended by a curriculum that moves from feature learning to
//! classifier learning.
//!
//! Everything is implemented from scratch in `f64` with hand-wired
//! backpropagation, and every gradient is checked against central finite
//! differences.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use config::ExperimentConfig;
pub use eval::{evaluate, EvalReport};
pub use model::{HybridModel, ModelConfig};
pub use numerics::{Matrix, ParamTensor, SgdConfig};
pub use training::{train, train_two_stage, RunReport, TrainConfig, Trainer};
