use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{PositiveCap, SamplerKind};
use crate::error::{Error, Result};
use crate::losses::{AffinityMode, ScheduleKind};
use crate::model::ModelConfig;
use crate::numerics::SgdConfig;

/// Loss driving the feature-learning branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Supervised contrastive loss over in-batch positives and negatives.
    Sc,
    /// Contrast against one prototype per class.
    Psc,
    /// Contrast against several prototypes per class.
    Mpsc,
    /// Cross-entropy in both branches (baseline).
    CeCe,
}

impl LossKind {
    pub fn uses_prototypes(self) -> bool {
        matches!(self, LossKind::Psc | LossKind::Mpsc)
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sc" => Ok(LossKind::Sc),
            "psc" => Ok(LossKind::Psc),
            "mpsc" => Ok(LossKind::Mpsc),
            "ce" | "ce-ce" => Ok(LossKind::CeCe),
            other => Err(Error::config(format!("unknown loss `{other}`"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Sc => "sc",
            LossKind::Psc => "psc",
            LossKind::Mpsc => "mpsc",
            LossKind::CeCe => "ce-ce",
        })
    }
}

/// How the summed supervised contrastive loss enters the hybrid objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    /// Sum over anchors, as written.
    Sum,
    /// Divide the sum by the number of anchors.
    Mean,
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            other => Err(Error::config(format!("unknown reduction `{other}`"))),
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    /// Rows in the contrastive batch (two views per sampled source).
    pub sc_batch: usize,
    pub ce_batch: usize,
    pub sgd: SgdConfig,
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub schedule: ScheduleKind,
    pub loss: LossKind,
    pub tau: f64,
    pub affinity: AffinityMode,
    pub sc_sampler: SamplerKind,
    pub ce_sampler: SamplerKind,
    pub view_noise: f64,
    pub positives_per_anchor: PositiveCap,
    pub sc_reduction: Reduction,
    pub seed: u64,
    pub two_stage: bool,
}

impl Default for TrainConfig {
    /// Full-scale optimizer settings: 200 epochs, LR 0.5 decayed 10× at 120
    /// and 160, batch 512, parabolic curriculum.
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 200,
            sc_batch: 512,
            ce_batch: 512,
            sgd: SgdConfig::default(),
            lr_milestones: vec![120, 160],
            lr_decay: 0.1,
            schedule: ScheduleKind::Parabolic,
            loss: LossKind::Sc,
            tau: 0.1,
            affinity: AffinityMode::Uniform,
            sc_sampler: SamplerKind::Random,
            ce_sampler: SamplerKind::Balanced,
            view_noise: 0.1,
            positives_per_anchor: PositiveCap::All,
            sc_reduction: Reduction::Sum,
            seed: 0,
            two_stage: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sgd.validate()?;
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.two_stage && self.epochs < 2 {
            return Err(Error::config("two-stage training needs at least 2 epochs"));
        }
        if self.sc_batch < 2 {
            return Err(Error::config("sc_batch must be at least 2 rows"));
        }
        if self.ce_batch == 0 {
            return Err(Error::config("ce_batch must be positive"));
        }
        if !self.lr_milestones.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("lr_milestones must be strictly increasing"));
        }
        if let Some(&m) = self.lr_milestones.last() {
            if m >= self.epochs {
                return Err(Error::config(format!(
                    "lr milestone {m} is not before the last epoch ({})",
                    self.epochs
                )));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::config(format!(
                "lr_decay must be in (0, 1), got {}",
                self.lr_decay
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.view_noise >= 0.0 && self.view_noise.is_finite()) {
            return Err(Error::config("view_noise must be non-negative"));
        }
        if self.loss == LossKind::Psc && self.model.prototypes_per_class != 1 {
            return Err(Error::config(
                "psc uses one prototype per class; use mpsc for more",
            ));
        }
        if self.two_stage && self.loss == LossKind::CeCe {
            return Err(Error::config("two-stage training needs a contrastive loss"));
        }
        Ok(())
    }

    /// `lr · decay^(milestones passed)` at `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.lr_milestones.iter().filter(|&&m| m <= epoch).count();
        self.sgd.learning_rate * self.lr_decay.powi(passed as i32)
    }

    /// Learning rate inside a stage of `stage_len` epochs, with the milestones
    /// rescaled from the full run length to the stage length.
    pub fn stage_lr_at(&self, local_epoch: usize, stage_len: usize) -> f64 {
        let passed = self
            .lr_milestones
            .iter()
            .filter(|&&m| m * stage_len / self.epochs <= local_epoch)
            .count();
        self.sgd.learning_rate * self.lr_decay.powi(passed as i32)
    }

    /// Epochs of the feature stage in two-stage training; the classifier stage
    /// gets the rest.
    pub fn stage_one_epochs(&self) -> usize {
        self.epochs / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn lr_trace_follows_milestones() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 0.5);
        assert_eq!(cfg.lr_at(119), 0.5);
        assert!((cfg.lr_at(120) - 0.05).abs() < 1e-15);
        assert!((cfg.lr_at(199) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = TrainConfig {
            lr_milestones: vec![50, 50],
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.lr_milestones = vec![200];
        assert!(cfg.validate().is_err());
        cfg.lr_milestones = vec![10];
        cfg.lr_decay = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            loss: LossKind::Psc,
            model: ModelConfig {
                prototypes_per_class: 3,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn loss_kind_names() {
        assert_eq!("ce".parse::<LossKind>().unwrap(), LossKind::CeCe);
        for k in [LossKind::Sc, LossKind::Psc, LossKind::Mpsc, LossKind::CeCe] {
            assert_eq!(k.to_string().parse::<LossKind>().unwrap(), k);
        }
    }
}
