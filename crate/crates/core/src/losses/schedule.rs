use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `α = 1 − (T/T_max)²`
    Parabolic,
    /// `α = 1 − T/T_max`
    Linear,
    /// Fixed weight for every epoch.
    Constant(f64),
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parabolic" => Ok(ScheduleKind::Parabolic),
            "linear" => Ok(ScheduleKind::Linear),
            other => {
                let value = other
                    .strip_prefix("constant:")
                    .ok_or_else(|| Error::config(format!("unknown alpha schedule `{other}`")))?;
                let alpha: f64 = value
                    .parse()
                    .map_err(|_| Error::config(format!("invalid constant alpha `{value}`")))?;
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::config(format!("constant alpha {alpha} is outside [0, 1]")));
                }
                Ok(ScheduleKind::Constant(alpha))
            }
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Parabolic => f.write_str("parabolic"),
            ScheduleKind::Linear => f.write_str("linear"),
            ScheduleKind::Constant(a) => write!(f, "constant:{a}"),
        }
    }
}

/// Epoch-indexed weight of the contrastive branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub kind: ScheduleKind,
    pub t_max: usize,
}

impl CurriculumSchedule {
    pub fn new(kind: ScheduleKind, t_max: usize) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::config("curriculum t_max must be positive"));
        }
        if let ScheduleKind::Constant(a) = kind {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config(format!("constant alpha {a} is outside [0, 1]")));
            }
        }
        Ok(Self { kind, t_max })
    }

    pub fn alpha(&self, epoch: usize) -> Result<f64> {
        curriculum_alpha(self, epoch)
    }
}

pub fn curriculum_alpha(schedule: &CurriculumSchedule, epoch: usize) -> Result<f64> {
    if epoch > schedule.t_max {
        return Err(Error::Range(format!(
            "epoch {epoch} is past t_max {}",
            schedule.t_max
        )));
    }
    let frac = epoch as f64 / schedule.t_max as f64;
    Ok(match schedule.kind {
        ScheduleKind::Parabolic => 1.0 - frac * frac,
        ScheduleKind::Linear => 1.0 - frac,
        ScheduleKind::Constant(a) => a,
    })
}

/// `α·L_contrastive + (1−α)·L_CE`
pub fn hybrid_loss(contrastive_loss: f64, ce_loss: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha {alpha} is outside [0, 1]")));
    }
    Ok(alpha * contrastive_loss + (1.0 - alpha) * ce_loss)
}
