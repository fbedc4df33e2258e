use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::layers::ParamTensor;
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it is a useful no-op configuration for tests.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum and coupled weight decay:
///
/// ```text
/// v ← momentum·v + (grad + weight_decay·value)
/// value ← value − lr·v
/// ```
///
/// Velocities are keyed by parameter name and created zeroed on first use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sgd {
    pub velocities: BTreeMap<String, Matrix>,
}

impl Sgd {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one update to every named parameter. Gradients are checked for
    /// finiteness before anything is modified.
    pub fn step(&mut self, params: &mut [(String, &mut ParamTensor)], cfg: &SgdConfig) -> Result<()> {
        for (name, p) in params.iter() {
            if !p.grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter `{name}`")));
            }
        }
        for (name, p) in params.iter_mut() {
            let v = self
                .velocities
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(p.value.rows(), p.value.cols()));
            if v.shape() != p.value.shape() {
                return Err(Error::shape(
                    "sgd_step",
                    format!("velocity for `{name}` is {:?}, parameter is {:?}", v.shape(), p.shape()),
                ));
            }
            for ((vel, w), g) in v
                .data_mut()
                .iter_mut()
                .zip(p.value.data_mut())
                .zip(p.grad.data())
            {
                *vel = cfg.momentum * *vel + (g + cfg.weight_decay * *w);
                *w -= cfg.learning_rate * *vel;
            }
        }
        Ok(())
    }
}

/// One-shot form of [`Sgd::step`] for callers that manage velocities themselves.
pub fn sgd_step(
    params: &mut [(String, &mut ParamTensor)],
    cfg: &SgdConfig,
    state: &mut Sgd,
) -> Result<()> {
    state.step(params, cfg)
}
