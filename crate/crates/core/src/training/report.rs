use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::Stage;
use crate::error::{Error, Result};
use crate::eval::EvalReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub alpha: f64,
    pub lr: f64,
    /// Mean contrastive-branch loss over the epoch's steps; absent when the
    /// branch did not run.
    pub contrastive_loss: Option<f64>,
    pub ce_loss: Option<f64>,
    pub hybrid_loss: f64,
    pub train_top1: f64,
    pub test_top1: Option<f64>,
}

/// Header of [`RunReport::write_csv`]. Empty cells mean "not computed".
pub const EPOCH_CSV_HEADER: &str =
    "epoch,stage,alpha,lr,contrastive_loss,ce_loss,hybrid_loss,train_top1,test_top1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub loss: String,
    pub seed: u64,
    pub contrastive_reduction: String,
    /// Full training configuration as `key = value` lines; parsing it back
    /// yields the same configuration.
    pub config: String,
    pub epochs: Vec<EpochRecord>,
    pub final_eval: Option<EvalReport>,
    pub wall_clock_secs: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunReport {
    pub fn final_test_top1(&self) -> Option<f64> {
        self.final_eval.as_ref().map(|e| e.top1)
    }

    pub fn alpha_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.alpha).collect()
    }

    /// Per-epoch hybrid, contrastive and CE losses flattened into one vector,
    /// for trace comparisons.
    pub fn loss_trace(&self) -> Vec<f64> {
        self.epochs
            .iter()
            .flat_map(|r| {
                [
                    r.hybrid_loss,
                    r.contrastive_loss.unwrap_or(f64::NAN),
                    r.ce_loss.unwrap_or(f64::NAN),
                ]
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{EPOCH_CSV_HEADER}")?;
        for r in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.stage,
                r.alpha,
                r.lr,
                opt(r.contrastive_loss),
                opt(r.ce_loss),
                r.hybrid_loss,
                r.train_top1,
                opt(r.test_top1)
            )?;
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}
