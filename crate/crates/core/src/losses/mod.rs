//! Cross-entropy, supervised contrastive, and prototype-based contrastive
//! losses, plus the curriculum-weighted hybrid combiner.
//!
//! Every loss returns its value together with analytic gradients. Gradients
//! w.r.t. embeddings are in ambient coordinates; projecting them onto the
//! tangent space of the unit sphere is the job of the normalization layer.

mod ce;
mod prototype;
mod schedule;
mod supcon;

pub use ce::{ce_loss, CeOutput};
pub use prototype::{
    mpsc_affinity_weights, mpsc_loss, mpsc_loss_kernel, psc_affinity_gradient, psc_loss,
    psc_loss_kernel, psc_sample_loss, AffinityMode, PrototypeLossOutput,
};
pub use schedule::{curriculum_alpha, hybrid_loss, CurriculumSchedule, ScheduleKind};
pub use supcon::{sc_loss, sc_loss_kernel, ScOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix};

/// Tolerance on the unit-norm invariant of embedding rows.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::config(format!("temperature must be positive, got {tau}")));
        }
        Ok(Self(tau))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Temperature::new(v)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// Classification logits with their labels.
#[derive(Debug, Clone)]
pub struct LogitsBatch {
    pub logits: Matrix,
    pub labels: Vec<usize>,
}

impl LogitsBatch {
    pub fn new(logits: Matrix, labels: Vec<usize>) -> Result<Self> {
        if logits.rows() != labels.len() {
            return Err(Error::shape(
                "LogitsBatch::new",
                format!("{} logit rows vs {} labels", logits.rows(), labels.len()),
            ));
        }
        if logits.rows() == 0 {
            return Err(Error::config("logits batch is empty"));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= logits.cols()) {
            return Err(Error::config(format!(
                "label {y} of row {i} is out of range for {} classes",
                logits.cols()
            )));
        }
        Ok(Self { logits, labels })
    }
}

/// Unit-norm embeddings with labels, view ids, and per-anchor positive sets.
///
/// Row `i`'s positives default to every other row carrying the same label,
/// which includes the sibling view of the same source sample.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    z: Matrix,
    labels: Vec<usize>,
    source_id: Vec<usize>,
    view_id: Vec<usize>,
    positives: Vec<Vec<usize>>,
}

impl EmbeddingBatch {
    /// Single-view batch: every row is its own source.
    pub fn new(z: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = labels.len();
        Self::with_views(z, labels, (0..n).collect(), vec![0; n], num_classes)
    }

    pub fn with_views(
        z: Matrix,
        labels: Vec<usize>,
        source_id: Vec<usize>,
        view_id: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = z.rows();
        if n == 0 {
            return Err(Error::config("embedding batch is empty"));
        }
        if labels.len() != n || source_id.len() != n || view_id.len() != n {
            return Err(Error::shape(
                "EmbeddingBatch",
                format!(
                    "{n} rows but {} labels, {} source ids, {} view ids",
                    labels.len(),
                    source_id.len(),
                    view_id.len()
                ),
            ));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::config(format!(
                "label {y} of row {i} is out of range for {num_classes} classes"
            )));
        }
        for (i, row) in z.row_iter().enumerate() {
            let nrm = norm(row);
            if !((nrm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
                return Err(Error::Degenerate(format!(
                    "embedding row {i} has norm {nrm}, expected 1"
                )));
            }
        }
        let positives = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && labels[j] == labels[i])
                    .collect()
            })
            .collect();
        Ok(Self {
            z,
            labels,
            source_id,
            view_id,
            positives,
        })
    }

    /// Truncates every positive set to at most `cap` entries. Rows sharing the
    /// anchor's source (its other views) are kept first, then the remaining
    /// positives in row order.
    pub fn cap_positives(&mut self, cap: usize) {
        for (i, pos) in self.positives.iter_mut().enumerate() {
            let src = self.source_id[i];
            pos.sort_by_key(|&j| (self.source_id[j] != src, j));
            pos.truncate(cap);
        }
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.z
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn view_ids(&self) -> &[usize] {
        &self.view_id
    }

    pub fn source_ids(&self) -> &[usize] {
        &self.source_id
    }

    pub fn positives(&self) -> &[Vec<usize>] {
        &self.positives
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.rows() == 0
    }
}
