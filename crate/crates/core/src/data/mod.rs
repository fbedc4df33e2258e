//! Long-tailed dataset construction, CIFAR ingestion, view perturbation, and
//! the samplers feeding both training branches.

mod batch;
mod cifar;
mod csv;
mod longtail;
mod sampler;
mod synth;
mod views;

pub use batch::{compose_sc_batch, PositiveCap, ScBatch};
pub use cifar::{load_cifar_binary, parse_cifar_binary, CIFAR_PIXELS, CIFAR_RECORD_BYTES};
pub use csv::{read_csv, write_csv};
pub use longtail::{class_counts, subsample_longtail, LongTailSpec};
pub use sampler::{sample_class_balanced, sample_random_epoch, BatchSampler, SamplerKind};
pub use synth::{synth_gaussian_longtail, SynthConfig};
pub use views::make_views;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Immutable labelled feature matrix with per-class row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    class_indices: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} feature rows vs {} labels", features.rows(), labels.len()),
            ));
        }
        let mut class_indices = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            class_indices
                .get_mut(y)
                .ok_or_else(|| {
                    Error::config(format!(
                        "label {y} of row {i} is out of range for {num_classes} classes"
                    ))
                })?
                .push(i);
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            class_indices,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_indices(&self) -> &[Vec<usize>] {
        &self.class_indices
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.class_indices.iter().map(Vec::len).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(self.features.select_rows(indices), labels, self.num_classes)
            .expect("labels of a subset are already validated")
    }

    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}
