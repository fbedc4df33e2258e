use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{make_views, BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::losses::EmbeddingBatch;
use crate::numerics::Matrix;

/// Upper bound on the number of positives used per anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PositiveCap {
    #[default]
    All,
    AtMost(usize),
}

impl FromStr for PositiveCap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(PositiveCap::All);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(PositiveCap::AtMost(n)),
            _ => Err(Error::config(format!(
                "positives per anchor must be `all` or a positive count, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for PositiveCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PositiveCap::All => f.write_str("all"),
            PositiveCap::AtMost(n) => write!(f, "{n}"),
        }
    }
}

/// Contrastive-branch input: two perturbed views of each sampled source row.
/// Rows `0..n` are view 0 of sources `0..n`; rows `n..2n` are view 1.
#[derive(Debug, Clone)]
pub struct ScBatch {
    pub rows: Matrix,
    pub labels: Vec<usize>,
    pub source_id: Vec<usize>,
    pub view_id: Vec<usize>,
    /// Dataset row of every source sample.
    pub dataset_rows: Vec<usize>,
    pub cap: PositiveCap,
}

impl ScBatch {
    pub fn from_sources<R: Rng + ?Sized>(
        ds: &Dataset,
        sources: &[usize],
        noise_sigma: f64,
        cap: PositiveCap,
        rng: &mut R,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::config("contrastive batch needs at least one source sample"));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::config(format!("view noise must be >= 0, got {noise_sigma}")));
        }
        let (x, y) = ds.batch(sources);
        let (v0, v1) = make_views(&x, noise_sigma, rng);
        let n = sources.len();
        let batch = Self {
            rows: Matrix::vstack(&[&v0, &v1])?,
            labels: [y.clone(), y].concat(),
            source_id: (0..n).chain(0..n).collect(),
            view_id: [vec![0; n], vec![1; n]].concat(),
            dataset_rows: sources.to_vec(),
            cap,
        };
        debug_assert!(batch.positive_counts().iter().all(|&c| c >= 1));
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Attaches embeddings of `rows` (same order) and applies the positive cap.
    pub fn embedding_batch(&self, z: Matrix, num_classes: usize) -> Result<EmbeddingBatch> {
        let mut b = EmbeddingBatch::with_views(
            z,
            self.labels.clone(),
            self.source_id.clone(),
            self.view_id.clone(),
            num_classes,
        )?;
        if let PositiveCap::AtMost(cap) = self.cap {
            b.cap_positives(cap);
        }
        Ok(b)
    }

    /// Number of positives each anchor ends up with after the cap.
    pub fn positive_counts(&self) -> Vec<usize> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let all = (0..n).filter(|&j| j != i && self.labels[j] == self.labels[i]).count();
                match self.cap {
                    PositiveCap::All => all,
                    PositiveCap::AtMost(c) => all.min(c),
                }
            })
            .collect()
    }
}

/// Draws `batch_size / 2` source rows from `sampler` and expands each into
/// two views.
#[allow(clippy::too_many_arguments)]
pub fn compose_sc_batch<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    ds: &Dataset,
    sampler: &mut BatchSampler,
    batch_size: usize,
    noise_sigma: f64,
    cap: PositiveCap,
    sample_rng: &mut R1,
    view_rng: &mut R2,
) -> Result<ScBatch> {
    if batch_size < 2 {
        return Err(Error::config(format!(
            "contrastive batch size must be at least 2 rows, got {batch_size}"
        )));
    }
    let sources = sampler.next_batch(ds, batch_size / 2, sample_rng)?;
    ScBatch::from_sources(ds, &sources, noise_sigma, cap, view_rng)
}
