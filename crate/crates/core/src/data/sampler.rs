use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Uniform over rows, without replacement within an epoch.
    Random,
    /// Class drawn uniformly, then a row uniformly within the class.
    Balanced,
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SamplerKind::Random),
            "balanced" | "class-balanced" => Ok(SamplerKind::Balanced),
            other => Err(Error::config(format!("unknown sampler `{other}`"))),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::Random => "random",
            SamplerKind::Balanced => "balanced",
        })
    }
}

/// Stateful batch sampler. After [`BatchSampler::begin_epoch`] a random sampler
/// walks a fresh permutation; once exhausted it reshuffles.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    kind: SamplerKind,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(kind: SamplerKind, ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::config("cannot sample from an empty dataset"));
        }
        if kind == SamplerKind::Balanced {
            if let Some(c) = ds.class_indices().iter().position(Vec::is_empty) {
                return Err(Error::config(format!(
                    "class {c} is empty; class-balanced sampling needs every class"
                )));
            }
        }
        Ok(Self {
            kind,
            order: (0..ds.len()).collect(),
            cursor: ds.len(),
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn begin_epoch<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.kind == SamplerKind::Random {
            self.reshuffle(rng);
        }
    }

    fn reshuffle<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.order.sort_unstable();
        self.order.shuffle(rng);
        self.cursor = 0;
    }

    /// Up to `size` indices. A random sampler returns the remainder of its
    /// permutation when fewer than `size` rows are left.
    pub fn next_batch<R: Rng + ?Sized>(
        &mut self,
        ds: &Dataset,
        size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        match self.kind {
            SamplerKind::Random => {
                if self.cursor >= self.order.len() {
                    self.reshuffle(rng);
                }
                let end = (self.cursor + size).min(self.order.len());
                let batch = self.order[self.cursor..end].to_vec();
                self.cursor = end;
                Ok(batch)
            }
            SamplerKind::Balanced => Ok((0..size)
                .map(|_| {
                    let rows = &ds.class_indices()[rng.gen_range(0..ds.num_classes())];
                    rows[rng.gen_range(0..rows.len())]
                })
                .collect()),
        }
    }
}

/// One epoch of random batches covering every row exactly once.
pub fn sample_random_epoch<R: Rng + ?Sized>(
    ds: &Dataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let mut sampler = BatchSampler::new(SamplerKind::Random, ds)?;
    sampler.begin_epoch(rng);
    let steps = ds.len().div_ceil(batch_size.max(1));
    (0..steps).map(|_| sampler.next_batch(ds, batch_size, rng)).collect()
}

/// `batch_size` class-balanced draws (with replacement).
pub fn sample_class_balanced<R: Rng + ?Sized>(
    ds: &Dataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    BatchSampler::new(SamplerKind::Balanced, ds)?.next_batch(ds, batch_size, rng)
}
