use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Exponentially decaying class-size profile with imbalance ratio
/// `beta = n_max / n_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    pub num_classes: usize,
    pub n_max: usize,
    pub beta: f64,
}

impl LongTailSpec {
    pub fn new(num_classes: usize, n_max: usize, beta: f64) -> Result<Self> {
        let spec = Self {
            num_classes,
            n_max,
            beta,
        };
        class_counts(&spec)?;
        Ok(spec)
    }

    pub fn counts(&self) -> Result<Vec<usize>> {
        class_counts(self)
    }
}

/// `n_c = round(n_max · beta^(−c/(C−1)))`, so `n_0 = n_max` and
/// `n_{C−1} = n_max / beta` up to rounding.
pub fn class_counts(spec: &LongTailSpec) -> Result<Vec<usize>> {
    if spec.num_classes == 0 {
        return Err(Error::config("long-tail spec needs at least one class"));
    }
    if !(spec.beta >= 1.0 && spec.beta.is_finite()) {
        return Err(Error::config(format!(
            "imbalance ratio must be >= 1, got {}",
            spec.beta
        )));
    }
    if spec.num_classes == 1 {
        return Ok(vec![spec.n_max]);
    }
    let last = (spec.num_classes - 1) as f64;
    let counts: Vec<usize> = (0..spec.num_classes)
        .map(|c| (spec.n_max as f64 * spec.beta.powf(-(c as f64) / last)).round() as usize)
        .collect();
    if let Some(c) = counts.iter().position(|&n| n < 1) {
        return Err(Error::config(format!(
            "class {c} would receive no samples (n_max {}, beta {})",
            spec.n_max, spec.beta
        )));
    }
    Ok(counts)
}

/// Keeps `n_c` seed-shuffled rows of each class `c`; surviving rows keep their
/// original relative order.
pub fn subsample_longtail<R: Rng + ?Sized>(
    ds: &Dataset,
    spec: &LongTailSpec,
    rng: &mut R,
) -> Result<Dataset> {
    if spec.num_classes != ds.num_classes() {
        return Err(Error::config(format!(
            "long-tail spec has {} classes, dataset has {}",
            spec.num_classes,
            ds.num_classes()
        )));
    }
    let counts = class_counts(spec)?;
    let mut keep = Vec::with_capacity(counts.iter().sum());
    for (c, (&n, rows)) in counts.iter().zip(ds.class_indices()).enumerate() {
        if rows.len() < n {
            return Err(Error::config(format!(
                "class {c} has {} samples, long-tail profile needs {n}",
                rows.len()
            )));
        }
        let mut rows = rows.clone();
        rows.shuffle(rng);
        keep.extend_from_slice(&rows[..n]);
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}
