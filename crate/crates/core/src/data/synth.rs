use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{class_counts, Dataset, LongTailSpec};
use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub spec: LongTailSpec,
    pub dim: usize,
    /// Norm of every class mean; the per-coordinate noise has unit variance.
    pub class_sep: f64,
    pub test_per_class: usize,
    pub seed: u64,
}

/// Isotropic Gaussian classes with seed-determined means of norm `class_sep`:
/// a long-tailed training set plus a balanced test set drawn from the same
/// class distributions.
pub fn synth_gaussian_longtail(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    if !(cfg.class_sep > 0.0 && cfg.class_sep.is_finite()) {
        return Err(Error::config(format!(
            "class_sep must be positive, got {}",
            cfg.class_sep
        )));
    }
    if cfg.dim == 0 {
        return Err(Error::config("feature dimension must be positive"));
    }
    let counts = class_counts(&cfg.spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let classes = cfg.spec.num_classes;

    let mut means = Matrix::random_normal(classes, cfg.dim, 1.0, &mut rng);
    for c in 0..classes {
        let n = norm(means.row(c));
        for v in means.row_mut(c) {
            *v *= cfg.class_sep / n;
        }
    }

    let mut draw = |per_class: &[usize]| -> Result<Dataset> {
        let total: usize = per_class.iter().sum();
        let mut noise = Matrix::random_normal(total, cfg.dim, 1.0, &mut rng);
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for (c, &n) in per_class.iter().enumerate() {
            for _ in 0..n {
                for (v, m) in noise.row_mut(row).iter_mut().zip(means.row(c)) {
                    *v += m;
                }
                labels.push(c);
                row += 1;
            }
        }
        Dataset::new(noise, labels, classes)
    };
    let train = draw(&counts)?;
    let test = draw(&vec![cfg.test_per_class; classes])?;
    Ok((train, test))
}
