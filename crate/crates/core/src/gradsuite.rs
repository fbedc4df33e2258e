//! Randomized finite-difference check of every loss gradient.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::losses::{
    ce_loss, mpsc_affinity_weights, mpsc_loss_kernel, psc_loss_kernel, sc_loss_kernel,
    AffinityMode, LogitsBatch,
};
use crate::numerics::{finite_diff_gradient, max_relative_error, Matrix, DEFAULT_STEP};

/// Largest batch, class count and embedding width drawn by the suite.
pub const MAX_ROWS: usize = 16;
pub const MAX_CLASSES: usize = 5;
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    /// `loss/with-respect-to`, e.g. `mpsc/prototypes`.
    pub name: String,
    pub instances: usize,
    pub max_relative_error: f64,
}

fn unit_rows<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::random_normal(rows, cols, 1.0, rng);
    for r in 0..rows {
        let n = crate::numerics::norm(m.row(r));
        m.row_mut(r).iter_mut().for_each(|v| *v /= n);
    }
    m
}

/// Labels with every class in `0..classes` present at least once.
fn labels<R: Rng>(n: usize, classes: usize, rng: &mut R) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n).map(|i| if i < classes { i } else { rng.gen_range(0..classes) }).collect();
    y.shuffle(rng);
    y
}

struct Instance {
    n: usize,
    classes: usize,
    dim: usize,
    tau: f64,
}

fn draw<R: Rng>(rng: &mut R) -> Instance {
    let classes = rng.gen_range(2..=MAX_CLASSES);
    Instance {
        n: rng.gen_range(classes.max(2)..=MAX_ROWS),
        classes,
        dim: rng.gen_range(2..=MAX_DIM),
        tau: rng.gen_range(0.1..1.0),
    }
}

fn check_ce<R: Rng>(rng: &mut R) -> Result<f64> {
    let inst = draw(rng);
    let logits = Matrix::random_normal(inst.n, inst.classes, 3.0, rng);
    let y = labels(inst.n, inst.classes, rng);
    let out = ce_loss(&LogitsBatch::new(logits.clone(), y.clone())?);
    let numeric = finite_diff_gradient(
        |l| ce_loss(&LogitsBatch::new(l.clone(), y.clone()).unwrap()).loss,
        &logits,
        DEFAULT_STEP,
    );
    Ok(max_relative_error(&out.grad_logits, &numeric))
}

fn check_sc<R: Rng>(rng: &mut R) -> Result<f64> {
    let inst = draw(rng);
    // Pairs of rows per source so every anchor has a positive.
    let sources = (inst.n / 2).max(1);
    let n = 2 * sources;
    let src_labels = labels(sources, inst.classes.min(sources), rng);
    let y: Vec<usize> = src_labels.iter().chain(&src_labels).copied().collect();
    let positives: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && y[j] == y[i]).collect())
        .collect();
    let z = unit_rows(n, inst.dim, rng);
    let out = sc_loss_kernel(&z, &positives, inst.tau)?;
    let numeric = finite_diff_gradient(
        |m| sc_loss_kernel(m, &positives, inst.tau).unwrap().loss,
        &z,
        DEFAULT_STEP,
    );
    Ok(max_relative_error(&out.grad_z, &numeric))
}

fn check_psc<R: Rng>(rng: &mut R) -> Result<(f64, f64)> {
    let inst = draw(rng);
    let z = unit_rows(inst.n, inst.dim, rng);
    let p = unit_rows(inst.classes, inst.dim, rng);
    let y = labels(inst.n, inst.classes, rng);
    let out = psc_loss_kernel(&z, &y, &p, inst.tau)?;
    let nz = finite_diff_gradient(
        |m| psc_loss_kernel(m, &y, &p, inst.tau).unwrap().loss,
        &z,
        DEFAULT_STEP,
    );
    let np = finite_diff_gradient(
        |m| psc_loss_kernel(&z, &y, m, inst.tau).unwrap().loss,
        &p,
        DEFAULT_STEP,
    );
    Ok((
        max_relative_error(&out.grad_z, &nz),
        max_relative_error(&out.grad_prototypes, &np),
    ))
}

fn check_mpsc<R: Rng>(rng: &mut R, mode: AffinityMode) -> Result<(f64, f64)> {
    let inst = draw(rng);
    let per_class = rng.gen_range(1..=3);
    let z = unit_rows(inst.n, inst.dim, rng);
    let p = unit_rows(inst.classes * per_class, inst.dim, rng);
    let y = labels(inst.n, inst.classes, rng);
    // The weights are treated as constants by the analytic gradient.
    let w = mpsc_affinity_weights(&z, &y, &p, per_class, inst.tau, mode);
    let out = mpsc_loss_kernel(&z, &y, &p, per_class, inst.tau, &w)?;
    let nz = finite_diff_gradient(
        |m| mpsc_loss_kernel(m, &y, &p, per_class, inst.tau, &w).unwrap().loss,
        &z,
        DEFAULT_STEP,
    );
    let np = finite_diff_gradient(
        |m| mpsc_loss_kernel(&z, &y, m, per_class, inst.tau, &w).unwrap().loss,
        &p,
        DEFAULT_STEP,
    );
    Ok((
        max_relative_error(&out.grad_z, &nz),
        max_relative_error(&out.grad_prototypes, &np),
    ))
}

/// Checks `instances` random problems per loss and reports the worst relative
/// error for each gradient.
pub fn run_suite(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 8];
    for _ in 0..instances {
        worst[0] = worst[0].max(check_ce(&mut rng)?);
        worst[1] = worst[1].max(check_sc(&mut rng)?);
        let (a, b) = check_psc(&mut rng)?;
        worst[2] = worst[2].max(a);
        worst[3] = worst[3].max(b);
        let (a, b) = check_mpsc(&mut rng, AffinityMode::Uniform)?;
        worst[4] = worst[4].max(a);
        worst[5] = worst[5].max(b);
        let (a, b) = check_mpsc(&mut rng, AffinityMode::Softmax)?;
        worst[6] = worst[6].max(a);
        worst[7] = worst[7].max(b);
    }
    let names = [
        "ce/logits",
        "sc/embeddings",
        "psc/embeddings",
        "psc/prototypes",
        "mpsc/embeddings",
        "mpsc/prototypes",
        "mpsc-softmax/embeddings",
        "mpsc-softmax/prototypes",
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, err)| CheckResult {
            name: name.to_string(),
            instances,
            max_relative_error: err,
        })
        .collect())
}
