//! Prototype-based contrastive losses.
//!
//! Each embedding is attracted to the prototype(s) of its own class and
//! contrasted against the prototypes of every other class. The positive class
//! is **excluded** from the softmax denominator, so these losses can be
//! negative: per sample the single-prototype loss lies in
//! `[−2/τ, 2/τ + ln(C−1)]`.

use serde::{Deserialize, Serialize};

use super::{EmbeddingBatch, Temperature};
use crate::error::{Error, Result};
use crate::model::PrototypeBank;
use crate::numerics::{dot, log_sum_exp, Matrix};

#[derive(Debug, Clone)]
pub struct PrototypeLossOutput {
    /// Mean over the batch.
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub grad_z: Matrix,
    /// Gradient w.r.t. every prototype row, laid out like the bank.
    pub grad_prototypes: Matrix,
}

/// How the per-sample weights over a class's prototypes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AffinityMode {
    /// `w = 1/M` for every prototype.
    #[default]
    Uniform,
    /// Softmax over the sample's similarities to its own class's prototypes, at
    /// the loss temperature.
    Softmax,
}

impl std::str::FromStr for AffinityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(AffinityMode::Uniform),
            "softmax" => Ok(AffinityMode::Softmax),
            other => Err(Error::config(format!("unknown affinity mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for AffinityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AffinityMode::Uniform => "uniform",
            AffinityMode::Softmax => "softmax",
        })
    }
}

/// Per-sample loss from scaled affinities `s_j = z·p_j/τ`:
/// `−s_y + log Σ_{j≠y} exp(s_j)`.
pub fn psc_sample_loss(scaled_affinities: &[f64], label: usize) -> f64 {
    let neg = scaled_affinities
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &s)| s);
    -scaled_affinities[label] + log_sum_exp(neg)
}

/// Gradient of [`psc_sample_loss`] w.r.t. the scaled affinities: exactly `−1`
/// for the positive class and `exp(s_c)/Σ_{j≠y} exp(s_j)` for each negative.
pub fn psc_affinity_gradient(scaled_affinities: &[f64], label: usize) -> Vec<f64> {
    let lse = log_sum_exp(
        scaled_affinities
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != label)
            .map(|(_, &s)| s),
    );
    scaled_affinities
        .iter()
        .enumerate()
        .map(|(j, &s)| if j == label { -1.0 } else { (s - lse).exp() })
        .collect()
}

/// Single-prototype loss averaged over the batch.
pub fn psc_loss(
    batch: &EmbeddingBatch,
    bank: &PrototypeBank,
    tau: Temperature,
) -> Result<PrototypeLossOutput> {
    if bank.per_class() != 1 {
        return Err(Error::config(format!(
            "psc_loss needs one prototype per class, bank has {}",
            bank.per_class()
        )));
    }
    check_dims(batch.embeddings(), bank.prototypes())?;
    psc_loss_kernel(batch.embeddings(), batch.labels(), bank.prototypes(), tau.get())
}

/// [`psc_loss`] on raw rows: one prototype row per class, no norm checks.
pub fn psc_loss_kernel(
    z: &Matrix,
    labels: &[usize],
    prototypes: &Matrix,
    tau: f64,
) -> Result<PrototypeLossOutput> {
    let classes = prototypes.rows();
    if classes < 2 {
        return Err(Error::config(format!(
            "prototype losses need at least 2 classes, got {classes}"
        )));
    }
    check_labels(z, labels, classes)?;
    let n = z.rows();
    let inv_n = 1.0 / n as f64;
    let mut per_sample = Vec::with_capacity(n);
    let mut grad_z = Matrix::zeros(n, z.cols());
    let mut grad_p = Matrix::zeros(classes, z.cols());
    for i in 0..n {
        let zi = z.row(i);
        let y = labels[i];
        let s: Vec<f64> = (0..classes).map(|j| dot(zi, prototypes.row(j)) / tau).collect();
        per_sample.push(psc_sample_loss(&s, y));
        let coeff = psc_affinity_gradient(&s, y);
        accumulate(&coeff, i, z, prototypes, tau * n as f64, &mut grad_z, &mut grad_p);
    }
    Ok(PrototypeLossOutput {
        loss: per_sample.iter().sum::<f64>() * inv_n,
        per_sample,
        grad_z,
        grad_prototypes: grad_p,
    })
}

/// Affinity weights `w[i][k]` of sample `i` to the `k`-th prototype of its class.
pub fn mpsc_affinity_weights(
    z: &Matrix,
    labels: &[usize],
    prototypes: &Matrix,
    per_class: usize,
    tau: f64,
    mode: AffinityMode,
) -> Matrix {
    let n = z.rows();
    match mode {
        AffinityMode::Uniform => Matrix::filled(n, per_class, 1.0 / per_class as f64),
        AffinityMode::Softmax => {
            let mut w = Matrix::zeros(n, per_class);
            for i in 0..n {
                let base = labels[i] * per_class;
                let s: Vec<f64> = (0..per_class)
                    .map(|k| dot(z.row(i), prototypes.row(base + k)) / tau)
                    .collect();
                let lse = log_sum_exp(s.iter().copied());
                for (wk, sk) in w.row_mut(i).iter_mut().zip(&s) {
                    *wk = (sk - lse).exp();
                }
            }
            w
        }
    }
}

/// Multi-prototype loss averaged over the batch. The affinity weights are
/// computed from the current embeddings and then held constant for the
/// gradient.
pub fn mpsc_loss(
    batch: &EmbeddingBatch,
    bank: &PrototypeBank,
    tau: Temperature,
    mode: AffinityMode,
) -> Result<PrototypeLossOutput> {
    check_dims(batch.embeddings(), bank.prototypes())?;
    let weights = mpsc_affinity_weights(
        batch.embeddings(),
        batch.labels(),
        bank.prototypes(),
        bank.per_class(),
        tau.get(),
        mode,
    );
    mpsc_loss_kernel(
        batch.embeddings(),
        batch.labels(),
        bank.prototypes(),
        bank.per_class(),
        tau.get(),
        &weights,
    )
}

/// ```text
/// L(z_i) = −1/M Σ_k log( w_ik exp(z_i·p_{y,k}/τ) / Σ_{j≠y} Σ_m exp(z_i·p_{j,m}/τ) )
/// ```
///
/// `prototypes` holds `C·M` rows, class-major.
pub fn mpsc_loss_kernel(
    z: &Matrix,
    labels: &[usize],
    prototypes: &Matrix,
    per_class: usize,
    tau: f64,
    weights: &Matrix,
) -> Result<PrototypeLossOutput> {
    if per_class == 0 || prototypes.rows() % per_class != 0 {
        return Err(Error::config(format!(
            "{} prototype rows cannot hold {per_class} prototypes per class",
            prototypes.rows()
        )));
    }
    let classes = prototypes.rows() / per_class;
    if classes < 2 {
        return Err(Error::config(format!(
            "prototype losses need at least 2 classes, got {classes}"
        )));
    }
    check_labels(z, labels, classes)?;
    let n = z.rows();
    if weights.shape() != (n, per_class) {
        return Err(Error::shape(
            "mpsc_loss",
            format!("weights {:?}, expected {:?}", weights.shape(), (n, per_class)),
        ));
    }
    let m = per_class as f64;
    let rows = prototypes.rows();
    let mut per_sample = Vec::with_capacity(n);
    let mut grad_z = Matrix::zeros(n, z.cols());
    let mut grad_p = Matrix::zeros(rows, z.cols());
    for i in 0..n {
        let zi = z.row(i);
        let pos = labels[i] * per_class..(labels[i] + 1) * per_class;
        let s: Vec<f64> = (0..rows).map(|r| dot(zi, prototypes.row(r)) / tau).collect();
        let lse_neg = log_sum_exp(
            s.iter()
                .enumerate()
                .filter(|(r, _)| !pos.contains(r))
                .map(|(_, &v)| v),
        );
        let mut li = 0.0;
        for (k, r) in pos.clone().enumerate() {
            let w = weights.get(i, k);
            if !(w > 0.0) {
                return Err(Error::NonFinite(format!(
                    "affinity weight w[{i}][{k}] = {w} has no finite logarithm"
                )));
            }
            li += w.ln() + s[r];
        }
        per_sample.push(-li / m + lse_neg);

        let coeff: Vec<f64> = s
            .iter()
            .enumerate()
            .map(|(r, &v)| {
                if pos.contains(&r) {
                    -1.0 / m
                } else {
                    (v - lse_neg).exp()
                }
            })
            .collect();
        accumulate(&coeff, i, z, prototypes, tau * n as f64, &mut grad_z, &mut grad_p);
    }
    Ok(PrototypeLossOutput {
        loss: per_sample.iter().sum::<f64>() / n as f64,
        per_sample,
        grad_z,
        grad_prototypes: grad_p,
    })
}

/// Chain rule through `s_r = z_i·p_r / τ`, with the batch-mean factor folded
/// into `scale = τ·N`.
fn accumulate(
    coeff: &[f64],
    i: usize,
    z: &Matrix,
    prototypes: &Matrix,
    scale: f64,
    grad_z: &mut Matrix,
    grad_p: &mut Matrix,
) {
    let zi = z.row(i);
    for (r, &c) in coeff.iter().enumerate() {
        let c = c / scale;
        for (g, &p) in grad_z.row_mut(i).iter_mut().zip(prototypes.row(r)) {
            *g += c * p;
        }
        for (g, &zv) in grad_p.row_mut(r).iter_mut().zip(zi) {
            *g += c * zv;
        }
    }
}

fn check_dims(z: &Matrix, prototypes: &Matrix) -> Result<()> {
    if z.cols() != prototypes.cols() {
        return Err(Error::config(format!(
            "embeddings have {} dims but prototypes have {}",
            z.cols(),
            prototypes.cols()
        )));
    }
    Ok(())
}

fn check_labels(z: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != z.rows() {
        return Err(Error::shape(
            "prototype loss",
            format!("{} rows vs {} labels", z.rows(), labels.len()),
        ));
    }
    if z.rows() == 0 {
        return Err(Error::config("embedding batch is empty"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::config(format!("label {y} out of range for {classes} classes")));
    }
    Ok(())
}
