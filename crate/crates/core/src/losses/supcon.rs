use super::{EmbeddingBatch, Temperature};
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Matrix};

#[derive(Debug, Clone)]
pub struct ScOutput {
    /// Sum of per-anchor terms over the batch.
    pub loss: f64,
    pub per_anchor: Vec<f64>,
    pub grad_z: Matrix,
}

/// Supervised contrastive loss, summed over anchors.
///
/// For anchor `i` with positives `P(i)`:
///
/// ```text
/// L(z_i) = −1/|P(i)| Σ_{p∈P(i)} log( exp(z_i·z_p/τ) / Σ_{k≠i} exp(z_i·z_k/τ) )
/// ```
///
/// The denominator runs over every other row of the batch, positives included.
pub fn sc_loss(batch: &EmbeddingBatch, tau: Temperature) -> Result<ScOutput> {
    sc_loss_kernel(batch.embeddings(), batch.positives(), tau.get())
}

/// [`sc_loss`] on raw rows, without the unit-norm check. Used directly by the
/// gradient checks, which perturb embeddings off the sphere.
pub fn sc_loss_kernel(z: &Matrix, positives: &[Vec<usize>], tau: f64) -> Result<ScOutput> {
    let n = z.rows();
    if positives.len() != n {
        return Err(Error::shape(
            "sc_loss",
            format!("{n} rows but {} positive sets", positives.len()),
        ));
    }
    if let Some(anchor) = positives.iter().position(|p| p.is_empty()) {
        return Err(Error::NoPositives { anchor });
    }

    let sims = z.matmul_nt(z)?.scale(1.0 / tau);
    // coeff[i][k] = dL_i / ds_ik
    let mut coeff = Matrix::zeros(n, n);
    let mut per_anchor = Vec::with_capacity(n);
    for i in 0..n {
        let row = sims.row(i);
        let lse = log_sum_exp(row.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v));
        let pos = &positives[i];
        let inv_p = 1.0 / pos.len() as f64;
        let pos_mean: f64 = pos.iter().map(|&p| row[p]).sum::<f64>() * inv_p;
        per_anchor.push(lse - pos_mean);

        let c = coeff.row_mut(i);
        for (k, ck) in c.iter_mut().enumerate() {
            if k != i {
                *ck = (row[k] - lse).exp();
            }
        }
        for &p in pos {
            c[p] -= inv_p;
        }
    }

    // s_ik = z_i·z_k/τ contributes to both z_i and z_k.
    let mut grad_z = Matrix::zeros(n, z.cols());
    for i in 0..n {
        for k in 0..n {
            let w = (coeff.get(i, k) + coeff.get(k, i)) / tau;
            if w != 0.0 {
                for (g, &zk) in grad_z.row_mut(i).iter_mut().zip(z.row(k)) {
                    *g += w * zk;
                }
            }
        }
    }
    Ok(ScOutput {
        loss: per_anchor.iter().sum(),
        per_anchor,
        grad_z,
    })
}
