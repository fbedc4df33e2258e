use super::LogitsBatch;
use crate::numerics::{log_sum_exp, Matrix};

#[derive(Debug, Clone)]
pub struct CeOutput {
    pub loss: f64,
    /// `(softmax(s) − onehot(y)) / N`
    pub grad_logits: Matrix,
}

/// Mean softmax cross-entropy over the batch.
pub fn ce_loss(batch: &LogitsBatch) -> CeOutput {
    let s = &batch.logits;
    let n = s.rows() as f64;
    let mut grad = Matrix::zeros(s.rows(), s.cols());
    let mut total = 0.0;
    for (i, (row, &y)) in s.row_iter().zip(&batch.labels).enumerate() {
        let lse = log_sum_exp(row.iter().copied());
        total += lse - row[y];
        for (g, &v) in grad.row_mut(i).iter_mut().zip(row) {
            *g = (v - lse).exp() / n;
        }
        *grad.row_mut(i).get_mut(y).expect("label checked by LogitsBatch") -= 1.0 / n;
    }
    CeOutput {
        loss: total / n,
        grad_logits: grad,
    }
}
