//! Independent oracles shared by the integration tests: literal loss formulas
//! written with plain loops and `exp`/`ln`, and a central-difference
//! gradient that does not use the crate.
#![allow(dead_code)]

use hybridlt::Matrix;
use rand::seq::SliceRandom;
use rand::Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

pub fn from_rows(rows: &Rows) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Mean softmax cross-entropy.
pub fn ce(logits: &Rows, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        let mut denom = 0.0;
        for v in row {
            denom += v.exp();
        }
        total += -(row[y].exp() / denom).ln();
    }
    total / logits.len() as f64
}

/// Summed supervised contrastive loss; positives are all other same-label rows.
pub fn sc(z: &Rows, labels: &[usize], tau: f64) -> f64 {
    let n = z.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += (dot(&z[i], &z[k]) / tau).exp();
            }
        }
        let mut sum = 0.0;
        let mut count = 0.0;
        for p in 0..n {
            if p != i && labels[p] == labels[i] {
                sum += ((dot(&z[i], &z[p]) / tau).exp() / denom).ln();
                count += 1.0;
            }
        }
        total += -sum / count;
    }
    total
}

/// Mean single-prototype loss with the positive excluded from the denominator.
pub fn psc(z: &Rows, labels: &[usize], protos: &Rows, tau: f64) -> f64 {
    let mut total = 0.0;
    for (zi, &y) in z.iter().zip(labels) {
        let mut denom = 0.0;
        for (j, p) in protos.iter().enumerate() {
            if j != y {
                denom += (dot(zi, p) / tau).exp();
            }
        }
        total += -((dot(zi, &protos[y]) / tau).exp() / denom).ln();
    }
    total / z.len() as f64
}

/// Mean multi-prototype loss; `protos` is class-major with `m` rows per class.
pub fn mpsc(z: &Rows, labels: &[usize], protos: &Rows, m: usize, tau: f64, w: &Rows) -> f64 {
    let classes = protos.len() / m;
    let mut total = 0.0;
    for (i, zi) in z.iter().enumerate() {
        let y = labels[i];
        let mut denom = 0.0;
        for j in 0..classes {
            if j == y {
                continue;
            }
            for k in 0..m {
                denom += (dot(zi, &protos[j * m + k]) / tau).exp();
            }
        }
        let mut sum = 0.0;
        for k in 0..m {
            sum += (w[i][k] * (dot(zi, &protos[y * m + k]) / tau).exp() / denom).ln();
        }
        total += -sum / m as f64;
    }
    total / z.len() as f64
}

/// Softmax affinity over the sample's own-class prototypes.
pub fn softmax_affinity(z: &Rows, labels: &[usize], protos: &Rows, m: usize, tau: f64) -> Rows {
    z.iter()
        .zip(labels)
        .map(|(zi, &y)| {
            let e: Vec<f64> = (0..m).map(|k| (dot(zi, &protos[y * m + k]) / tau).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Central differences over every entry of `x`.
pub fn numeric_grad(f: impl Fn(&Rows) -> f64, x: &Rows, h: f64) -> Rows {
    let mut probe = x.clone();
    let mut g = vec![vec![0.0; x[0].len()]; x.len()];
    for i in 0..x.len() {
        for j in 0..x[i].len() {
            let orig = x[i][j];
            probe[i][j] = orig + h;
            let plus = f(&probe);
            probe[i][j] = orig - h;
            let minus = f(&probe);
            probe[i][j] = orig;
            g[i][j] = (plus - minus) / (2.0 * h);
        }
    }
    g
}

/// Largest `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn max_rel_err(analytic: &Matrix, numeric: &Rows) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in numeric.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            let a = analytic.get(i, j);
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
        }
    }
    worst
}

pub fn unit_rows<R: Rng>(n: usize, d: usize, rng: &mut R) -> Rows {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / len).collect()
        })
        .collect()
}

/// `n` labels covering every class in `0..classes`.
pub fn covering_labels<R: Rng>(n: usize, classes: usize, rng: &mut R) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n)
        .map(|i| if i < classes { i } else { rng.gen_range(0..classes) })
        .collect();
    y.shuffle(rng);
    y
}

/// `n_max · β^(−c/(C−1))` rounded, evaluated as `exp(ln n_max − c/(C−1) · ln β)`.
pub fn longtail_profile(classes: usize, n_max: usize, beta: f64) -> Vec<usize> {
    (0..classes)
        .map(|c| {
            let frac = c as f64 / (classes - 1) as f64;
            ((n_max as f64).ln() - frac * beta.ln()).exp().round() as usize
        })
        .collect()
}
