use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::Matrix;

/// Two independently perturbed copies of `x` with additive `N(0, sigma²)`
/// noise. `sigma = 0` returns exact copies and draws nothing from `rng`.
pub fn make_views<R: Rng + ?Sized>(x: &Matrix, noise_sigma: f64, rng: &mut R) -> (Matrix, Matrix) {
    if noise_sigma == 0.0 {
        return (x.clone(), x.clone());
    }
    let noise = Normal::new(0.0, noise_sigma).expect("noise sigma must be finite and >= 0");
    let mut perturb = || x.data().iter().map(|&v| v + noise.sample(rng)).collect::<Vec<_>>();
    let a = perturb();
    let b = perturb();
    (
        Matrix::new(x.rows(), x.cols(), a).expect("same shape"),
        Matrix::new(x.rows(), x.cols(), b).expect("same shape"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_is_identity() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let (a, b) = make_views(&x, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(a, x);
        assert_eq!(b, x);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let x = Matrix::zeros(3, 4);
        let v1 = make_views(&x, 0.3, &mut ChaCha8Rng::seed_from_u64(5));
        let v2 = make_views(&x, 0.3, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(v1, v2);
        assert_ne!(v1.0, v1.1);
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let x = Matrix::zeros(100, 100);
        let (a, b) = make_views(&x, 0.1, &mut ChaCha8Rng::seed_from_u64(17));
        for v in [a, b] {
            let msd = v.data().iter().map(|d| d * d).sum::<f64>() / v.len() as f64;
            assert!((msd - 0.01).abs() <= 0.001, "mean squared deviation {msd}");
        }
    }
}
