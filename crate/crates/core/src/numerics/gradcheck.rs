//! Central finite-difference oracle used to verify every hand-derived
//! gradient in the crate.

use super::matrix::Matrix;

/// Step used by the gradient checks throughout the crate.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Denominator floor for [`relative_error`], so entries that are
/// analytically zero are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate of `point`.
pub fn finite_diff_gradient<F>(mut loss_fn: F, point: &Matrix, h: f64) -> Matrix
where
    F: FnMut(&Matrix) -> f64,
{
    let mut probe = point.clone();
    let mut grad = Matrix::zeros(point.rows(), point.cols());
    for i in 0..point.len() {
        let orig = point.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = loss_fn(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = loss_fn(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Largest element-wise [`relative_error`]; infinite on a shape mismatch.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    if analytic.shape() != numeric.shape() {
        return f64::INFINITY;
    }
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Matrix::from_rows(&[[3.0]]).unwrap();
        let g = finite_diff_gradient(|m| m.get(0, 0).powi(2), &x, 1e-4);
        assert!((g.get(0, 0) - 6.0).abs() <= 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 4.0]]).unwrap();
        let g = finite_diff_gradient(|_| 42.0, &x, 1e-4);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn point_is_left_untouched() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let before = x.clone();
        let _ = finite_diff_gradient(|m| m.data().iter().sum(), &x, 1e-4);
        assert_eq!(x, before);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-9, 0.0) < 1e-2);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(
            max_relative_error(&Matrix::zeros(1, 2), &Matrix::zeros(2, 1)),
            f64::INFINITY
        );
    }
}
