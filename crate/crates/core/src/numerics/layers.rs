//! Hand-wired differentiable layers.
//!
//! Each layer caches what its backward pass needs during `forward`; calling
//! `backward` without a preceding `forward` is a state error. Parameter
//! gradients accumulate until [`ParamTensor::zero_grad`] is called.

use rand::Rng;

use super::matrix::{dot, norm, Matrix};
use crate::error::{Error, Result};

/// Rows with a norm below this are rejected by the normalizer.
pub const NORM_EPSILON: f64 = 1e-12;

/// A learnable value paired with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub value: Matrix,
    pub grad: Matrix,
}

impl ParamTensor {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

/// `input · W + b` with cached input.
pub fn dense_forward(input: &Matrix, weights: &ParamTensor, bias: &ParamTensor) -> Result<Matrix> {
    let (d_in, d_out) = weights.shape();
    if input.cols() != d_in {
        return Err(Error::config(format!(
            "dense layer expects {d_in} input columns, got {}",
            input.cols()
        )));
    }
    if bias.shape() != (1, d_out) {
        return Err(Error::config(format!(
            "dense bias must be 1x{d_out}, got {:?}",
            bias.shape()
        )));
    }
    let mut out = input.matmul(&weights.value)?;
    out.add_row_broadcast(&bias.value)?;
    Ok(out)
}

/// Accumulates `inputᵀ·upstream` into `W.grad` and column sums into `b.grad`;
/// returns `upstream·Wᵀ`.
pub fn dense_backward(
    input: &Matrix,
    upstream: &Matrix,
    weights: &mut ParamTensor,
    bias: &mut ParamTensor,
) -> Result<Matrix> {
    if upstream.rows() != input.rows() || upstream.cols() != weights.shape().1 {
        return Err(Error::shape(
            "dense_backward",
            format!(
                "upstream {:?} for input {:?} and weights {:?}",
                upstream.shape(),
                input.shape(),
                weights.shape()
            ),
        ));
    }
    weights.grad.add_assign(&input.matmul_tn(upstream)?)?;
    bias.grad.add_assign(&upstream.column_sums())?;
    upstream.matmul_nt(&weights.value)
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weights: ParamTensor,
    pub bias: ParamTensor,
    cached_input: Option<Matrix>,
}

impl Dense {
    pub fn from_params(weights: Matrix, bias: Matrix) -> Result<Self> {
        if bias.shape() != (1, weights.cols()) {
            return Err(Error::config(format!(
                "bias {:?} does not match weights {:?}",
                bias.shape(),
                weights.shape()
            )));
        }
        Ok(Self {
            weights: ParamTensor::new(weights),
            bias: ParamTensor::new(bias),
            cached_input: None,
        })
    }

    /// He-normal weights, zero bias.
    pub fn he_init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let std = (2.0 / d_in.max(1) as f64).sqrt();
        Self {
            weights: ParamTensor::new(Matrix::random_normal(d_in, d_out, std, rng)),
            bias: ParamTensor::new(Matrix::zeros(1, d_out)),
            cached_input: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.shape().0
    }

    pub fn output_dim(&self) -> usize {
        self.weights.shape().1
    }

    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let out = dense_forward(input, &self.weights, &self.bias)?;
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    /// Stateless forward; does not touch the cache.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        dense_forward(input, &self.weights, &self.bias)
    }

    pub fn backward(&mut self, upstream: &Matrix) -> Result<Matrix> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        dense_backward(input, upstream, &mut self.weights, &mut self.bias)
    }

    pub fn zero_grad(&mut self) {
        self.weights.zero_grad();
        self.bias.zero_grad();
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward(&mut self, input: &Matrix) -> Matrix {
        self.mask = Some(input.data().iter().map(|&v| v > 0.0).collect());
        Self::infer(input)
    }

    pub fn infer(input: &Matrix) -> Matrix {
        input.map(|v| v.max(0.0))
    }

    pub fn backward(&self, upstream: &Matrix) -> Result<Matrix> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::State("relu backward called before forward".into()))?;
        if mask.len() != upstream.len() {
            return Err(Error::shape(
                "relu_backward",
                format!("{} cached entries vs upstream {:?}", mask.len(), upstream.shape()),
            ));
        }
        let mut out = upstream.clone();
        for (g, &keep) in out.data_mut().iter_mut().zip(mask) {
            if !keep {
                *g = 0.0;
            }
        }
        Ok(out)
    }
}

/// Projects each row onto the unit sphere.
pub fn l2_normalize_forward(input: &Matrix) -> Result<Matrix> {
    let mut out = input.clone();
    for (i, row) in input.row_iter().enumerate() {
        let n = norm(row);
        if !(n >= NORM_EPSILON) {
            return Err(Error::Degenerate(format!(
                "row {i} has norm {n:e}, below {NORM_EPSILON:e}"
            )));
        }
        for (o, v) in out.row_mut(i).iter_mut().zip(row) {
            *o = v / n;
        }
    }
    Ok(out)
}

/// Per row: `(g − (g·z) z) / ‖r‖`, where `r` is the forward input and `z` its
/// normalized output.
pub fn l2_normalize_backward(input: &Matrix, output: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    if input.shape() != upstream.shape() || output.shape() != upstream.shape() {
        return Err(Error::shape(
            "l2_normalize_backward",
            format!("upstream {:?} vs input {:?}", upstream.shape(), input.shape()),
        ));
    }
    let mut out = Matrix::zeros(upstream.rows(), upstream.cols());
    for i in 0..upstream.rows() {
        let r_norm = norm(input.row(i));
        if !(r_norm >= NORM_EPSILON) {
            return Err(Error::Degenerate(format!(
                "row {i} has norm {r_norm:e}, below {NORM_EPSILON:e}"
            )));
        }
        let z = output.row(i);
        let g = upstream.row(i);
        let radial = dot(g, z);
        for ((o, &gv), &zv) in out.row_mut(i).iter_mut().zip(g).zip(z) {
            *o = (gv - radial * zv) / r_norm;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct L2Normalize {
    cache: Option<(Matrix, Matrix)>,
}

impl L2Normalize {
    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let out = l2_normalize_forward(input)?;
        self.cache = Some((input.clone(), out.clone()));
        Ok(out)
    }

    pub fn backward(&self, upstream: &Matrix) -> Result<Matrix> {
        let (input, output) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("l2 normalize backward called before forward".into()))?;
        l2_normalize_backward(input, output, upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_diff_gradient, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn dense_forward_examples() {
        let id = ParamTensor::new(m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let zero_b = ParamTensor::new(m(&[&[0.0, 0.0]]));
        let out = dense_forward(&m(&[&[1.0, 2.0]]), &id, &zero_b).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);

        let w = ParamTensor::new(m(&[&[7.0, -2.0], &[0.5, 9.0]]));
        let b = ParamTensor::new(m(&[&[3.0, -1.0]]));
        let out = dense_forward(&m(&[&[0.0, 0.0]]), &w, &b).unwrap();
        assert_eq!(out.data(), &[3.0, -1.0]);

        let w = ParamTensor::new(m(&[&[2.0, 0.0], &[0.0, 3.0]]));
        let b = ParamTensor::new(m(&[&[1.0, 1.0]]));
        let out = dense_forward(&m(&[&[1.0, 1.0]]), &w, &b).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
    }

    #[test]
    fn dense_shape_mismatch_is_config_error() {
        let mut layer = Dense::from_params(Matrix::zeros(3, 2), Matrix::zeros(1, 2)).unwrap();
        assert!(matches!(
            layer.forward(&Matrix::zeros(1, 4)),
            Err(Error::Config(_))
        ));
        assert!(Dense::from_params(Matrix::zeros(3, 2), Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn dense_backward_before_forward() {
        let mut layer = Dense::from_params(Matrix::zeros(1, 1), Matrix::zeros(1, 1)).unwrap();
        assert!(matches!(
            layer.backward(&Matrix::zeros(1, 1)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn dense_backward_scalar_chain_rule() {
        let mut layer = Dense::from_params(m(&[&[3.0]]), m(&[&[0.0]])).unwrap();
        layer.forward(&m(&[&[2.0]])).unwrap();
        let d_input = layer.backward(&m(&[&[1.0]])).unwrap();
        assert_eq!(layer.weights.grad.data(), &[2.0]);
        assert_eq!(layer.bias.grad.data(), &[1.0]);
        assert_eq!(d_input.data(), &[3.0]);
    }

    #[test]
    fn dense_backward_zero_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Dense::he_init(3, 4, &mut rng);
        let x = Matrix::random_normal(5, 3, 1.0, &mut rng);
        layer.forward(&x).unwrap();
        let d = layer.backward(&Matrix::zeros(5, 4)).unwrap();
        assert_eq!(d.max_abs(), 0.0);
        assert_eq!(layer.weights.grad.max_abs(), 0.0);
        assert_eq!(layer.bias.grad.max_abs(), 0.0);
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut layer = Dense::he_init(3, 4, &mut rng);
        let x = Matrix::random_normal(6, 3, 1.0, &mut rng);
        // Scalar objective: <upstream, output>.
        let upstream = Matrix::random_normal(6, 4, 1.0, &mut rng);
        let objective = |out: &Matrix| crate::numerics::matrix::dot(out.data(), upstream.data());

        layer.forward(&x).unwrap();
        let d_input = layer.backward(&upstream).unwrap();

        let w = layer.weights.value.clone();
        let b = layer.bias.value.clone();
        let fd_w = finite_diff_gradient(
            |wv| {
                let out = dense_forward(&x, &ParamTensor::new(wv.clone()), &ParamTensor::new(b.clone()));
                objective(&out.unwrap())
            },
            &w,
            1e-4,
        );
        let fd_b = finite_diff_gradient(
            |bv| {
                let out = dense_forward(&x, &ParamTensor::new(w.clone()), &ParamTensor::new(bv.clone()));
                objective(&out.unwrap())
            },
            &b,
            1e-4,
        );
        let fd_x = finite_diff_gradient(
            |xv| {
                let out = dense_forward(xv, &ParamTensor::new(w.clone()), &ParamTensor::new(b.clone()));
                objective(&out.unwrap())
            },
            &x,
            1e-4,
        );
        assert!(max_relative_error(&layer.weights.grad, &fd_w) <= 1e-6);
        assert!(max_relative_error(&layer.bias.grad, &fd_b) <= 1e-6);
        assert!(max_relative_error(&d_input, &fd_x) <= 1e-6);
    }

    #[test]
    fn l2_forward_examples() {
        let out = l2_normalize_forward(&m(&[&[3.0, 4.0]])).unwrap();
        assert!((out.get(0, 0) - 0.6).abs() < 1e-15 && (out.get(0, 1) - 0.8).abs() < 1e-15);
        let unit = m(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(l2_normalize_forward(&unit).unwrap(), unit);
        let out = l2_normalize_forward(&m(&[&[1.0, 1.0]])).unwrap();
        assert!((out.get(0, 0) - 0.7071).abs() < 1e-4);
        assert!((out.get(0, 1) - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn l2_forward_rejects_degenerate_rows() {
        let err = l2_normalize_forward(&m(&[&[1.0, 0.0], &[0.0, 1e-13]])).unwrap_err();
        assert!(matches!(err, Error::Degenerate(ref s) if s.contains("row 1")));
        assert!(l2_normalize_forward(&m(&[&[f64::NAN, 0.0]])).is_err());
    }

    #[test]
    fn l2_backward_examples() {
        let mut layer = L2Normalize::default();
        let r = m(&[&[3.0, 4.0]]);
        let z = layer.forward(&r).unwrap();
        // Radial upstream is projected away.
        let g = layer.backward(&z.scale(2.5)).unwrap();
        assert!(g.max_abs() < 1e-15);
        let g = layer.backward(&m(&[&[1.0, 0.0]])).unwrap();
        assert!((g.get(0, 0) - 0.128).abs() < 1e-15);
        assert!((g.get(0, 1) + 0.096).abs() < 1e-15);
    }

    #[test]
    fn l2_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = Matrix::random_normal(4, 8, 1.0, &mut rng);
        let upstream = Matrix::random_normal(4, 8, 1.0, &mut rng);
        let mut layer = L2Normalize::default();
        let z = layer.forward(&r).unwrap();
        let g = layer.backward(&upstream).unwrap();
        let fd = finite_diff_gradient(
            |rv| dot(l2_normalize_forward(rv).unwrap().data(), upstream.data()),
            &r,
            1e-4,
        );
        assert!(max_relative_error(&g, &fd) <= 1e-6);
        for i in 0..4 {
            assert!(dot(g.row(i), z.row(i)).abs() <= 1e-9);
        }
    }

    #[test]
    fn relu_backward_masks() {
        let mut relu = Relu::default();
        assert!(relu.backward(&Matrix::zeros(1, 2)).is_err());
        let out = relu.forward(&m(&[&[-1.0, 2.0]]));
        assert_eq!(out.data(), &[0.0, 2.0]);
        assert_eq!(relu.backward(&m(&[&[5.0, 5.0]])).unwrap().data(), &[0.0, 5.0]);
    }
}
