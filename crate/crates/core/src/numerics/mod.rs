//! Dense matrices, differentiable layers, SGD, and the finite-difference oracle.

pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod optim;

pub use gradcheck::{
    finite_diff_gradient, max_relative_error, relative_error, DEFAULT_STEP, RELATIVE_ERROR_FLOOR,
};
pub use layers::{
    NORM_EPSILON,
    dense_backward, dense_forward, l2_normalize_backward, l2_normalize_forward, Dense, L2Normalize,
    ParamTensor, Relu,
};
pub use matrix::{dot, log_sum_exp, norm, Matrix};
pub use optim::{sgd_step, Sgd, SgdConfig};
