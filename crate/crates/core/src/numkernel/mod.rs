//! Dense numeric building blocks with hand-derived gradients.

pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod params;
pub mod sgd;

pub use gradcheck::{
    grad_check, grad_check_with_tolerance, relative_error, resolved_relative_error, GradCheckReport, TensorCheck,
};
pub use loss::{negative_entropy, softmax, softmax_cross_entropy, softmax_rows};
pub use matrix::{DenseMatrix, Real};
pub use mlp::{mlp_backward, mlp_forward, mlp_infer, Layer, MlpCache, MlpGrads, MlpParams};
pub use params::ParamSet;
pub use sgd::{sgd_step, SgdState};
