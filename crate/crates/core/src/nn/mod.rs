//! Minimal differentiable function-approximation core.
//!
//! Dense networks with tanh hidden activations and identity outputs,
//! hand-rolled backpropagation, Adam optimization, exact multivariate
//! Gaussian algebra (log-density, entropy, KL) on Cholesky factors, and a
//! textual tensor store used by checkpoints.
//!
//! Everything is `f64`; gradient correctness is pinned by central
//! finite-difference tests.

mod adam;
mod dense;
pub(crate) mod gaussian;
mod init;
mod store;

pub use adam::AdamState;
pub use dense::{DenseNet, ForwardTrace, NetGrads, HIDDEN_GAIN, OUTPUT_GAIN};
pub use gaussian::{
    gaussian_entropy_of, kl_parts, softplus, softplus_inv, solve_lower, solve_lower_transpose,
    CholFactor, GaussianParams, KlParts,
};
pub use init::orthogonal;
pub use store::{TensorEntry, TensorStore};
