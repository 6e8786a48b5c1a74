//! Dense kernels with analytic backward passes.
//!
//! There is no tape: every kernel is a pair of functions, a forward that
//! returns whatever the backward needs, and a backward that maps the output
//! gradient onto input and parameter gradients. Layers in [`crate::gconv`]
//! and [`crate::models`] chain these by hand.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod kernels;
mod loss;
mod matrix;

pub(crate) use matrix::matmul_into;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error};
pub use kernels::{
    activation, activation_backward, affine, affine_backward, concat_cols, concat_cols_backward,
    gather_rows, gather_rows_backward, scatter_reduce, scatter_reduce_backward, sigmoid,
    Activation, AffineGrads, ReduceMode, ScatterAux,
};
pub use loss::{smooth_l1, softmax_cross_entropy};
pub use matrix::{Matrix, Parameter, Tensor};

/// Accumulation precision used by every kernel.
pub type Real = f64;
