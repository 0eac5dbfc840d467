//! Regularized Stokeslet simulation with adjoint-based a posteriori error
//! decomposition into residual, explicit, quadrature and regularization parts.

// Range checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// `len` on the operator traits is a state dimension; emptiness is meaningless.
#![allow(clippy::len_without_is_empty)]

pub mod adjoint;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod forces;
pub mod integrate;
pub mod kernels;
pub mod quadrature;
pub mod scenarios;
pub mod vecops;

pub use error::{MrsError, Result};
