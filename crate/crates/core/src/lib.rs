//! Online maximum-likelihood quantum state tomography.
//!
//! The crate implements the Q-Soft-Bayes learner for the online tomography
//! game, its stochastic variant that computes maximum-likelihood estimates by
//! online-to-batch conversion, the classical Soft-Bayes learner it reduces to
//! on commuting data, and the experiment runner behind the `qsb` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod hermitian;
pub mod portfolio;
pub mod qsb;
pub mod random;
pub mod tomography;

pub use error::{Error, Result};
pub use hermitian::{DensityMatrix, HermitianMatrix, Tolerances};
pub use portfolio::{Portfolio, ReturnVector};
pub use qsb::{ObservationMatrix, QsbState};
pub use tomography::{Dataset, Povm};
