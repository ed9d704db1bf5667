//! Gaussian-process metamodels for expensive simulators and first-order Sobol
//! sensitivity indices computed from them.
//!
//! Two families of indices are produced from a fitted [`gp::FittedGp`]:
//!
//! * predictor-only indices, the Sobol indices of the conditional mean;
//! * global-model indices, where the Sobol definition is applied to the whole
//!   conditional process. The index is then a random variable: its mean and
//!   standard deviation have closed forms ([`sobol`]) and its distribution is
//!   simulated on a grid ([`effect`]) to give confidence intervals.
//!
//! Inputs are independent ([`inputs`]) and the correlation is a product of
//! one-dimensional kernels, so every integral reduces to one- and
//! two-dimensional quadratures tabulated once in [`integrals`].

pub mod bench;
pub mod effect;
pub mod error;
pub mod gp;
pub mod inputs;
pub mod integrals;
pub mod quadrature;
pub mod sobol;

pub use error::{Error, Result};
