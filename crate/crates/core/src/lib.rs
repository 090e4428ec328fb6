//! Generative Bayesian filtering for scalar state-space models.
//!
//! The crate learns inverse-CDF (quantile) maps `H(features, u)` with small
//! implicit quantile networks and uses them for sequential filtering
//! ([`genfilter`]) and for Gibbs-style joint state/parameter inference whose
//! full conditionals are only available through simulation ([`gengibbs`]).
//! Exact and particle baselines live in [`filters`], model definitions and
//! α-stable noise in [`ssm`], and distances, coverage and backtests in
//! [`eval`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod filters;
pub mod genfilter;
pub mod gengibbs;
pub mod qnn;
pub mod rng;
pub mod ssm;
mod util;

pub use error::{Error, Result};
pub use rng::SimRng;
