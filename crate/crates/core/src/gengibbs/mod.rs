//! Joint state and parameter inference with learned full conditionals.
//!
//! A [`MapBank`] holds three kinds of quantile maps trained on draws from
//! prior × model: a filter map for the last state, a smoother map for
//! `x_t | x_{t+1}`, and one map per parameter block given the other blocks
//! and summaries of the latent path and data. [`gengibbs_run`] alternates a
//! backward state pass through the smoother with block updates, like FFBS
//! within Gibbs but without closed-form conditionals.

pub mod bank;
pub mod mh;
pub mod model;
pub mod sampler;
pub mod summaries;

pub use bank::{pretrain_gengibbs_maps, BankSpec, MapBank, MapInfo, MapRole, BANK_VERSION};
pub use mh::{mh_update_gamma_phi, mh_update_phi, MhHyper};
pub use model::{GibbsModel, TargetLink};
pub use sampler::{
    chain_ess, gengibbs_run, gengibbs_run_many, posterior_predictive_draws,
    posterior_predictive_with, ChainDiagnostics, GibbsChain, GibbsRunConfig, MhCount,
    PredictiveDraws,
};
pub use summaries::{
    obs_summaries, residual_summaries, standardized_residuals, state_summaries,
    ResidualSummaries,
};
