//! Classical baselines: Kalman filter, bootstrap and ABC particle filters,
//! forward-filtering backward-sampling and the conjugate Gibbs sampler for
//! the linear Gaussian model.

pub mod abc;
pub mod bootstrap;
pub mod ffbs;
pub mod kalman;
pub mod particles;

pub use abc::{abc_pf_run, AbcConfig, AbcKernel, AbcRun, CollapseWarning};
pub use bootstrap::{bootstrap_pf_run, bootstrap_pf_visit};
pub use ffbs::{ffbs_lg_draw, gibbs_lg, GibbsLgChain, GibbsLgConfig};
pub use kalman::{kalman_filter, KalmanTrace};
pub use particles::{effective_sample_size, systematic_resample, ParticleSet};
