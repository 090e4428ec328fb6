//! Distribution distances, accuracy and coverage, risk backtests and
//! residual diagnostics.

pub mod accuracy;
pub mod diagnostics;
pub mod distances;
pub mod ks;
pub mod risk;
pub mod sample;
pub mod tables;

pub use accuracy::{
    rmse_and_coverage, rmse_and_coverage_gaussian, AccuracyReport, COVERAGE_LEVELS,
};
pub use diagnostics::{jarque_bera, ljung_box};
pub use distances::{energy_distance, mean_diff, mmd2_gaussian, std_diff, wasserstein1, Estimator};
pub use ks::{ks_one_sample, ks_two_sample, KsResult};
pub use risk::{backtest, christoffersen_tests, kupiec_lr, var_es_estimate, BacktestReport};
pub use sample::SampleSet;
