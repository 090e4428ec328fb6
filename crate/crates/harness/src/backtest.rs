//! Risk backtest of Gen-Gibbs posterior-predictive draws on a returns series.

use std::fmt::Write as _;
use std::time::Instant;

use gbf::eval::{backtest, jarque_bera, ljung_box, BacktestReport, SampleSet};
use gbf::gengibbs::{gengibbs_run, posterior_predictive_draws, GibbsRunConfig};
use gbf::rng::stream;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::{AlgorithmConfig, ExperimentConfig};
use crate::experiment::{out_dir, prepare_bank, write_manifest};
use crate::ingest::load_returns_csv;
use crate::manifest::Manifest;
use crate::HarnessError;

pub const BACKTEST_FILE: &str = "backtest.csv";
pub const RESIDUAL_FILE: &str = "residual_tests.json";

/// Tests on the standardized one-step residuals `(y_t - mean_t) / sd_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTests {
    pub ljung_box_lags: usize,
    pub ljung_box: f64,
    pub ljung_box_p: f64,
    pub jarque_bera: f64,
    pub jarque_bera_p: f64,
}

pub struct BacktestSummary {
    pub reports: Vec<BacktestReport>,
    pub residuals: ResidualTests,
    pub manifest: Manifest,
}

fn upper_tail(stat: f64, dof: usize) -> f64 {
    1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat)
}

/// Fits the configured Gen-Gibbs model to the `[backtest]` returns, draws
/// from the posterior predictive and backtests VaR/ES at every level.
pub fn run_backtest(cfg: &ExperimentConfig, config_text: &str) -> Result<BacktestSummary, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let (bt, g) = match (&cfg.backtest, &cfg.algorithm) {
        (Some(bt), AlgorithmConfig::GenGibbs(g)) => (bt, g),
        (None, _) => return Err(HarnessError::Config("backtest needs a [backtest] section".into())),
        _ => return Err(HarnessError::Config("backtest needs the gen_gibbs algorithm".into())),
    };
    let series = load_returns_csv(&bt.returns_csv, &bt.price_column)?;
    if series.len() != cfg.horizon {
        return Err(HarnessError::Config(format!(
            "horizon = {} but {} has {} returns",
            cfg.horizon,
            bt.returns_csv.display(),
            series.len()
        )));
    }
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.toml"), config_text)?;
    let bank = prepare_bank(cfg, g, Some(&out.join("bank")))?;

    let mut rng = stream(cfg.seed, 0);
    let rc = GibbsRunConfig {
        n_iter: g.n_iter,
        burn_in: g.burn_in,
        init: None,
        store_states: true,
    };
    let chain = gengibbs_run(&bank, &series.returns, &rc, &mut rng)?;
    chain.write_csv(std::fs::File::create(out.join("chain.csv"))?, &[])?;
    let pred = posterior_predictive_draws(&chain, &g.model, &series.returns, g.n_predictive, &mut rng)?;

    let reports = bt
        .levels
        .iter()
        .map(|q| backtest(&series.returns, &pred.draws, *q))
        .collect::<gbf::Result<Vec<_>>>()?;
    let mut csv = String::from("level,trials,breaches,hit_rate,lr_uc,p_uc,lr_ind,p_ind,lr_cc,p_cc,average_es\n");
    for r in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.level,
            series.len(),
            r.breach_times.len(),
            r.hit_rate,
            r.lr_uc,
            r.p_uc,
            r.lr_ind,
            r.p_ind,
            r.lr_cc,
            r.p_cc,
            r.average_es
        );
    }
    std::fs::write(out.join(BACKTEST_FILE), csv)?;

    let mut summary = String::from("date,y,mean,sd\n");
    let mut z = Vec::with_capacity(series.len());
    for ((d, y), draws) in series.dates.iter().zip(&series.returns).zip(&pred.draws) {
        let s = SampleSet::new(draws.clone())?;
        let _ = writeln!(summary, "{d},{y},{},{}", s.mean(), s.sd());
        z.push((y - s.mean()) / s.sd().max(f64::MIN_POSITIVE));
    }
    std::fs::write(out.join("predictive_summary.csv"), summary)?;
    let lb = ljung_box(&z, bt.ljung_box_lags)?;
    let jb = jarque_bera(&z)?;
    let residuals = ResidualTests {
        ljung_box_lags: bt.ljung_box_lags,
        ljung_box: lb,
        ljung_box_p: upper_tail(lb, bt.ljung_box_lags),
        jarque_bera: jb,
        jarque_bera_p: upper_tail(jb, 2),
    };
    std::fs::write(out.join(RESIDUAL_FILE), serde_json::to_vec_pretty(&residuals)?)?;

    let manifest = write_manifest(&out, "backtest", cfg, config_text, 1, start.elapsed().as_secs_f64(), &[])?;
    Ok(BacktestSummary {
        reports,
        residuals,
        manifest,
    })
}
