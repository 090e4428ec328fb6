//! Experiment configuration (TOML, versioned schema, unknown keys rejected).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gbf::filters::AbcKernel;
use gbf::genfilter::GenFilterConfig;
use gbf::gengibbs::GibbsModel;
use gbf::qnn::{QnnConfig, TrainConfig};
use gbf::ssm::{LGParams, Prior, PriorSet, SVParams, StableParams};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub horizon: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub algorithm: AlgorithmConfig,
    /// Distribution the filtering draws are compared against.
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub backtest: Option<BacktestConfig>,
}

fn default_seed() -> u64 {
    1
}

fn default_replicates() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LinearGaussian {
        phi: f64,
        sigma_x: f64,
        sigma_y: f64,
    },
    StochasticVolatility {
        mu: f64,
        phi: f64,
        sigma_eta: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        beta: f64,
    },
}

fn default_alpha() -> f64 {
    2.0
}

impl ModelConfig {
    pub fn lg_params(&self) -> Option<LGParams> {
        match *self {
            ModelConfig::LinearGaussian {
                phi,
                sigma_x,
                sigma_y,
            } => LGParams::new(phi, sigma_x, sigma_y).ok(),
            _ => None,
        }
    }

    pub fn sv_params(&self) -> Option<SVParams> {
        match *self {
            ModelConfig::StochasticVolatility {
                mu,
                phi,
                sigma_eta,
                alpha,
                beta,
            } => {
                let noise = StableParams::new(alpha, beta, 1.0, 0.0).ok()?;
                SVParams::new(mu, phi, sigma_eta, noise).ok()
            }
            _ => None,
        }
    }
}

// Empty-brace variants so `deny_unknown_fields` also applies to them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    None {},
    /// Exact Kalman posterior (linear Gaussian models only).
    Kalman {},
    /// Bootstrap particle filter with `n_particles` particles.
    Pf { n_particles: usize },
}

impl Default for Reference {
    fn default() -> Self {
        Reference::None {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Kalman {},
    Pf {
        n_particles: usize,
        #[serde(default)]
        ess_threshold: Option<f64>,
    },
    AbcPf {
        kernel: AbcKernel,
        epsilon: f64,
        n_particles: usize,
    },
    GenFilter(GenFilterConfig),
    Pretrained(PretrainedConfig),
    GenGibbs(GenGibbsConfig),
    GibbsLg(GibbsLgSettings),
}

impl AlgorithmConfig {
    pub fn method_name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Kalman {} => "kalman",
            AlgorithmConfig::Pf { .. } => "pf",
            AlgorithmConfig::AbcPf { .. } => "abc_pf",
            AlgorithmConfig::GenFilter(_) => "gen_filter",
            AlgorithmConfig::Pretrained(_) => "pretrained",
            AlgorithmConfig::GenGibbs(_) => "gen_gibbs",
            AlgorithmConfig::GibbsLg(_) => "gibbs_lg",
        }
    }

    pub fn is_filter(&self) -> bool {
        !matches!(self, AlgorithmConfig::GenGibbs(_) | AlgorithmConfig::GibbsLg(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainedConfig {
    pub lag: usize,
    pub n_train: usize,
    #[serde(default = "default_n_post")]
    pub n_post: usize,
    /// Pre-sample padding; absent means the simulated observation mean.
    #[serde(default)]
    pub pad: Option<f64>,
    #[serde(default)]
    pub qnn: QnnConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Reuse a saved map when present; otherwise train and save there.
    #[serde(default)]
    pub map_dir: Option<PathBuf>,
}

fn default_n_post() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenGibbsConfig {
    pub model: GibbsModel,
    /// Priors by block name; every block of the model must appear.
    pub priors: BTreeMap<String, Prior>,
    pub lag: usize,
    #[serde(default)]
    pub pad: Option<f64>,
    pub n_train: usize,
    #[serde(default)]
    pub qnn: QnnConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Reuse a saved bank when present; otherwise train and save there.
    #[serde(default)]
    pub bank_dir: Option<PathBuf>,
    pub n_iter: usize,
    pub burn_in: usize,
    /// Draw each replicate's truth from the prior (calibration runs)
    /// instead of deriving it from `[model]`.
    #[serde(default)]
    pub truth_from_prior: bool,
    /// Posterior-predictive draws per observation for backtests.
    #[serde(default = "default_n_post")]
    pub n_predictive: usize,
}

impl GenGibbsConfig {
    /// Priors in the model's block order.
    pub fn prior_set(&self) -> Result<PriorSet, HarnessError> {
        let names = self.model.block_names();
        if let Some(extra) = self.priors.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(HarnessError::Config(format!(
                "prior `{extra}` is not a block of the model (blocks: {names:?})"
            )));
        }
        let blocks = names
            .iter()
            .map(|n| {
                self.priors
                    .get(*n)
                    .map(|p| (n.to_string(), *p))
                    .ok_or_else(|| HarnessError::Config(format!("missing prior for block `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PriorSet::new(blocks)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsLgSettings {
    /// Gamma(shape `a0`, rate `b0`) prior on both precisions.
    pub a0: f64,
    pub b0: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    #[serde(default)]
    pub include_initial_term: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    pub returns_csv: PathBuf,
    pub price_column: String,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_lb_lags")]
    pub ljung_box_lags: usize,
}

fn default_levels() -> Vec<f64> {
    vec![0.01, 0.05]
}

fn default_lb_lags() -> usize {
    20
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_toml_str(&text)?, text))
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.replicates == 0 || self.horizon == 0 {
            return bad("replicates and horizon must be positive".into());
        }
        match self.model {
            ModelConfig::LinearGaussian { .. } if self.model.lg_params().is_none() => {
                return bad(format!("invalid linear Gaussian parameters {:?}", self.model));
            }
            ModelConfig::StochasticVolatility { .. } if self.model.sv_params().is_none() => {
                return bad(format!("invalid stochastic volatility parameters {:?}", self.model));
            }
            _ => {}
        }
        let lg = self.model.lg_params().is_some();
        match &self.algorithm {
            AlgorithmConfig::Kalman {} | AlgorithmConfig::GibbsLg(_) if !lg => {
                return bad(format!(
                    "`{}` needs a linear Gaussian model",
                    self.algorithm.method_name()
                ));
            }
            AlgorithmConfig::Pf { n_particles, .. } | AlgorithmConfig::AbcPf { n_particles, .. }
                if *n_particles == 0 =>
            {
                return bad("n_particles must be positive".into());
            }
            AlgorithmConfig::AbcPf { epsilon, .. } if !(*epsilon > 0.0) => {
                return bad("ABC tolerance must be positive".into());
            }
            AlgorithmConfig::GibbsLg(s) if s.burn_in > s.n_iter || !(s.a0 > 0.0 && s.b0 > 0.0) => {
                return bad("gibbs_lg needs burn_in <= n_iter and positive a0, b0".into());
            }
            AlgorithmConfig::GenGibbs(g) => {
                if g.burn_in > g.n_iter {
                    return bad("gen_gibbs burn_in exceeds n_iter".into());
                }
                g.prior_set()?;
                g.model
                    .check_priors(&g.prior_set()?)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
            }
            _ => {}
        }
        if matches!(self.reference, Reference::Kalman {}) && !lg {
            return bad("the Kalman reference needs a linear Gaussian model".into());
        }
        if let Some(b) = &self.backtest {
            if b.levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
                return bad("backtest levels must lie in (0, 1)".into());
            }
        }
        Ok(())
    }
}
