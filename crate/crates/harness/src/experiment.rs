//! Replicate orchestration: shared pre-training, a worker pool over
//! replicates, per-replicate artifacts and a single-threaded reduce.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gbf::eval::{
    energy_distance, ks_one_sample, mean_diff, mmd2_gaussian, rmse_and_coverage,
    rmse_and_coverage_gaussian, std_diff, wasserstein1, AccuracyReport, Estimator, SampleSet,
    COVERAGE_LEVELS,
};
use gbf::filters::bootstrap::default_ess_threshold;
use gbf::filters::{
    abc_pf_run, bootstrap_pf_run, gibbs_lg, kalman_filter, systematic_resample, AbcConfig,
    GibbsLgConfig, ParticleSet,
};
use gbf::genfilter::{gen_filter_run, pretrain_summary_map, pretrained_filter_run, PretrainedMap, SummarySpec};
use gbf::gengibbs::{gengibbs_run, pretrain_gengibbs_maps, BankSpec, GibbsModel, GibbsRunConfig, MapBank};
use gbf::rng::{stream, SimRng};
use gbf::ssm::{simulate_trajectory, LinearGaussian, StateSpaceModel, StochasticVolatility};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AlgorithmConfig, ExperimentConfig, GenGibbsConfig, ModelConfig, Reference};
use crate::manifest::{list_files, sha256_hex, Manifest};
use crate::HarnessError;

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const DISTANCE_FILE: &str = "distances.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

/// Stream index offset for reference-filter randomness, so the reference
/// never shares draws with the method under test.
const REFERENCE_STREAM: u64 = 1 << 40;
/// Stream index for shared pre-training.
const PRETRAIN_STREAM: u64 = 1 << 41;
const DEFAULT_REFERENCE_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub wasserstein: f64,
    pub mmd: f64,
    pub energy: f64,
    pub mean_diff: f64,
    pub std_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    /// Whether the central interval at each of the coverage levels holds
    /// the truth.
    pub covered: Vec<bool>,
    /// Fraction of retained draws below the truth.
    pub truth_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplicateMetrics {
    Filter {
        replicate: usize,
        method: String,
        rmse: f64,
        coverage: Vec<(f64, f64)>,
        distance: Option<DistanceSummary>,
        warnings: usize,
    },
    Gibbs {
        replicate: usize,
        method: String,
        params: Vec<ParamSummary>,
        warnings: usize,
    },
}

impl ReplicateMetrics {
    pub fn replicate(&self) -> usize {
        match self {
            ReplicateMetrics::Filter { replicate, .. } | ReplicateMetrics::Gibbs { replicate, .. } => {
                *replicate
            }
        }
    }
}

/// Shared state computed once before the replicates.
pub enum Prepared {
    None,
    Map(PretrainedMap),
    Bank(MapBank),
}

pub struct ReplicateOutcome {
    pub replicate: usize,
    pub wall_seconds: f64,
    pub result: Result<ReplicateMetrics, String>,
}

pub struct RunSummary {
    pub out: PathBuf,
    pub outcomes: Vec<ReplicateOutcome>,
    pub manifest: Manifest,
}

impl RunSummary {
    pub fn failed(&self) -> Vec<usize> {
        self.manifest.failed_replicates.clone()
    }
}

pub fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

pub fn replicate_dir(out: &Path, r: usize) -> PathBuf {
    out.join("replicates").join(format!("rep_{r:04}"))
}

pub fn state_model(m: &ModelConfig) -> Result<Box<dyn StateSpaceModel>, HarnessError> {
    Ok(match m {
        ModelConfig::LinearGaussian { .. } => {
            let p = m.lg_params().ok_or_else(|| HarnessError::Config("invalid LG model".into()))?;
            Box::new(LinearGaussian::stationary(p)?)
        }
        ModelConfig::StochasticVolatility { .. } => {
            let p = m.sv_params().ok_or_else(|| HarnessError::Config("invalid SV model".into()))?;
            Box::new(StochasticVolatility::new(p)?)
        }
    })
}

fn resolve_bank_spec(cfg: &ExperimentConfig, g: &GenGibbsConfig) -> Result<BankSpec, HarnessError> {
    Ok(BankSpec {
        model: g.model,
        priors: g.prior_set()?,
        lag: g.lag,
        pad: g.pad,
        horizon: cfg.horizon,
        n_train: g.n_train,
        qnn: g.qnn.clone(),
        train: g.train.clone(),
        seed: cfg.seed.wrapping_add(PRETRAIN_STREAM),
    })
}

/// Loads the configured bank when its directory holds one trained under
/// the same `BankSpec`, otherwise trains it (and saves it there).
pub fn prepare_bank(cfg: &ExperimentConfig, g: &GenGibbsConfig, save_to: Option<&Path>) -> Result<MapBank, HarnessError> {
    let spec = resolve_bank_spec(cfg, g)?;
    let dir = g.bank_dir.as_deref().or(save_to);
    if let Some(dir) = g.bank_dir.as_deref() {
        if dir.join("manifest.json").exists() {
            let bank = MapBank::load(dir)?;
            let mut want = spec.clone();
            want.pad = bank.spec.pad.filter(|_| spec.pad.is_none()).or(spec.pad);
            if bank.spec != want {
                return Err(HarnessError::Config(format!(
                    "bank in {} was trained under different settings",
                    dir.display()
                )));
            }
            return Ok(bank);
        }
    }
    let bank = pretrain_gengibbs_maps(&spec)?;
    if let Some(dir) = dir {
        bank.save(dir)?;
    }
    Ok(bank)
}

pub fn prepare_map(
    cfg: &ExperimentConfig,
    p: &crate::config::PretrainedConfig,
    save_to: Option<&Path>,
) -> Result<PretrainedMap, HarnessError> {
    if let Some(dir) = p.map_dir.as_deref() {
        if dir.join("map.json").exists() {
            return Ok(PretrainedMap::load(dir)?);
        }
    }
    let model = state_model(&cfg.model)?;
    let spec = SummarySpec::LagWindow {
        lag: p.lag,
        pad: p.pad,
    };
    let mut rng = stream(cfg.seed, PRETRAIN_STREAM);
    let (map, _) = pretrain_summary_map(
        model.as_ref(),
        &spec,
        cfg.horizon.min(p.lag.max(1) * 5).max(p.lag + 1),
        p.n_train,
        &p.qnn,
        &p.train,
        &mut rng,
    )?;
    if let Some(dir) = p.map_dir.as_deref().or(save_to) {
        map.save(dir)?;
    }
    Ok(map)
}

pub fn prepare(cfg: &ExperimentConfig, out: &Path) -> Result<Prepared, HarnessError> {
    Ok(match &cfg.algorithm {
        AlgorithmConfig::Pretrained(p) => Prepared::Map(prepare_map(cfg, p, Some(&out.join("map")))?),
        AlgorithmConfig::GenGibbs(g) => Prepared::Bank(prepare_bank(cfg, g, Some(&out.join("bank")))?),
        _ => Prepared::None,
    })
}

/// Draws per `t` from a weighted cloud, resampled to equal weights.
fn equal_weight_draws(sets: &[ParticleSet], rng: &mut SimRng) -> Result<Vec<Vec<f64>>, HarnessError> {
    sets.iter()
        .map(|ps| Ok(systematic_resample(ps, rng)?.particles))
        .collect()
}

enum Posterior {
    Gaussian { means: Vec<f64>, vars: Vec<f64> },
    Draws(Vec<Vec<f64>>),
}

impl Posterior {
    fn accuracy(&self, truth: &[f64]) -> Result<AccuracyReport, HarnessError> {
        Ok(match self {
            Posterior::Gaussian { means, vars } => {
                rmse_and_coverage_gaussian(truth, means, vars, &COVERAGE_LEVELS)?
            }
            Posterior::Draws(d) => {
                let sets = d
                    .iter()
                    .map(|v| SampleSet::new(v.clone()))
                    .collect::<gbf::Result<Vec<_>>>()?;
                rmse_and_coverage(truth, &sets, &COVERAGE_LEVELS)?
            }
        })
    }

    fn draws(&self, n: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
        match self {
            Posterior::Draws(d) => d.clone(),
            Posterior::Gaussian { means, vars } => means
                .iter()
                .zip(vars)
                .map(|(m, v)| {
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(rng);
                            m + v.sqrt() * z
                        })
                        .collect()
                })
                .collect(),
        }
    }

    fn summary(&self, t: usize) -> (f64, f64, f64, f64) {
        match self {
            Posterior::Gaussian { means, vars } => {
                let sd = vars[t].sqrt();
                (means[t], sd, means[t] - 1.959964 * sd, means[t] + 1.959964 * sd)
            }
            Posterior::Draws(d) => {
                let s = SampleSet::new(d[t].clone()).expect("draws are finite");
                (s.mean(), s.sd(), s.quantile(0.025), s.quantile(0.975))
            }
        }
    }
}

fn kalman_posterior(cfg: &ExperimentConfig, y: &[f64]) -> Result<Posterior, HarnessError> {
    let p = cfg
        .model
        .lg_params()
        .ok_or_else(|| HarnessError::Config("Kalman filter needs a linear Gaussian model".into()))?;
    let tr = kalman_filter(y, &p, 0.0, p.stationary_var()?)?;
    Ok(Posterior::Gaussian {
        means: tr.m,
        vars: tr.c,
    })
}

fn distances(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DistanceSummary, HarnessError> {
    let n = a.len() as f64;
    let mut s = DistanceSummary {
        wasserstein: 0.0,
        mmd: 0.0,
        energy: 0.0,
        mean_diff: 0.0,
        std_diff: 0.0,
    };
    for (x, y) in a.iter().zip(b) {
        let (p, q) = (SampleSet::new(x.clone())?, SampleSet::new(y.clone())?);
        s.wasserstein += wasserstein1(&p, &q) / n;
        s.mmd += mmd2_gaussian(&p, &q, 1.0, Estimator::V)? / n;
        s.energy += energy_distance(&p, &q, Estimator::V)? / n;
        s.mean_diff += mean_diff(&p, &q) / n;
        s.std_diff += std_diff(&p, &q) / n;
    }
    Ok(s)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn run_filter_replicate(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    r: usize,
    dir: &Path,
) -> Result<ReplicateMetrics, HarnessError> {
    let model = state_model(&cfg.model)?;
    let mut rng = stream(cfg.seed, r as u64);
    let traj = simulate_trajectory(model.as_ref(), cfg.horizon, &mut rng)?;
    let y = &traj.observations;
    let mut warnings = 0;
    let post = match (&cfg.algorithm, prepared) {
        (AlgorithmConfig::Kalman {}, _) => kalman_posterior(cfg, y)?,
        (AlgorithmConfig::Pf { n_particles, ess_threshold }, _) => {
            let thr = ess_threshold.unwrap_or(default_ess_threshold(*n_particles));
            let sets = bootstrap_pf_run(model.as_ref(), y, *n_particles, thr, &mut rng)?;
            Posterior::Draws(equal_weight_draws(&sets, &mut rng)?)
        }
        (AlgorithmConfig::AbcPf { kernel, epsilon, n_particles }, _) => {
            let ac = AbcConfig::new(*kernel, *epsilon, *n_particles)?;
            let run = abc_pf_run(model.as_ref(), y, &ac, &mut rng)?;
            warnings = run.warnings.iter().filter(|w| w.collapsed).count();
            let mut f = std::fs::File::create(dir.join("abc_warnings.jsonl"))?;
            run.write_warnings(&mut f)?;
            Posterior::Draws(equal_weight_draws(&run.sets, &mut rng)?)
        }
        (AlgorithmConfig::GenFilter(gc), _) => {
            let out = gen_filter_run(model.as_ref(), y, gc, &mut rng)?;
            warnings = out.warnings.len();
            out.write_diagnostics_csv(dir.join("steps.csv"))?;
            Posterior::Draws(out.draws)
        }
        (AlgorithmConfig::Pretrained(p), Prepared::Map(map)) => {
            Posterior::Draws(pretrained_filter_run(map, y, p.n_post, &mut rng)?.draws)
        }
        _ => return Err(HarnessError::Config("algorithm/preparation mismatch".into())),
    };
    let truth = traj.filtered_states();
    let acc = post.accuracy(truth)?;

    let mut ref_rng = stream(cfg.seed, REFERENCE_STREAM + r as u64);
    let n_draws = match &post {
        Posterior::Draws(d) => d[0].len(),
        Posterior::Gaussian { .. } => DEFAULT_REFERENCE_DRAWS,
    };
    let distance = match cfg.reference {
        Reference::None {} => None,
        Reference::Kalman {} => {
            let reference = kalman_posterior(cfg, y)?.draws(n_draws, &mut ref_rng);
            Some(distances(&post.draws(n_draws, &mut ref_rng), &reference)?)
        }
        Reference::Pf { n_particles } => {
            let sets = bootstrap_pf_run(
                model.as_ref(),
                y,
                n_particles,
                default_ess_threshold(n_particles),
                &mut ref_rng,
            )?;
            let reference = equal_weight_draws(&sets, &mut ref_rng)?;
            Some(distances(&post.draws(n_draws, &mut ref_rng), &reference)?)
        }
    };

    let mut csv = String::from("t,y,x,mean,sd,lo95,hi95\n");
    for t in 0..y.len() {
        let (m, sd, lo, hi) = post.summary(t);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            t + 1,
            fmt(y[t]),
            fmt(truth[t]),
            fmt(m),
            fmt(sd),
            fmt(lo),
            fmt(hi)
        );
    }
    std::fs::write(dir.join("summary.csv"), csv)?;
    Ok(ReplicateMetrics::Filter {
        replicate: r,
        method: cfg.algorithm.method_name().into(),
        rmse: acc.rmse,
        coverage: acc.coverage,
        distance,
        warnings,
    })
}

/// True parameter vector of a Gen-Gibbs model implied by `[model]`.
pub fn truth_from_model(m: &ModelConfig, gm: &GibbsModel) -> Result<Vec<f64>, HarnessError> {
    let mismatch = || {
        HarnessError::Config(format!(
            "[model] {m:?} does not match the Gen-Gibbs model {gm:?}"
        ))
    };
    match (*m, *gm) {
        (ModelConfig::LinearGaussian { phi, sigma_x, sigma_y }, GibbsModel::LinearGaussian { phi: p })
            if phi == p =>
        {
            Ok(vec![sigma_x.powi(-2), sigma_y.powi(-2)])
        }
        (ModelConfig::StochasticVolatility { mu, phi, sigma_eta, .. }, GibbsModel::GaussianSv { .. }) => {
            Ok(vec![mu, phi, sigma_eta * sigma_eta])
        }
        (
            ModelConfig::StochasticVolatility { mu, phi, sigma_eta, alpha, beta },
            GibbsModel::StableSv { sigma_eta: s, .. },
        ) if sigma_eta == s => Ok(vec![mu, phi, alpha, beta]),
        _ => Err(mismatch()),
    }
}

fn param_summary(name: &str, truth: f64, draws: &[f64]) -> Result<ParamSummary, HarnessError> {
    let s = SampleSet::new(draws.to_vec())?;
    let covered = COVERAGE_LEVELS
        .iter()
        .map(|l| {
            let (lo, hi) = (s.quantile(0.5 * (1.0 - l)), s.quantile(0.5 * (1.0 + l)));
            lo <= truth && truth <= hi
        })
        .collect();
    Ok(ParamSummary {
        name: name.to_string(),
        truth,
        mean: s.mean(),
        sd: s.sd(),
        covered,
        truth_quantile: draws.iter().filter(|d| **d < truth).count() as f64 / draws.len() as f64,
    })
}

const MAX_PRIOR_DRAWS: usize = 100_000;

fn run_gibbs_replicate(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    r: usize,
    dir: &Path,
) -> Result<ReplicateMetrics, HarnessError> {
    let mut rng = stream(cfg.seed, r as u64);
    let (params, warnings) = match (&cfg.algorithm, prepared) {
        (AlgorithmConfig::GenGibbs(g), Prepared::Bank(bank)) => {
            let theta = if g.truth_from_prior {
                let priors = &bank.spec.priors;
                (0..MAX_PRIOR_DRAWS)
                    .map(|_| priors.sample(&mut rng))
                    .find(|th| g.model.admits(th))
                    .ok_or_else(|| HarnessError::Config("prior has no admitted mass".into()))?
            } else {
                truth_from_model(&cfg.model, &g.model)?
            };
            let (_, y) = g.model.simulate(&theta, cfg.horizon, &mut rng)?;
            let rc = GibbsRunConfig {
                n_iter: g.n_iter,
                burn_in: g.burn_in,
                init: None,
                store_states: false,
            };
            let chain = gengibbs_run(bank, &y, &rc, &mut rng)?;
            chain.write_csv(std::fs::File::create(dir.join("chain.csv"))?, &[])?;
            chain.write_diagnostics_json(std::fs::File::create(dir.join("chain_diagnostics.json"))?)?;
            let params = g
                .model
                .block_names()
                .iter()
                .enumerate()
                .map(|(b, n)| param_summary(n, theta[b], &chain.retained(b)))
                .collect::<Result<Vec<_>, _>>()?;
            (params, chain.warnings.len())
        }
        (AlgorithmConfig::GibbsLg(s), _) => {
            let model = state_model(&cfg.model)?;
            let traj = simulate_trajectory(model.as_ref(), cfg.horizon, &mut rng)?;
            let p = cfg.model.lg_params().expect("validated LG model");
            let mut gc = GibbsLgConfig::new(p.phi, s.a0, s.b0, s.n_iter, s.burn_in);
            gc.include_initial_term = s.include_initial_term;
            let chain = gibbs_lg(&traj.observations, &gc, &mut rng)?;
            let mut csv = String::from("iteration,psi_x,psi_y\n");
            for (i, (a, b)) in chain.psi_x.iter().zip(&chain.psi_y).enumerate() {
                let _ = writeln!(csv, "{},{},{}", i + 1, fmt(*a), fmt(*b));
            }
            std::fs::write(dir.join("chain.csv"), csv)?;
            let params = vec![
                param_summary("psi_x", p.psi_x(), chain.retained_psi_x())?,
                param_summary("psi_y", p.psi_y(), chain.retained_psi_y())?,
            ];
            (params, 0)
        }
        _ => return Err(HarnessError::Config("algorithm/preparation mismatch".into())),
    };
    Ok(ReplicateMetrics::Gibbs {
        replicate: r,
        method: cfg.algorithm.method_name().into(),
        params,
        warnings,
    })
}

/// Runs one replicate and writes its directory (including `metrics.json`).
pub fn run_replicate(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    r: usize,
    out: &Path,
) -> ReplicateOutcome {
    let start = Instant::now();
    let dir = replicate_dir(out, r);
    let result = std::fs::create_dir_all(&dir)
        .map_err(HarnessError::from)
        .and_then(|_| {
            if cfg.algorithm.is_filter() {
                run_filter_replicate(cfg, prepared, r, &dir)
            } else {
                run_gibbs_replicate(cfg, prepared, r, &dir)
            }
        })
        .and_then(|m| {
            std::fs::write(dir.join(METRICS_FILE), serde_json::to_vec_pretty(&m)?)?;
            Ok(m)
        })
        .map_err(|e| e.to_string());
    ReplicateOutcome {
        replicate: r,
        wall_seconds: start.elapsed().as_secs_f64(),
        result,
    }
}

/// Reads every replicate's `metrics.json` under `out`, in replicate order.
pub fn read_metrics(out: &Path) -> Result<Vec<ReplicateMetrics>, HarnessError> {
    let root = out.join("replicates");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(METRICS_FILE).exists())
        .collect();
    dirs.sort();
    dirs.iter()
        .map(|d| Ok(serde_json::from_slice(&std::fs::read(d.join(METRICS_FILE))?)?))
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Writes the aggregate tables for a set of replicate metrics; returns the
/// files written (relative to `out`).
pub fn write_aggregates(out: &Path, metrics: &[ReplicateMetrics]) -> Result<Vec<String>, HarnessError> {
    let mut written = Vec::new();
    let filters: Vec<_> = metrics
        .iter()
        .filter_map(|m| match m {
            ReplicateMetrics::Filter { method, rmse, coverage, distance, .. } => {
                Some((method, rmse, coverage, distance))
            }
            _ => None,
        })
        .collect();
    let gibbs: Vec<_> = metrics
        .iter()
        .filter_map(|m| match m {
            ReplicateMetrics::Gibbs { method, params, .. } => Some((method, params)),
            _ => None,
        })
        .collect();

    if !filters.is_empty() {
        let method = filters[0].0;
        let cov = |k: usize| mean(filters.iter().map(|f| f.2[k].1));
        let mut s = String::from("method,replicates,rmse,cov75,cov90,cov95\n");
        let _ = writeln!(
            s,
            "{method},{},{:.6},{:.6},{:.6},{:.6}",
            filters.len(),
            mean(filters.iter().map(|f| *f.1)),
            cov(0),
            cov(1),
            cov(2)
        );
        std::fs::write(out.join(AGGREGATE_FILE), s)?;
        written.push(AGGREGATE_FILE.to_string());
        let ds: Vec<&DistanceSummary> = filters.iter().filter_map(|f| f.3.as_ref()).collect();
        if !ds.is_empty() {
            let mut s = String::from("method,replicates,wasserstein,mmd,energy,mean_diff,std_diff\n");
            let _ = writeln!(
                s,
                "{method},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                ds.len(),
                mean(ds.iter().map(|d| d.wasserstein)),
                mean(ds.iter().map(|d| d.mmd)),
                mean(ds.iter().map(|d| d.energy)),
                mean(ds.iter().map(|d| d.mean_diff)),
                mean(ds.iter().map(|d| d.std_diff)),
            );
            std::fs::write(out.join(DISTANCE_FILE), s)?;
            written.push(DISTANCE_FILE.to_string());
        }
    }
    if !gibbs.is_empty() {
        let method = gibbs[0].0;
        let mut s = String::from(
            "method,param,replicates,truth_mean,posterior_mean,rmse,cov75,cov90,cov95,sbc_ks,sbc_p\n",
        );
        for (b, p0) in gibbs[0].1.iter().enumerate() {
            let ps: Vec<&ParamSummary> = gibbs.iter().map(|g| &g.1[b]).collect();
            let cov = |k: usize| mean(ps.iter().map(|p| if p.covered[k] { 1.0 } else { 0.0 }));
            let qs: Vec<f64> = ps.iter().map(|p| p.truth_quantile).collect();
            let ks = ks_one_sample(&qs, |u| u.clamp(0.0, 1.0));
            let _ = writeln!(
                s,
                "{method},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p0.name,
                ps.len(),
                mean(ps.iter().map(|p| p.truth)),
                mean(ps.iter().map(|p| p.mean)),
                mean(ps.iter().map(|p| (p.mean - p.truth).powi(2))).sqrt(),
                cov(0),
                cov(1),
                cov(2),
                ks.statistic,
                ks.p_value
            );
        }
        std::fs::write(out.join(AGGREGATE_FILE), s)?;
        written.push(AGGREGATE_FILE.to_string());
    }
    Ok(written)
}

#[derive(Serialize)]
struct DiagnosticLine<'a> {
    replicate: usize,
    status: &'a str,
    error: Option<&'a str>,
    warnings: usize,
}

fn write_diagnostics(out: &Path, outcomes: &[ReplicateOutcome]) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join(DIAGNOSTICS_FILE))?);
    for o in outcomes {
        let line = DiagnosticLine {
            replicate: o.replicate,
            status: if o.result.is_ok() { "ok" } else { "failed" },
            error: o.result.as_ref().err().map(|s| s.as_str()),
            warnings: match &o.result {
                Ok(ReplicateMetrics::Filter { warnings, .. } | ReplicateMetrics::Gibbs { warnings, .. }) => {
                    *warnings
                }
                Err(_) => 0,
            },
        };
        serde_json::to_writer(&mut f, &line)?;
        writeln!(f)?;
    }
    Ok(())
}

pub fn build_pool(threads: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot build worker pool: {e}")))
}

pub fn write_manifest(
    out: &Path,
    verb: &str,
    cfg: &ExperimentConfig,
    config_text: &str,
    threads: usize,
    wall_seconds: f64,
    outcomes: &[ReplicateOutcome],
) -> Result<Manifest, HarnessError> {
    let manifest = Manifest {
        tool: "gbf".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        verb: verb.into(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seed: cfg.seed,
        replicates: cfg.replicates,
        threads,
        wall_seconds,
        replicate_wall_seconds: outcomes.iter().map(|o| o.wall_seconds).collect(),
        failed_replicates: outcomes
            .iter()
            .filter(|o| o.result.is_err())
            .map(|o| o.replicate)
            .collect(),
        files: list_files(out)?,
    };
    manifest.write(out)?;
    Ok(manifest)
}

/// Runs every replicate of `cfg` and writes the run directory. Replicate
/// failures do not abort the run; they are listed in the manifest and the
/// diagnostics log and the remaining results are still aggregated.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    config_text: &str,
    verb: &str,
    threads: usize,
) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.toml"), config_text)?;
    let prepared = prepare(cfg, &out)?;
    let pool = build_pool(threads)?;
    let outcomes: Vec<ReplicateOutcome> = pool.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &prepared, r, &out))
            .collect()
    });
    let metrics: Vec<ReplicateMetrics> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().cloned())
        .collect();
    write_aggregates(&out, &metrics)?;
    write_diagnostics(&out, &outcomes)?;
    let manifest = write_manifest(
        &out,
        verb,
        cfg,
        config_text,
        pool.current_num_threads(),
        start.elapsed().as_secs_f64(),
        &outcomes,
    )?;
    Ok(RunSummary {
        out,
        outcomes,
        manifest,
    })
}

/// Simulates one trajectory per replicate (the same draws `filter` uses as
/// ground truth) and writes `replicates/rep_NNNN/trajectory.csv`.
pub fn run_simulate(cfg: &ExperimentConfig, config_text: &str) -> Result<Manifest, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.toml"), config_text)?;
    let model = state_model(&cfg.model)?;
    for r in 0..cfg.replicates {
        let mut rng = stream(cfg.seed, r as u64);
        let traj = simulate_trajectory(model.as_ref(), cfg.horizon, &mut rng)?;
        let dir = replicate_dir(&out, r);
        std::fs::create_dir_all(&dir)?;
        let f = std::io::BufWriter::new(std::fs::File::create(dir.join("trajectory.csv"))?);
        gbf::ssm::io::write_csv(f, std::slice::from_ref(&traj))?;
    }
    write_manifest(&out, "simulate", cfg, config_text, 1, start.elapsed().as_secs_f64(), &[])
}

/// Trains (or loads) the shared map or bank into the run directory.
pub fn run_pretrain(cfg: &ExperimentConfig, config_text: &str) -> Result<Manifest, HarnessError> {
    cfg.validate()?;
    if !matches!(cfg.algorithm, AlgorithmConfig::Pretrained(_) | AlgorithmConfig::GenGibbs(_)) {
        return Err(HarnessError::Config(format!(
            "`{}` has nothing to pre-train",
            cfg.algorithm.method_name()
        )));
    }
    let start = Instant::now();
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.toml"), config_text)?;
    prepare(cfg, &out)?;
    write_manifest(&out, "pretrain", cfg, config_text, 1, start.elapsed().as_secs_f64(), &[])
}

/// Rebuilds the aggregate tables of an existing run from its per-replicate
/// `metrics.json` files and refreshes the manifest's file list.
pub fn recompute_metrics(out: &Path) -> Result<Manifest, HarnessError> {
    let metrics = read_metrics(out)?;
    write_aggregates(out, &metrics)?;
    let mut manifest = Manifest::read(out)?;
    manifest.files = list_files(out)?;
    manifest.write(out)?;
    Ok(manifest)
}
