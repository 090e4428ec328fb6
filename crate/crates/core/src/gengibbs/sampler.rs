//! The Gen-Gibbs sweep, its output chain and posterior-predictive draws.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bank::{push_window, MapBank};
use super::mh::mh_update_gamma_phi;
use super::model::GibbsModel;
use crate::rng::{open01, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsRunConfig {
    /// Total sweeps `M`, burn-in included.
    pub n_iter: usize,
    pub burn_in: usize,
    /// Starting parameters; `None` starts at the prior mean of every block.
    pub init: Option<Vec<f64>>,
    /// Keep `x_{0:T}` of every sweep.
    pub store_states: bool,
}

impl Default for GibbsRunConfig {
    fn default() -> Self {
        Self {
            n_iter: 1000,
            burn_in: 500,
            init: None,
            store_states: true,
        }
    }
}

/// MH bookkeeping for one block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MhCount {
    pub accepted: usize,
    pub proposed: usize,
}

impl MhCount {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsChain {
    pub block_names: Vec<String>,
    /// `θ⁽ⁱ⁾` for every sweep `i = 1..M`.
    pub theta: Vec<Vec<f64>>,
    /// `x_{0:T}⁽ⁱ⁾` for every sweep when requested.
    pub states: Vec<Vec<f64>>,
    pub burn_in: usize,
    /// MH counts of exactly updated blocks, after burn-in.
    pub mh: BTreeMap<String, MhCount>,
    /// Sweep anomalies (non-finite map outputs, degenerate summaries).
    pub warnings: Vec<String>,
}

impl GibbsChain {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn retained_len(&self) -> usize {
        self.len().saturating_sub(self.burn_in)
    }

    /// Post-burn-in draws of block `b`.
    pub fn retained(&self, b: usize) -> Vec<f64> {
        self.theta[self.burn_in.min(self.len())..]
            .iter()
            .map(|th| th[b])
            .collect()
    }

    pub fn retained_by_name(&self, name: &str) -> Option<Vec<f64>> {
        let b = self.block_names.iter().position(|n| n == name)?;
        Some(self.retained(b))
    }

    /// Post-burn-in draws of `x_t`.
    pub fn retained_states_at(&self, t: usize) -> Vec<f64> {
        self.states[self.burn_in.min(self.states.len())..]
            .iter()
            .map(|x| x[t])
            .collect()
    }

    /// One row per sweep: `iteration, <blocks>, x_<t> for t in snapshots`.
    pub fn write_csv<W: Write>(&self, mut w: W, snapshots: &[usize]) -> Result<()> {
        let with_states = !self.states.is_empty();
        if with_states {
            if let Some(&t) = snapshots.iter().find(|&&t| t >= self.states[0].len()) {
                return Err(Error::domain(format!("snapshot time {t} beyond the path")));
            }
        }
        write!(w, "iteration")?;
        for n in &self.block_names {
            write!(w, ",{n}")?;
        }
        if with_states {
            for t in snapshots {
                write!(w, ",x_{t}")?;
            }
        }
        writeln!(w)?;
        for (i, th) in self.theta.iter().enumerate() {
            write!(w, "{}", i + 1)?;
            for v in th {
                write!(w, ",{v}")?;
            }
            if with_states {
                for &t in snapshots {
                    write!(w, ",{}", self.states[i][t])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn diagnostics(&self) -> ChainDiagnostics {
        let ess = self
            .block_names
            .iter()
            .enumerate()
            .map(|(b, n)| (n.clone(), chain_ess(&self.retained(b))))
            .collect();
        let acceptance_rates = self.mh.iter().map(|(k, c)| (k.clone(), c.rate())).collect();
        ChainDiagnostics {
            n_iter: self.len(),
            burn_in: self.burn_in,
            acceptance_rates,
            ess,
            n_warnings: self.warnings.len(),
        }
    }

    pub fn write_diagnostics_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.diagnostics())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub n_iter: usize,
    pub burn_in: usize,
    pub acceptance_rates: BTreeMap<String, f64>,
    pub ess: BTreeMap<String, f64>,
    pub n_warnings: usize,
}

/// Effective sample size with Geyer's initial monotone sequence estimator.
pub fn chain_ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0 = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return n as f64;
    }
    let rho = |k: usize| d[k..].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(k) + rho(k + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

struct ChainState<'a> {
    y: &'a [f64],
    /// `S_y(y_{1:t})` for `t = 0..=T`, flattened.
    windows: Vec<f64>,
    theta: Vec<f64>,
    x: Vec<f64>,
    chain: GibbsChain,
}

/// Runs one Gen-Gibbs chain on `y` with the maps in `bank`.
pub fn gengibbs_run(
    bank: &MapBank,
    y: &[f64],
    cfg: &GibbsRunConfig,
    rng: &mut SimRng,
) -> Result<GibbsChain> {
    Ok(gengibbs_run_many(bank, &[y], cfg, std::slice::from_mut(rng))?
        .pop()
        .expect("one chain"))
}

/// Runs independent chains in lockstep, one per series and generator, so
/// every map evaluation is batched across chains. Chain `k` only consumes
/// `rngs[k]`.
pub fn gengibbs_run_many(
    bank: &MapBank,
    ys: &[&[f64]],
    cfg: &GibbsRunConfig,
    rngs: &mut [SimRng],
) -> Result<Vec<GibbsChain>> {
    let spec = &bank.spec;
    let model = spec.model;
    let horizon = spec.horizon;
    if ys.len() != rngs.len() {
        return Err(Error::Interface(format!(
            "{} series but {} generators",
            ys.len(),
            rngs.len()
        )));
    }
    if cfg.burn_in > cfg.n_iter {
        return Err(Error::domain("burn-in exceeds iteration count"));
    }
    for y in ys {
        if y.len() != horizon {
            return Err(Error::Interface(format!(
                "bank was trained for T = {horizon}, series has length {}",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("observations must be finite"));
        }
    }
    let init = match &cfg.init {
        Some(th) => {
            if !spec.priors.in_support(th) {
                return Err(Error::domain(format!(
                    "initial parameters {th:?} outside the prior support"
                )));
            }
            th.clone()
        }
        None => spec.priors.mean(),
    };
    let nb = model.n_blocks();
    let names: Vec<String> = model.block_names().iter().map(|s| s.to_string()).collect();
    let wdim = spec.window_dim();
    let pad = bank.pad();
    let filter = bank.filter_map()?;
    let smoother = bank.smoother_map()?;
    let learned = model.learned_blocks();
    let params = learned
        .iter()
        .map(|&b| bank.param_map(b))
        .collect::<Result<Vec<_>>>()?;
    let mh_hyper = match model {
        GibbsModel::StableSv { .. } => Some(model.mh_hyper(&spec.priors)?),
        _ => None,
    };

    let mut chains: Vec<ChainState> = ys
        .iter()
        .map(|y| {
            let mut windows = Vec::with_capacity((horizon + 1) * wdim);
            for t in 0..=horizon {
                push_window(&mut windows, y, t, spec.lag, pad);
            }
            let mut mh = BTreeMap::new();
            if mh_hyper.is_some() {
                mh.insert("phi".to_string(), MhCount::default());
            }
            ChainState {
                y,
                windows,
                theta: init.clone(),
                x: vec![0.0; horizon + 1],
                chain: GibbsChain {
                    block_names: names.clone(),
                    theta: Vec::with_capacity(cfg.n_iter),
                    states: Vec::new(),
                    burn_in: cfg.burn_in,
                    mh,
                    warnings: Vec::new(),
                },
            }
        })
        .collect();
    let k = chains.len();
    let mut us = vec![0.0; k];
    let mut feats = Vec::new();

    for iter in 1..=cfg.n_iter {
        // x_T from the filter map.
        feats.clear();
        for (c, u) in chains.iter().zip(us.iter_mut().zip(rngs.iter_mut())) {
            feats.extend_from_slice(&c.windows[horizon * wdim..]);
            feats.extend_from_slice(&c.theta);
            *u.0 = open01(u.1);
        }
        let out = filter.forward_batch(&feats, &us)?;
        for (c, v) in chains.iter_mut().zip(out) {
            set_state(c, horizon, v, iter);
        }
        // Backward pass through the smoother map.
        for t in (0..horizon).rev() {
            feats.clear();
            for (c, u) in chains.iter().zip(us.iter_mut().zip(rngs.iter_mut())) {
                feats.push(c.x[t + 1]);
                feats.extend_from_slice(&c.windows[t * wdim..(t + 1) * wdim]);
                feats.extend_from_slice(&c.theta);
                *u.0 = open01(u.1);
            }
            let out = smoother.forward_batch(&feats, &us)?;
            for (c, v) in chains.iter_mut().zip(out) {
                set_state(c, t, v, iter);
            }
        }
        // Exact (μ, φ) update on the unit-innovation scale.
        if let (Some(h), GibbsModel::StableSv { sigma_eta, .. }) = (&mh_hyper, model) {
            for (c, rng) in chains.iter_mut().zip(rngs.iter_mut()) {
                let xt: Vec<f64> = c.x.iter().map(|v| v / sigma_eta).collect();
                let current = (c.theta[0] / sigma_eta, c.theta[1]);
                let ((g, phi), accepted) = mh_update_gamma_phi(&xt, current, h, rng)?;
                c.theta[0] = g * sigma_eta;
                c.theta[1] = phi;
                if iter > cfg.burn_in {
                    let e = c.chain.mh.get_mut("phi").expect("registered");
                    e.proposed += 1;
                    e.accepted += accepted as usize;
                }
            }
        }
        // Learned blocks in fixed order.
        for (&b, (net, link)) in learned.iter().zip(&params) {
            let cond = model.conditioning_blocks(b);
            let prior = spec.priors.blocks[b].1;
            feats.clear();
            let mut ok = vec![true; k];
            for (j, (c, rng)) in chains.iter_mut().zip(rngs.iter_mut()).enumerate() {
                us[j] = open01(rng);
                let start = feats.len();
                feats.extend(cond.iter().map(|&i| c.theta[i]));
                match model.block_summary(b, &c.x, c.y) {
                    Ok(s) => feats.extend(s),
                    Err(e) => {
                        let msg = format!("sweep {iter}: block `{}` kept: {e}", names[b]);
                        log::warn!("{msg}");
                        c.chain.warnings.push(msg);
                        ok[j] = false;
                        feats.truncate(start);
                        feats.extend(std::iter::repeat_n(0.0, net.feature_dim()));
                    }
                }
            }
            let out = net.forward_batch(&feats, &us)?;
            for ((c, z), ok) in chains.iter_mut().zip(out).zip(ok) {
                if !ok {
                    continue;
                }
                if let crate::ssm::Prior::PointMass { value } = prior {
                    c.theta[b] = value;
                    continue;
                }
                let v = link.inverse(z);
                if prior.in_support(v) {
                    c.theta[b] = v;
                } else {
                    let msg = format!(
                        "sweep {iter}: block `{}` draw {v} outside the prior support, kept",
                        names[b]
                    );
                    log::warn!("{msg}");
                    c.chain.warnings.push(msg);
                }
            }
        }
        for c in chains.iter_mut() {
            c.chain.theta.push(c.theta.clone());
            if cfg.store_states {
                c.chain.states.push(c.x.clone());
            }
        }
    }
    debug_assert!(chains.iter().all(|c| c.chain.theta.iter().all(|t| t.len() == nb)));
    Ok(chains.into_iter().map(|c| c.chain).collect())
}

fn set_state(c: &mut ChainState, t: usize, v: f64, iter: usize) {
    if v.is_finite() {
        c.x[t] = v;
    } else {
        let msg = format!("sweep {iter}: non-finite draw of x_{t}, previous value kept");
        log::warn!("{msg}");
        c.chain.warnings.push(msg);
    }
}

/// Per-time-step sample matrix: `draws[t - 1]` holds the draws for `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDraws {
    pub draws: Vec<Vec<f64>>,
}

impl PredictiveDraws {
    pub fn horizon(&self) -> usize {
        self.draws.len()
    }

    pub fn means(&self) -> Vec<f64> {
        self.draws
            .iter()
            .map(|d| d.iter().sum::<f64>() / d.len().max(1) as f64)
            .collect()
    }

    /// Long format `t,draw_index,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,draw_index,y")?;
        for (t, d) in self.draws.iter().enumerate() {
            for (i, v) in d.iter().enumerate() {
                writeln!(w, "{},{i},{v}", t + 1)?;
            }
        }
        Ok(())
    }
}

/// Post-burn-in sweeps used for `n_draws` predictive draws, evenly spaced.
pub fn predictive_iterations(chain: &GibbsChain, n_draws: usize) -> Result<Vec<usize>> {
    let r = chain.retained_len();
    if chain.states.len() != chain.len() {
        return Err(Error::Interface(
            "posterior predictive draws need stored state paths".into(),
        ));
    }
    if n_draws > r {
        return Err(Error::InsufficientData(format!(
            "{n_draws} predictive draws requested from {r} retained sweeps"
        )));
    }
    Ok((0..n_draws)
        .map(|j| chain.burn_in + j * r / n_draws.max(1))
        .collect())
}

/// `ỹ_t ~ emit(θ⁽ⁱ⁾, x_t⁽ⁱ⁾)` for `t = 1..T` and each selected sweep `i`.
pub fn posterior_predictive_with<F>(
    chain: &GibbsChain,
    n_draws: usize,
    mut emit: F,
    rng: &mut SimRng,
) -> Result<PredictiveDraws>
where
    F: FnMut(&[f64], f64, &mut SimRng) -> Result<f64>,
{
    let iters = predictive_iterations(chain, n_draws)?;
    let horizon = chain.states.first().map_or(0, |x| x.len().saturating_sub(1));
    let mut draws = vec![Vec::with_capacity(n_draws); horizon];
    for &i in &iters {
        let (theta, x) = (&chain.theta[i], &chain.states[i]);
        for (t, d) in draws.iter_mut().enumerate() {
            d.push(emit(theta, x[t + 1], rng)?);
        }
    }
    Ok(PredictiveDraws { draws })
}

/// Posterior-predictive draws under the bank's model.
pub fn posterior_predictive_draws(
    chain: &GibbsChain,
    model: &GibbsModel,
    y: &[f64],
    n_draws: usize,
    rng: &mut SimRng,
) -> Result<PredictiveDraws> {
    if let Some(x) = chain.states.first() {
        if x.len() != y.len() + 1 {
            return Err(Error::Interface(format!(
                "chain paths have {} states for {} observations",
                x.len(),
                y.len()
            )));
        }
    }
    posterior_predictive_with(chain, n_draws, |th, x, r| model.emit(th, x, r), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ess_of_iid_and_ar1() {
        let mut rng = crate::rng::seeded(3);
        let iid: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = chain_ess(&iid);
        assert!((e / 20_000.0 - 1.0).abs() < 0.1, "{e}");
        let mut ar = vec![0.0; 20_000];
        for t in 1..ar.len() {
            let z: f64 = StandardNormal.sample(&mut rng);
            ar[t] = 0.9 * ar[t - 1] + z;
        }
        // τ = (1 + φ)/(1 - φ) = 19
        let e = chain_ess(&ar);
        assert!((e - 20_000.0 / 19.0).abs() < 0.25 * 20_000.0 / 19.0, "{e}");
    }

    #[test]
    fn predictive_needs_enough_sweeps() {
        let chain = GibbsChain {
            block_names: vec!["a".into()],
            theta: vec![vec![1.0]; 4],
            states: vec![vec![0.0, 1.0]; 4],
            burn_in: 2,
            mh: BTreeMap::new(),
            warnings: Vec::new(),
        };
        assert!(predictive_iterations(&chain, 3).is_err());
        assert_eq!(predictive_iterations(&chain, 2).unwrap(), vec![2, 3]);
    }
}
