use gbf::eval::ks_two_sample;
use gbf::filters::{ffbs_lg_draw, kalman_filter};
use gbf::gengibbs::mh::{ln_initial_density, mh_update_phi};
use gbf::gengibbs::*;
use gbf::qnn::{QnnConfig, TrainConfig};
use gbf::rng::{seeded, SimRng};
use gbf::ssm::stable::sample_stable_unchecked;
use gbf::ssm::{LGParams, Prior, PriorSet, StableParams};
use gbf::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

fn normals(n: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn ar1(n: usize, phi: f64, sigma: f64, rng: &mut SimRng) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let z: f64 = StandardNormal.sample(rng);
    x[0] = sigma / (1.0 - phi * phi).sqrt() * z;
    for t in 1..n {
        let z: f64 = StandardNormal.sample(rng);
        x[t] = phi * x[t - 1] + sigma * z;
    }
    x
}

#[test]
fn white_noise_autocovariance_vanishes() {
    let y = normals(10_000, &mut seeded(1));
    let s = obs_summaries(&y).unwrap();
    assert_eq!(s.len(), 10);
    assert!(s[2].abs() < 0.03, "gamma_1 {}", s[2]);
    assert!((s[7]).abs() < 0.05, "median {}", s[7]);
    assert!((s[9] - 1.6449).abs() < 0.06, "q95 {}", s[9]);
}

#[test]
fn ar1_autocorrelation_recovered() {
    let y = ar1(10_000, 0.9, 1.0, &mut seeded(2));
    let s = obs_summaries(&y).unwrap();
    assert!((s[2] / s[1] - 0.9).abs() < 0.05, "{}", s[2] / s[1]);
    // γ₃/γ₀ = φ³
    assert!((s[3] / s[1] - 0.729).abs() < 0.06);
}

#[test]
fn noiseless_ar1_path_gives_exact_coefficient() {
    let phi = 0.9;
    let mut x = vec![1.0];
    for t in 1..100_000 {
        x.push(phi * x[t - 1]);
    }
    let s = state_summaries(&x).unwrap();
    assert!((s[1] - phi).abs() < 1e-8, "{}", s[1]);
    // Demeaning leaves the residual (φ - 1)(x̄ - 0) at every step.
    let want = ((1.0 - phi) * s[0]).powi(2);
    assert!((s[2] / want - 1.0).abs() < 1e-3, "{} vs {want}", s[2]);
}

#[test]
fn state_summaries_consistent_on_persistent_path() {
    let (phi, sigma, n) = (0.98, 0.1, 10_000);
    let x = ar1(n, phi, sigma, &mut seeded(3));
    let s = state_summaries(&x).unwrap();
    assert!((s[1] - phi).abs() < 0.01, "phi_hat {}", s[1]);
    assert!((s[2] / (sigma * sigma) - 1.0).abs() < 0.05, "{}", s[2]);
    // Long-run standard deviation of the mean of an AR(1) path.
    let sd_mean = sigma / ((1.0 - phi) * (n as f64).sqrt());
    assert!(s[0].abs() < 3.0 * sd_mean, "mean {} vs {sd_mean}", s[0]);
}

fn stable_sample(alpha: f64, beta: f64, n: usize, seed: u64) -> Vec<f64> {
    let p = StableParams::new(alpha, beta, 1.0, 0.0).unwrap();
    let mut rng = seeded(seed);
    (0..n).map(|_| sample_stable_unchecked(&p, &mut rng)).collect()
}

#[test]
fn symmetric_residuals_have_no_skew() {
    let r = residual_summaries(&stable_sample(1.5, 0.0, 10_000, 4)).unwrap();
    assert!(r.quantile_asymmetry.abs() < 0.05, "{r:?}");
    assert!((r.sign_imbalance - 0.5).abs() < 0.02, "{r:?}");
    assert!(r.extreme_quantile_skew.abs() < 0.1, "{r:?}");
    assert!((r.tail_ratio - 1.0).abs() < 0.1, "{r:?}");
}

#[test]
fn hill_index_separates_light_and_cauchy_tails() {
    let g = residual_summaries(&normals(10_000, &mut seeded(5))).unwrap();
    assert!(g.hill_tail_index > 3.0, "{g:?}");
    let c = residual_summaries(&stable_sample(1.0, 0.0, 10_000, 6)).unwrap();
    assert!((c.hill_tail_index - 1.0).abs() < 0.15, "{c:?}");
    // Heavier tails: larger outer/inner ratio, flatter ECF decay.
    assert!(c.outer_inner_spread_ratio > g.outer_inner_spread_ratio);
    assert!(c.ecf_slope < g.ecf_slope);
}

#[test]
fn skewed_residuals_move_beta_statistics() {
    let pos = residual_summaries(&stable_sample(1.5, 0.9, 5_000, 7)).unwrap();
    let neg = residual_summaries(&stable_sample(1.5, -0.9, 5_000, 8)).unwrap();
    assert!(pos.quantile_asymmetry > 0.0 && neg.quantile_asymmetry < 0.0);
    assert!(pos.tail_ratio > 1.0 && neg.tail_ratio < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_summaries_are_permutation_invariant(
        v in prop::collection::vec(-50.0f64..50.0, 50..200),
        seed in 0u64..1000,
    ) {
        let mut w = v.clone();
        w.shuffle(&mut seeded(seed));
        match (residual_summaries(&v), residual_summaries(&w)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((0.0..=1.0).contains(&a.sign_imbalance));
                prop_assert!(a.tail_ratio > 0.0);
                prop_assert!((-1.0..=1.0).contains(&a.quantile_asymmetry));
                let (xa, xb) = (
                    [a.alpha_block(), a.beta_block()].concat(),
                    [b.alpha_block(), b.beta_block()].concat(),
                );
                for (p, q) in xa.iter().zip(&xb) {
                    prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()), "{p} vs {q}");
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "one ordering failed: {a:?} {b:?}"),
        }
    }

    #[test]
    fn obs_summary_quantiles_ordered(v in prop::collection::vec(-1e3f64..1e3, 6..100)) {
        let s = obs_summaries(&v).unwrap();
        prop_assert!(s[1] >= 0.0);
        prop_assert!(s[5..].windows(2).all(|w| w[0] <= w[1]));
    }
}

fn hyper(phi_prior: Prior) -> MhHyper {
    MhHyper {
        gamma_mean: 0.0,
        tau0_sq: 1.0 / 0.09,
        sigma_phi_sq: 10.0,
        phi_prior,
    }
}

#[test]
fn mh_concentrates_on_true_persistence() {
    let (phi, gamma) = (0.95, 0.5);
    let mut rng = seeded(9);
    let x: Vec<f64> = ar1(10_001, phi, 1.0, &mut rng)
        .into_iter()
        .map(|v| v + gamma)
        .collect();
    let h = hyper(Prior::Beta { a: 20.0, b: 1.5 });
    let mut cur = (0.0, 0.5);
    let mut phis = Vec::new();
    let mut accepted = 0;
    for i in 0..2000 {
        let (next, acc) = mh_update_gamma_phi(&x, cur, &h, &mut rng).unwrap();
        cur = next;
        if i >= 200 {
            phis.push(cur.1);
            accepted += acc as usize;
        }
    }
    let m = phis.iter().sum::<f64>() / phis.len() as f64;
    assert!((m - phi).abs() < 0.02, "{m}");
    assert!(phis.iter().all(|p| (p - phi).abs() < 0.02));
    assert!((cur.0 - gamma).abs() < 0.5, "gamma {}", cur.0);
    assert!(accepted > 1000, "acceptance {accepted}/1800");
}

#[test]
fn mh_phi_chain_matches_grid_posterior() {
    let gamma = 0.3;
    let mut rng = seeded(10);
    let x: Vec<f64> = ar1(16, 0.7, 1.0, &mut rng)
        .into_iter()
        .map(|v| v + gamma)
        .collect();
    let prior = Prior::Beta { a: 3.0, b: 1.5 };
    let h = hyper(prior);
    let log_target = |p: f64| {
        let tr: f64 = x
            .windows(2)
            .map(|w| -0.5 * (w[1] - gamma - p * (w[0] - gamma)).powi(2))
            .sum();
        ln_initial_density(x[0], gamma, p) + tr + prior.ln_pdf(p)
    };
    let bins = 50;
    let mut grid_mass = vec![0.0; bins];
    let sub = 200;
    for (b, m) in grid_mass.iter_mut().enumerate() {
        for s in 0..sub {
            let p = (b as f64 + (s as f64 + 0.5) / sub as f64) / bins as f64;
            *m += log_target(p).exp();
        }
    }
    let z: f64 = grid_mass.iter().sum();
    grid_mass.iter_mut().for_each(|m| *m /= z);

    let mut phi = 0.5;
    let n = 200_000;
    let mut hist = vec![0.0; bins];
    for _ in 0..n {
        phi = mh_update_phi(&x, gamma, phi, &h, &mut rng).0;
        hist[((phi * bins as f64) as usize).min(bins - 1)] += 1.0 / n as f64;
    }
    let tv: f64 = 0.5 * hist.iter().zip(&grid_mass).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn mh_rejects_nonstationary_proposals() {
    // An explosive path pushes the proposal mean beyond 1.
    let x: Vec<f64> = (0..50).map(|t| 1.1f64.powi(t)).collect();
    let h = hyper(Prior::Uniform { lo: -1.0, hi: 1.0 });
    let mut rng = seeded(11);
    let mut phi = 0.5;
    for _ in 0..100 {
        phi = mh_update_phi(&x, 0.0, phi, &h, &mut rng).0;
        assert!(phi.abs() < 1.0);
    }
}

fn lg_spec(priors: PriorSet, horizon: usize, lag: usize, n_train: usize, width: usize) -> BankSpec {
    BankSpec {
        model: GibbsModel::LinearGaussian { phi: 0.9 },
        priors,
        lag,
        pad: Some(0.0),
        horizon,
        n_train,
        qnn: QnnConfig::with_width(width),
        train: TrainConfig {
            batch_size: 128,
            n_epochs: 20,
            ..TrainConfig::default()
        },
        seed: 17,
    }
}

fn fixed_lg_priors(psi_x: f64, psi_y: f64) -> PriorSet {
    PriorSet::new(vec![
        ("psi_x".into(), Prior::PointMass { value: psi_x }),
        ("psi_y".into(), Prior::PointMass { value: psi_y }),
    ])
    .unwrap()
}

#[test]
fn point_mass_prior_maps_are_constant_and_state_pass_matches_ffbs() {
    let (psi_x, psi_y) = (5.0, 1.0);
    let horizon = 50;
    let mut spec = lg_spec(fixed_lg_priors(psi_x, psi_y), horizon, 10, 300_000, 32);
    spec.qnn.dropout_rate = 0.0;
    spec.train.batch_size = 256;
    spec.train.n_epochs = 30;
    let bank = pretrain_gengibbs_maps(&spec).unwrap();

    for b in 0..2 {
        let (net, link) = bank.param_map(b).unwrap();
        assert_eq!(link, TargetLink::Identity);
        let want = [psi_x, psi_y][b];
        let feats = [[psi_y, psi_x][b], 40.0];
        for u in [0.01, 0.25, 0.5, 0.75, 0.99] {
            let v = net.forward(&feats, u).unwrap();
            assert!((v - want).abs() < 1e-2, "block {b} u {u}: {v}");
        }
    }

    let p = LGParams::from_precisions(0.9, psi_x, psi_y).unwrap();
    let model = GibbsModel::LinearGaussian { phi: 0.9 };
    let (_, y) = model.simulate(&[psi_x, psi_y], horizon, &mut seeded(20)).unwrap();
    let cfg = GibbsRunConfig {
        n_iter: 1000,
        burn_in: 0,
        ..GibbsRunConfig::default()
    };
    let chain = gengibbs_run(&bank, &y, &cfg, &mut seeded(21)).unwrap();
    assert_eq!(chain.len(), 1000);
    assert!(chain.theta.iter().all(|th| th == &vec![psi_x, psi_y]));

    let trace = kalman_filter(&y, &p, 0.0, p.stationary_var().unwrap()).unwrap();
    let mut rng = seeded(22);
    let ffbs: Vec<Vec<f64>> = (0..1000)
        .map(|_| ffbs_lg_draw(&trace, &p, &mut rng).unwrap())
        .collect();
    let mut rejections = 0;
    for t in 0..=horizon {
        let a = chain.retained_states_at(t);
        let b: Vec<f64> = ffbs.iter().map(|x| x[t]).collect();
        if ks_two_sample(&a, &b).p_value < 0.01 {
            rejections += 1;
        }
    }
    // Binomial(51, 0.01) exceeds 3 with probability < 0.002.
    assert!(rejections <= 3, "{rejections} of {} marginals rejected", horizon + 1);
}

#[test]
fn bank_persistence_and_run_contracts() {
    let g = Prior::Gamma {
        shape: 2.0,
        rate: 2.0,
    };
    let priors = PriorSet::new(vec![("psi_x".into(), g), ("psi_y".into(), g)]).unwrap();
    let mut spec = lg_spec(priors, 30, 5, 3000, 8);
    spec.pad = None;
    spec.train.n_epochs = 2;
    let bank = pretrain_gengibbs_maps(&spec).unwrap();
    assert!(bank.spec.pad.unwrap().abs() < 0.2);
    assert_eq!(bank.maps.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    bank.save(dir.path()).unwrap();
    let back = MapBank::load(dir.path()).unwrap();
    assert_eq!(back.spec, bank.spec);
    assert_eq!(back.filter_map().unwrap(), bank.filter_map().unwrap());

    let (_, y) = bank.model().simulate(&[1.0, 1.0], 30, &mut seeded(1)).unwrap();
    let cfg = GibbsRunConfig {
        n_iter: 40,
        burn_in: 40,
        ..GibbsRunConfig::default()
    };
    let a = gengibbs_run(&bank, &y, &cfg, &mut seeded(2)).unwrap();
    let b = gengibbs_run(&back, &y, &cfg, &mut seeded(2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 40);
    assert_eq!(a.retained_len(), 0);
    assert!(a.retained(0).is_empty());
    assert!(a.theta.iter().all(|th| bank.spec.priors.in_support(th)));

    let mut csv = Vec::new();
    a.write_csv(&mut csv, &[0, 15, 30]).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("iteration,psi_x,psi_y,x_0,x_15,x_30\n"));
    assert_eq!(text.lines().count(), 41);
    let mut json = Vec::new();
    a.write_diagnostics_json(&mut json).unwrap();
    let d: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(d["n_iter"], 40);

    assert!(matches!(
        gengibbs_run(&bank, &y[..29], &cfg, &mut seeded(2)),
        Err(Error::Interface(_))
    ));

    let manifest = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(&manifest, text.replacen("\"version\": 1", "\"version\": 99", 1)).unwrap();
    assert!(matches!(MapBank::load(dir.path()), Err(Error::Version(_))));
    std::fs::write(&manifest, text).unwrap();
    let net = dir.path().join("smoother.qnn");
    let mut bytes = std::fs::read(&net).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&net, bytes).unwrap();
    assert!(matches!(MapBank::load(dir.path()), Err(Error::Checksum(_))));
}

#[test]
fn batched_chains_match_single_runs() {
    let spec = lg_spec(fixed_lg_priors(2.0, 1.0), 20, 5, 2000, 8);
    let mut spec = spec;
    spec.train.n_epochs = 1;
    let bank = pretrain_gengibbs_maps(&spec).unwrap();
    let m = *bank.model();
    let y1 = m.simulate(&[2.0, 1.0], 20, &mut seeded(3)).unwrap().1;
    let y2 = m.simulate(&[2.0, 1.0], 20, &mut seeded(4)).unwrap().1;
    let cfg = GibbsRunConfig {
        n_iter: 5,
        burn_in: 1,
        ..GibbsRunConfig::default()
    };
    let mut rngs = vec![seeded(5), seeded(6)];
    let both = gengibbs_run_many(&bank, &[&y1, &y2], &cfg, &mut rngs).unwrap();
    let single = gengibbs_run(&bank, &y2, &cfg, &mut seeded(6)).unwrap();
    for (a, b) in both[1].states.iter().zip(&single.states) {
        for (p, q) in a.iter().zip(b) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}

fn manual_chain(psi_y: f64, n: usize, horizon: usize, seed: u64) -> GibbsChain {
    let mut rng = seeded(seed);
    GibbsChain {
        block_names: vec!["psi_x".into(), "psi_y".into()],
        theta: (0..n).map(|i| vec![1.0 + i as f64 * 1e-3, psi_y]).collect(),
        states: (0..n).map(|_| normals(horizon + 1, &mut rng)).collect(),
        burn_in: n / 2,
        mh: Default::default(),
        warnings: Vec::new(),
    }
}

#[test]
fn noiseless_emission_reproduces_states() {
    let chain = manual_chain(f64::INFINITY, 100, 10, 12);
    let model = GibbsModel::LinearGaussian { phi: 0.9 };
    let y = vec![0.0; 10];
    let pd = posterior_predictive_draws(&chain, &model, &y, 50, &mut seeded(13)).unwrap();
    assert_eq!(pd.horizon(), 10);
    for (j, i) in (50..100).enumerate() {
        for t in 1..=10 {
            assert_eq!(pd.draws[t - 1][j], chain.states[i][t]);
        }
    }
    assert!(posterior_predictive_draws(&chain, &model, &y, 51, &mut seeded(13)).is_err());
}

#[test]
fn predictive_mean_matches_resimulation() {
    let (n, horizon) = (8000, 5);
    let chain = manual_chain(0.25, n, horizon, 14);
    let model = GibbsModel::LinearGaussian { phi: 0.9 };
    let pd =
        posterior_predictive_draws(&chain, &model, &vec![0.0; horizon], n / 2, &mut seeded(15))
            .unwrap();
    // Independent re-simulation from the same (θ, x_t) samples.
    let mut rng = seeded(99);
    for t in 1..=horizon {
        let oracle: Vec<f64> = (n / 2..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                chain.states[i][t] + z / chain.theta[i][1].sqrt()
            })
            .collect();
        let om = oracle.iter().sum::<f64>() / oracle.len() as f64;
        let pm = pd.means()[t - 1];
        // Each mean has variance (1 + 4) / 4000.
        let se = (2.0 * 5.0 / (n / 2) as f64).sqrt();
        assert!((pm - om).abs() < 4.0 * se, "t {t}: {pm} vs {om}");
    }
}

fn small_tc() -> TrainConfig {
    TrainConfig {
        batch_size: 128,
        n_epochs: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn gaussian_sv_chain_respects_supports() {
    let priors = PriorSet::new(vec![
        ("mu".into(), Prior::Normal { mean: 0.0, sd: 1.0 }),
        ("phi".into(), Prior::Beta { a: 20.0, b: 1.5 }),
        (
            "sigma2_eta".into(),
            Prior::InverseGamma {
                shape: 2.5,
                scale: 0.025,
            },
        ),
    ])
    .unwrap();
    let spec = BankSpec {
        model: GibbsModel::GaussianSv { phi_max: 0.99 },
        priors,
        lag: 10,
        pad: None,
        horizon: 100,
        n_train: 4000,
        qnn: QnnConfig::with_width(16),
        train: small_tc(),
        seed: 3,
    };
    let bank = pretrain_gengibbs_maps(&spec).unwrap();
    let (_, y) = bank
        .model()
        .simulate(&[0.0, 0.98, 0.01], 100, &mut seeded(4))
        .unwrap();
    let cfg = GibbsRunConfig {
        n_iter: 60,
        burn_in: 10,
        ..GibbsRunConfig::default()
    };
    let chain = gengibbs_run(&bank, &y, &cfg, &mut seeded(5)).unwrap();
    assert_eq!(chain.len(), 60);
    assert!(chain.theta.iter().all(|th| bank.spec.priors.in_support(th)));
    let pd = posterior_predictive_draws(&chain, bank.model(), &y, 50, &mut seeded(6)).unwrap();
    assert_eq!(pd.draws.len(), 100);
}

#[test]
fn stable_sv_hybrid_mh_acceptance_in_band() {
    let priors = PriorSet::new(vec![
        ("mu".into(), Prior::Normal { mean: 0.0, sd: 1.0 }),
        ("phi".into(), Prior::Beta { a: 20.0, b: 1.5 }),
        ("alpha".into(), Prior::Uniform { lo: 1.0, hi: 2.0 }),
        ("beta".into(), Prior::Uniform { lo: -1.0, hi: 1.0 }),
    ])
    .unwrap();
    let spec = BankSpec {
        model: GibbsModel::StableSv {
            sigma_eta: 0.3,
            sigma_phi_sq: 10.0,
        },
        priors,
        lag: 10,
        pad: None,
        horizon: 200,
        n_train: 4000,
        qnn: QnnConfig::with_width(16),
        train: small_tc(),
        seed: 8,
    };
    let bank = pretrain_gengibbs_maps(&spec).unwrap();
    assert_eq!(bank.maps.len(), 4);
    let (_, y) = bank
        .model()
        .simulate(&[0.0, 0.95, 1.7, -0.3], 200, &mut seeded(9))
        .unwrap();
    let cfg = GibbsRunConfig {
        n_iter: 300,
        burn_in: 100,
        ..GibbsRunConfig::default()
    };
    let chain = gengibbs_run(&bank, &y, &cfg, &mut seeded(10)).unwrap();
    assert!(chain.theta.iter().all(|th| bank.spec.priors.in_support(th)));
    let rate = chain.mh["phi"].rate();
    assert!((0.2..=0.9).contains(&rate), "phi acceptance {rate}");
    assert_eq!(chain.mh["phi"].proposed, 200);
    let d = chain.diagnostics();
    assert!(d.ess["alpha"] > 0.0);
}
