use gbf::eval::ks_one_sample;
use gbf::filters::{gibbs_lg, kalman_filter, GibbsLgConfig};
use gbf::rng::seeded;
use gbf::ssm::{simulate_trajectory, LGParams, LinearGaussian};
use proptest::prelude::*;
use rand_distr::{Distribution, Gamma};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kalman_posterior_variance_below_prior_variance(
        phi in -0.99f64..0.99,
        sx in 0.01f64..3.0,
        sy in 0.01f64..3.0,
        y in prop::collection::vec(-20.0f64..20.0, 1..60),
    ) {
        let p = LGParams::new(phi, sx, sy).unwrap();
        let tr = kalman_filter(&y, &p, 0.0, p.stationary_var().unwrap()).unwrap();
        for (c, r) in tr.c.iter().zip(&tr.r) {
            prop_assert!(*c > 0.0 && *r > 0.0);
            prop_assert!(c <= r, "C {} > R {}", c, r);
        }
    }
}

/// Truths drawn from the Gamma(2, rate 2) priors, data simulated under them:
/// the posterior quantile of each truth is Uniform(0, 1).
#[test]
fn gibbs_lg_is_calibrated_on_prior_draws() {
    let reps = 100;
    let prior = Gamma::new(2.0, 0.5).unwrap();
    let mut rng = seeded(1);
    let mut qx = Vec::with_capacity(reps);
    let mut qy = Vec::with_capacity(reps);
    for r in 0..reps {
        let (psi_x, psi_y): (f64, f64) = (prior.sample(&mut rng), prior.sample(&mut rng));
        let p = LGParams::from_precisions(0.9, psi_x, psi_y).unwrap();
        let model = LinearGaussian::stationary(p).unwrap();
        let tr = simulate_trajectory(&model, 50, &mut rng).unwrap();
        let mut gc = GibbsLgConfig::new(0.9, 2.0, 2.0, 1500, 300);
        // the simulator draws x_0 from the stationary law, so the exact
        // conditional includes its term
        gc.include_initial_term = true;
        let ch = gibbs_lg(&tr.observations, &gc, &mut seeded(100 + r as u64)).unwrap();
        let frac = |d: &[f64], v: f64| d.iter().filter(|x| **x < v).count() as f64 / d.len() as f64;
        qx.push(frac(ch.retained_psi_x(), psi_x));
        qy.push(frac(ch.retained_psi_y(), psi_y));
    }
    for q in [&qx, &qy] {
        let ks = ks_one_sample(q, |u| u.clamp(0.0, 1.0));
        assert!(ks.p_value > 0.01, "{ks:?}");
    }
}
