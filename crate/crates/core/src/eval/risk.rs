//! Value at Risk, expected shortfall and coverage backtests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::util::{inverse_ecdf_sorted, sorted};
use crate::{Error, Result};

/// Empirical VaR (`inf{v : F̂(v) ≥ q}`) and ES (mean of draws at or below
/// the VaR) of one predictive sample.
pub fn var_es(draws: &[f64], q: f64) -> Result<(f64, f64)> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("tail level {q} not in (0, 1)")));
    }
    if ((q * draws.len() as f64) + 1e-9).floor() < 1.0 {
        return Err(Error::InsufficientData(format!(
            "{} draws are too few for level {q}",
            draws.len()
        )));
    }
    let s = sorted(draws);
    let v = inverse_ecdf_sorted(&s, q);
    let tail: Vec<f64> = s.iter().copied().take_while(|&x| x <= v).collect();
    Ok((v, tail.iter().sum::<f64>() / tail.len() as f64))
}

/// Per-t `(VaR, ES)` over a predictive draw matrix.
pub fn var_es_estimate(draws: &[Vec<f64>], q: f64) -> Result<Vec<(f64, f64)>> {
    draws.iter().map(|d| var_es(d, q)).collect()
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Kupiec unconditional-coverage likelihood ratio.
pub fn kupiec_lr(breaches: usize, trials: usize, q: f64) -> Result<f64> {
    if breaches > trials || trials == 0 {
        return Err(Error::domain("need 0 <= breaches <= trials and trials > 0"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain("coverage level must be in (0, 1)"));
    }
    let (x, n) = (breaches as f64, trials as f64);
    let p = x / n;
    let l0 = xlogy(x, q) + xlogy(n - x, 1.0 - q);
    let l1 = xlogy(x, p) + xlogy(n - x, 1.0 - p);
    Ok((-2.0 * (l0 - l1)).max(0.0))
}

/// Christoffersen independence statistic from first-order transition counts.
pub fn lr_ind(hits: &[bool]) -> Result<f64> {
    if hits.len() < 2 {
        return Err(Error::InsufficientData(
            "independence test needs at least two hits".into(),
        ));
    }
    let mut n = [[0.0f64; 2]; 2];
    for w in hits.windows(2) {
        n[w[0] as usize][w[1] as usize] += 1.0;
    }
    let (n00, n01, n10, n11) = (n[0][0], n[0][1], n[1][0], n[1][1]);
    let pi01 = if n00 + n01 > 0.0 {
        n01 / (n00 + n01)
    } else {
        0.0
    };
    let pi11 = if n10 + n11 > 0.0 {
        n11 / (n10 + n11)
    } else {
        0.0
    };
    let pi = (n01 + n11) / (n00 + n01 + n10 + n11);
    let l0 = xlogy(n00 + n10, 1.0 - pi) + xlogy(n01 + n11, pi);
    let l1 = xlogy(n00, 1.0 - pi01) + xlogy(n01, pi01) + xlogy(n10, 1.0 - pi11) + xlogy(n11, pi11);
    Ok((-2.0 * (l0 - l1)).max(0.0))
}

/// `(lr_ind, lr_cc)` with `lr_cc = lr_uc + lr_ind`.
pub fn christoffersen_tests(hits: &[bool], lr_uc: f64) -> Result<(f64, f64)> {
    let ind = lr_ind(hits)?;
    Ok((ind, lr_uc + ind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub level: f64,
    pub hit_rate: f64,
    pub lr_uc: f64,
    pub lr_ind: f64,
    pub lr_cc: f64,
    pub p_uc: f64,
    pub p_ind: f64,
    pub p_cc: f64,
    pub average_es: f64,
    /// 1-based times at which the return fell below the VaR.
    pub breach_times: Vec<usize>,
}

/// Backtests one-step predictive draws against realized returns.
pub fn backtest(returns: &[f64], draws: &[Vec<f64>], q: f64) -> Result<BacktestReport> {
    if returns.len() != draws.len() {
        return Err(Error::Interface(
            "returns and predictive draws are misaligned".into(),
        ));
    }
    let risk = var_es_estimate(draws, q)?;
    let hits: Vec<bool> = returns.iter().zip(&risk).map(|(y, (v, _))| y < v).collect();
    let breaches = hits.iter().filter(|h| **h).count();
    let lr_uc = kupiec_lr(breaches, hits.len(), q)?;
    let (lr_ind, lr_cc) = christoffersen_tests(&hits, lr_uc)?;
    let chi1 = ChiSquared::new(1.0).expect("valid dof");
    let chi2 = ChiSquared::new(2.0).expect("valid dof");
    Ok(BacktestReport {
        level: q,
        hit_rate: breaches as f64 / hits.len() as f64,
        lr_uc,
        lr_ind,
        lr_cc,
        p_uc: 1.0 - chi1.cdf(lr_uc),
        p_ind: 1.0 - chi1.cdf(lr_ind),
        p_cc: 1.0 - chi2.cdf(lr_cc),
        average_es: risk.iter().map(|r| r.1).sum::<f64>() / risk.len() as f64,
        breach_times: hits
            .iter()
            .enumerate()
            .filter(|(_, h)| **h)
            .map(|(i, _)| i + 1)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn order_statistic_example() {
        let d: Vec<f64> = (-3..=6).map(f64::from).collect();
        assert_eq!(var_es(&d, 0.1).unwrap(), (-3.0, -3.0));
        assert!(var_es(&vec![0.0; 500], 0.001).is_err());
    }

    #[test]
    fn gaussian_tail() {
        let mut rng = seeded(31);
        let d: Vec<f64> = (0..100_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let (v, es) = var_es(&d, 0.05).unwrap();
        assert!((v + 1.645).abs() < 0.02, "{v}");
        assert!((es + 2.063).abs() < 0.03, "{es}");
    }

    #[test]
    fn kupiec_values() {
        assert_eq!(kupiec_lr(10, 1000, 0.01).unwrap(), 0.0);
        let a = kupiec_lr(17, 1000, 0.01).unwrap();
        assert!((a - 4.088).abs() < 0.01, "{a}");
        let b = kupiec_lr(9, 1000, 0.01).unwrap();
        assert!((b - 0.105).abs() < 0.01, "{b}");
        assert!(kupiec_lr(0, 100, 0.01).unwrap() > 0.0);
    }

    #[test]
    fn independence_examples() {
        let no_hits = vec![false; 100];
        assert_eq!(lr_ind(&no_hits).unwrap(), 0.0);
        let mut clustered = vec![false; 100];
        clustered[40..50].iter_mut().for_each(|h| *h = true);
        assert!(lr_ind(&clustered).unwrap() > 5.0);
        // π01 = π11 = 1/2 exactly.
        let pattern = [false, false, true, true];
        let seq: Vec<bool> = pattern.iter().cycle().take(1000).copied().collect();
        let mut n = [[0.0f64; 2]; 2];
        for w in seq.windows(2) {
            n[w[0] as usize][w[1] as usize] += 1.0;
        }
        let (p01, p11) = (n[0][1] / (n[0][0] + n[0][1]), n[1][1] / (n[1][0] + n[1][1]));
        assert!((p01 - p11).abs() < 0.01);
        assert!(lr_ind(&seq).unwrap() < 0.1);
    }

    proptest! {
        #[test]
        fn cc_decomposes(hits in prop::collection::vec(any::<bool>(), 2..300), q in 0.001f64..0.2) {
            let x = hits.iter().filter(|h| **h).count();
            let uc = kupiec_lr(x, hits.len(), q).unwrap();
            let (ind, cc) = christoffersen_tests(&hits, uc).unwrap();
            prop_assert!((cc - (uc + ind)).abs() < 1e-9);
        }

        #[test]
        fn es_below_var(d in prop::collection::vec(-1e3f64..1e3, 20..200), q in 0.05f64..0.95) {
            let (v, es) = var_es(&d, q).unwrap();
            prop_assert!(es <= v + 1e-12);
        }
    }
}
