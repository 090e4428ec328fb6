//! Parameter priors.

use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::rng::{open01, SimRng};
use crate::{Error, Result};

/// Univariate prior. `Gamma` uses the shape/rate form and `InverseGamma`
/// the shape/scale form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
            Prior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            Prior::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Prior::Beta { a, b } => a > 0.0 && b > 0.0,
            Prior::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
            Prior::PointMass { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid prior {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            Prior::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                .expect("validated")
                .sample(rng),
            Prior::InverseGamma { shape, scale } => {
                1.0 / Gamma::new(shape, 1.0 / scale)
                    .expect("validated")
                    .sample(rng)
            }
            Prior::Beta { a, b } => Beta::new(a, b).expect("validated").sample(rng),
            Prior::Uniform { lo, hi } => lo + (hi - lo) * open01(rng),
            Prior::PointMass { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Prior::Normal { mean, .. } => mean,
            Prior::Gamma { shape, rate } => shape / rate,
            Prior::InverseGamma { shape, scale } => {
                if shape > 1.0 {
                    scale / (shape - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            Prior::Beta { a, b } => a / (a + b),
            Prior::Uniform { lo, hi } => 0.5 * (lo + hi),
            Prior::PointMass { value } => value,
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            Prior::Normal { .. } => x.is_finite(),
            Prior::Gamma { .. } | Prior::InverseGamma { .. } => x > 0.0 && x.is_finite(),
            Prior::Beta { .. } => x > 0.0 && x < 1.0,
            Prior::Uniform { lo, hi } => x > lo && x < hi,
            Prior::PointMass { value } => x == value,
        }
    }

    /// Log density up to nothing: normalizing constants included.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Prior::Gamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            Prior::InverseGamma { shape, scale } => {
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
            }
            Prior::Beta { a, b } => {
                ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
                    + (a - 1.0) * x.ln()
                    + (b - 1.0) * (1.0 - x).ln()
            }
            Prior::Uniform { lo, hi } => -(hi - lo).ln(),
            Prior::PointMass { .. } => 0.0,
        }
    }
}

/// Named, independent prior blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub blocks: Vec<(String, Prior)>,
}

impl PriorSet {
    pub fn new(blocks: Vec<(String, Prior)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::domain("prior set needs at least one block"));
        }
        for (_, p) in &blocks {
            p.validate()?;
        }
        Ok(Self { blocks })
    }

    pub fn dim(&self) -> usize {
        self.blocks.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.blocks.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|(n, _)| n == name)
    }

    /// One joint draw, blocks drawn independently in declaration order.
    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        self.blocks.iter().map(|(_, p)| p.sample(rng)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.blocks.iter().map(|(_, p)| p.mean()).collect()
    }

    pub fn in_support(&self, theta: &[f64]) -> bool {
        theta.len() == self.blocks.len()
            && self
                .blocks
                .iter()
                .zip(theta)
                .all(|((_, p), &x)| p.in_support(x))
    }
}

pub fn sample_prior(priors: &PriorSet, rng: &mut SimRng) -> Vec<f64> {
    priors.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn gamma_two_two_has_unit_mean() {
        let p = Prior::Gamma {
            shape: 2.0,
            rate: 2.0,
        };
        let mut rng = seeded(11);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| p.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn beta_prior_mean() {
        let p = Prior::Beta { a: 20.0, b: 1.5 };
        let mut rng = seeded(12);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| p.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 20.0 / 21.5).abs() < 0.005, "{m}");
    }

    #[test]
    fn uniform_draws_inside_open_interval() {
        let p = Prior::Uniform { lo: 1.0, hi: 2.0 };
        let mut rng = seeded(13);
        let xs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 1.0 && x < 2.0));
    }

    #[test]
    fn densities_integrate_to_one() {
        let cases = [
            (
                Prior::Gamma {
                    shape: 2.0,
                    rate: 2.0,
                },
                0.0,
                30.0,
            ),
            (
                Prior::InverseGamma {
                    shape: 2.5,
                    scale: 0.025,
                },
                0.0,
                5.0,
            ),
            (Prior::Beta { a: 20.0, b: 1.5 }, 0.0, 1.0),
            (Prior::Normal { mean: 0.0, sd: 1.0 }, -12.0, 12.0),
        ];
        for (p, lo, hi) in cases {
            let n = 400_000;
            let h = (hi - lo) / n as f64;
            let s: f64 = (0..n)
                .map(|i| p.ln_pdf(lo + (i as f64 + 0.5) * h).exp())
                .sum::<f64>()
                * h;
            assert!((s - 1.0).abs() < 2e-3, "{p:?}: {s}");
        }
    }

    #[test]
    fn invalid_priors_rejected() {
        assert!(PriorSet::new(vec![(
            "a".into(),
            Prior::Gamma {
                shape: -1.0,
                rate: 1.0
            }
        )])
        .is_err());
        assert!(PriorSet::new(vec![]).is_err());
    }
}
