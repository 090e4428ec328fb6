//! α-stable laws `S(α, β, γ, δ)`.
//!
//! Draws use the Chambers–Mallows–Stuck transform. The default
//! parameterization is Nolan's S1 (the characteristic function
//! `exp(-γ^α|t|^α (1 - iβ sgn(t) tan(πα/2)) + iδt)` for α ≠ 1); S0, whose
//! location is continuous across α = 1, is available through
//! [`Parameterization::S0`]. Quantiles are obtained by inverting the CDF, which
//! is itself computed by Gil-Pelaez inversion of the characteristic function.

use std::f64::consts::{FRAC_PI_2, PI};

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::rng::{open01, SimRng};
use crate::util::{gauss_legendre, norm_ppf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    #[default]
    S1,
    S0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    #[serde(default)]
    pub parameterization: Parameterization,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            gamma,
            delta,
            parameterization: Parameterization::S1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian() -> Self {
        Self {
            alpha: 2.0,
            beta: 0.0,
            gamma: 1.0,
            delta: 0.0,
            parameterization: Parameterization::S1,
        }
    }

    pub fn cauchy() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            gamma: 1.0,
            delta: 0.0,
            parameterization: Parameterization::S1,
        }
    }

    pub fn with_parameterization(mut self, p: Parameterization) -> Self {
        self.parameterization = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::domain(format!(
                "stable alpha {} not in (0, 2]",
                self.alpha
            )));
        }
        if !(-1.0..=1.0).contains(&self.beta) {
            return Err(Error::domain(format!(
                "stable beta {} not in [-1, 1]",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::domain(format!(
                "stable scale {} must be positive",
                self.gamma
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::domain("stable location must be finite"));
        }
        Ok(())
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }

    pub fn is_cauchy(&self) -> bool {
        self.alpha == 1.0 && self.beta == 0.0
    }

    /// Skewness actually in effect (β is irrelevant at α = 2).
    fn eff_beta(&self) -> f64 {
        if self.is_gaussian() {
            0.0
        } else {
            self.beta
        }
    }

    /// Location of the equivalent S1 law.
    fn s1_delta(&self) -> f64 {
        match self.parameterization {
            Parameterization::S1 => self.delta,
            Parameterization::S0 => {
                let (a, b, g) = (self.alpha, self.eff_beta(), self.gamma);
                if a == 1.0 {
                    self.delta - 2.0 / PI * b * g * g.ln()
                } else {
                    self.delta - b * g * (PI * a / 2.0).tan()
                }
            }
        }
    }

    /// Maps a standard S1 variate (γ = 1, δ = 0) to this law.
    fn affine(&self, z: f64) -> f64 {
        let (b, g) = (self.eff_beta(), self.gamma);
        let shift = if self.alpha == 1.0 {
            2.0 / PI * b * g * g.ln()
        } else {
            0.0
        };
        g * z + shift + self.s1_delta()
    }

    fn inverse_affine(&self, y: f64) -> f64 {
        let (b, g) = (self.eff_beta(), self.gamma);
        let shift = if self.alpha == 1.0 {
            2.0 / PI * b * g * g.ln()
        } else {
            0.0
        };
        (y - shift - self.s1_delta()) / g
    }
}

/// One Chambers–Mallows–Stuck draw from the standard S1 law with the given
/// α and β, from `v ~ U(-π/2, π/2)` and `w ~ Exp(1)`.
pub fn cms_standard(alpha: f64, beta: f64, v: f64, w: f64) -> f64 {
    if alpha == 1.0 {
        let a = FRAC_PI_2 + beta * v;
        2.0 / PI * (a * v.tan() - beta * (FRAC_PI_2 * w * v.cos() / a).ln())
    } else if alpha == 2.0 {
        2.0 * v.sin() * w.sqrt()
    } else {
        let k = (PI * alpha / 2.0).tan();
        let b = (beta * k).atan() / alpha;
        let s = (1.0 + beta * beta * k * k).powf(1.0 / (2.0 * alpha));
        let av = alpha * (v + b);
        s * av.sin() / v.cos().powf(1.0 / alpha) * ((v - av).cos() / w).powf((1.0 - alpha) / alpha)
    }
}

pub fn sample_stable(p: &StableParams, rng: &mut SimRng) -> Result<f64> {
    p.validate()?;
    Ok(sample_stable_unchecked(p, rng))
}

/// As [`sample_stable`] for parameters already validated.
#[inline]
pub fn sample_stable_unchecked(p: &StableParams, rng: &mut SimRng) -> f64 {
    let v = PI * (open01(rng) - 0.5);
    let w: f64 = Exp1.sample(rng);
    p.affine(cms_standard(p.alpha, p.eff_beta(), v, w))
}

/// CDF of the standard S1 law, Gil-Pelaez inversion of the characteristic
/// function with composite Gauss-Legendre quadrature.
///
/// Returns `(F(x), 1 - F(x))`, both computed without cancellation for
/// moderate tails. Accuracy degrades for α below about 0.5.
pub fn standard_cdf(alpha: f64, beta: f64, x: f64) -> (f64, f64) {
    if alpha == 2.0 {
        let z = x / std::f64::consts::SQRT_2;
        let lo = 0.5 * statrs::function::erf::erfc(-z);
        return (lo, 0.5 * statrs::function::erf::erfc(z));
    }
    if alpha == 1.0 && beta == 0.0 {
        let up = 0.5 - x.atan() / PI;
        let lo = 0.5 + x.atan() / PI;
        // Tail-accurate forms for large |x|.
        return if x > 1.0 {
            (1.0 - (1.0 / x).atan() / PI, (1.0 / x).atan() / PI)
        } else if x < -1.0 {
            ((-1.0 / x).atan() / PI, 1.0 - (-1.0 / x).atan() / PI)
        } else {
            (lo, up)
        };
    }
    // Im[e^{-itx} φ(t)] / t for t > 0.
    let integrand = |t: f64| -> f64 {
        let phase = if alpha == 1.0 {
            -t * x - beta * 2.0 / PI * t * t.ln()
        } else {
            beta * (PI * alpha / 2.0).tan() * t.powf(alpha) - t * x
        };
        (-t.powf(alpha)).exp() * phase.sin() / t
    };
    let t_max = 42.0f64.powf(1.0 / alpha);
    let slope = if alpha == 1.0 {
        x.abs() + beta.abs() * 2.0 / PI * (t_max.ln().abs() + 2.0)
    } else {
        x.abs() + alpha * (beta * (PI * alpha / 2.0).tan()).abs() * t_max.powf(alpha - 1.0).max(1.0)
    };
    let width = (1.0 / (slope + 1.0)).min(0.25);
    let (nodes, weights) = gauss_legendre(24);
    // Substitute t = s^2 on the first panel to tame the t^{α-1} behaviour at 0.
    let mut integral = 0.0;
    let first = width.min(t_max);
    let s_max = first.sqrt();
    for (z, w) in nodes.iter().zip(&weights) {
        let s = 0.5 * s_max * (z + 1.0);
        integral += 0.5 * s_max * w * integrand(s * s) * 2.0 * s;
    }
    let mut a = first;
    while a < t_max {
        let b = (a + width).min(t_max);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut panel = 0.0;
        for (z, w) in nodes.iter().zip(&weights) {
            panel += w * integrand(mid + half * z);
        }
        integral += half * panel;
        a = b;
    }
    let lo = 0.5 - integral / PI;
    let up = 0.5 + integral / PI;
    (lo, up)
}

pub fn stable_cdf(p: &StableParams, x: f64) -> Result<f64> {
    p.validate()?;
    Ok(standard_cdf(p.alpha, p.eff_beta(), p.inverse_affine(x)).0)
}

/// Quantile function of `p` at level `q ∈ (0, 1)`.
pub fn stable_quantile(p: &StableParams, q: f64) -> Result<f64> {
    p.validate()?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("quantile level {q} not in (0, 1)")));
    }
    let (alpha, beta) = (p.alpha, p.eff_beta());
    let z = if alpha == 2.0 {
        std::f64::consts::SQRT_2 * norm_ppf(q)
    } else if alpha == 1.0 && beta == 0.0 {
        (PI * (q - 0.5)).tan()
    } else {
        // Work on whichever tail is small to keep relative accuracy.
        let upper = q > 0.5;
        let target = if upper { 1.0 - q } else { q };
        let tail = |x: f64| {
            let (lo, up) = standard_cdf(alpha, beta, x);
            if upper {
                up
            } else {
                lo
            }
        };
        let dir = if upper { 1.0 } else { -1.0 };
        // tail(dir * r) decreases in r; bracket then bisect.
        let (mut a, mut b) = (-dir * 1.0, dir * 1.0);
        let mut step = 1.0;
        while tail(a) < target {
            step *= 2.0;
            a = -dir * step;
            if step > 1e12 {
                return Err(Error::Numerical("stable quantile bracket failed".into()));
            }
        }
        step = 1.0;
        while tail(b) > target {
            step *= 2.0;
            b = dir * step;
            if step > 1e12 {
                return Err(Error::Numerical("stable quantile bracket failed".into()));
            }
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if tail(m) > target {
                a = m;
            } else {
                b = m;
            }
            if (b - a).abs() <= 1e-12 * (1.0 + m.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    };
    Ok(p.affine(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rejects_bad_parameters() {
        assert!(StableParams::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(StableParams::new(2.1, 0.0, 1.0, 0.0).is_err());
        assert!(StableParams::new(1.5, 1.5, 1.0, 0.0).is_err());
        assert!(StableParams::new(1.5, 0.0, 0.0, 0.0).is_err());
        let mut rng = seeded(1);
        let bad = StableParams {
            alpha: 3.0,
            ..StableParams::gaussian()
        };
        assert!(matches!(
            sample_stable(&bad, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn alpha_two_ignores_beta() {
        let a = StableParams::new(2.0, 0.9, 1.0, 0.0).unwrap();
        let b = StableParams::gaussian();
        let (mut r1, mut r2) = (seeded(3), seeded(3));
        for _ in 0..100 {
            assert_eq!(
                sample_stable(&a, &mut r1).unwrap(),
                sample_stable(&b, &mut r2).unwrap()
            );
        }
    }

    #[test]
    fn cf_cdf_matches_closed_forms() {
        // Lévy law: α = 1/2, β = 1, F(x) = erfc(sqrt(1/(2x))) in S1.
        for x in [0.5f64, 1.0, 4.0, 20.0] {
            let exact = statrs::function::erf::erfc((0.5 / x).sqrt());
            let (got, _) = standard_cdf(0.5, 1.0, x);
            assert!((got - exact).abs() < 2e-5, "x={x}: {got} vs {exact}");
        }
        // α = 1.5, β = 0 symmetry and the median.
        let (f0, _) = standard_cdf(1.5, 0.0, 0.0);
        assert!((f0 - 0.5).abs() < 1e-12);
        let (a, _) = standard_cdf(1.5, 0.0, 2.0);
        let (_, b) = standard_cdf(1.5, 0.0, -2.0);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = StableParams::new(1.75, 0.5, 1.0, 0.0).unwrap();
        for q in [1e-4, 0.01, 0.3, 0.99] {
            let x = stable_quantile(&p, q).unwrap();
            let f = stable_cdf(&p, x).unwrap();
            assert!((f - q).abs() < 1e-8 * (1.0 + 1.0 / q), "q={q} f={f}");
        }
        let c = StableParams::cauchy();
        assert!((stable_quantile(&c, 0.9999).unwrap() - 3183.0988).abs() < 1e-3);
    }

    #[test]
    fn s0_and_s1_differ_by_location() {
        let s1 = StableParams::new(1.5, 0.5, 2.0, 0.0).unwrap();
        let s0 = s1.with_parameterization(Parameterization::S0);
        let (mut r1, mut r0) = (seeded(9), seeded(9));
        let shift = 0.5 * 2.0 * (PI * 0.75).tan();
        for _ in 0..10 {
            let a = sample_stable(&s1, &mut r1).unwrap();
            let b = sample_stable(&s0, &mut r0).unwrap();
            assert!((b - (a - shift)).abs() < 1e-9);
        }
    }
}
