use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::util::log_sum_exp;
use crate::{Error, Result};

/// Weighted particle cloud with unnormalized log-weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl ParticleSet {
    pub fn uniform(particles: Vec<f64>) -> Self {
        let n = particles.len();
        Self {
            particles,
            log_weights: vec![-(n as f64).ln(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Normalized weights via a max-shift; errors if every weight is zero.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let lse = log_sum_exp(&self.log_weights);
        if !lse.is_finite() {
            return Err(Error::DegenerateWeights { t: 0 });
        }
        Ok(self.log_weights.iter().map(|lw| (lw - lse).exp()).collect())
    }

    /// Rescales log-weights so the weights sum to one.
    pub fn normalize(&mut self) -> Result<()> {
        let lse = log_sum_exp(&self.log_weights);
        if !lse.is_finite() {
            return Err(Error::DegenerateWeights { t: 0 });
        }
        self.log_weights.iter_mut().for_each(|lw| *lw -= lse);
        Ok(())
    }

    pub fn ess(&self) -> Result<f64> {
        effective_sample_size(self)
    }

    pub fn mean(&self) -> Result<f64> {
        let w = self.weights()?;
        Ok(w.iter().zip(&self.particles).map(|(w, x)| w * x).sum())
    }

    pub fn variance(&self) -> Result<f64> {
        let w = self.weights()?;
        let m: f64 = w.iter().zip(&self.particles).map(|(w, x)| w * x).sum();
        Ok(w.iter()
            .zip(&self.particles)
            .map(|(w, x)| w * (x - m) * (x - m))
            .sum())
    }

    /// `n` points at levels `(k - ½)/n` of the weighted empirical quantile
    /// function: a deterministic equally weighted stand-in for the cloud.
    pub fn quantile_points(&self, n: usize) -> Result<Vec<f64>> {
        let w = self.weights()?;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.particles[a].total_cmp(&self.particles[b]));
        let mut out = Vec::with_capacity(n);
        let mut cum = 0.0;
        let mut j = 0;
        for k in 0..n {
            let level = (k as f64 + 0.5) / n as f64;
            while j + 1 < idx.len() && cum + w[idx[j]] < level {
                cum += w[idx[j]];
                j += 1;
            }
            out.push(self.particles[idx[j]]);
        }
        Ok(out)
    }
}

/// `1 / Σ w_i²` for the normalized weights.
pub fn effective_sample_size(ps: &ParticleSet) -> Result<f64> {
    let w = ps.weights()?;
    let s: f64 = w.iter().map(|w| w * w).sum();
    Ok((1.0 / s).clamp(1.0, ps.len() as f64))
}

/// Systematic resampling: one uniform offset, `N` evenly spaced pointers.
pub fn systematic_resample(ps: &ParticleSet, rng: &mut SimRng) -> Result<ParticleSet> {
    let w = ps.weights()?;
    let n = ps.len();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = w[0];
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while u > cum && j + 1 < n {
            j += 1;
            cum += w[j];
        }
        out.push(ps.particles[j]);
    }
    Ok(ParticleSet::uniform(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn from_weights(w: &[f64]) -> ParticleSet {
        ParticleSet {
            particles: (0..w.len()).map(|i| i as f64).collect(),
            log_weights: w.iter().map(|w| w.ln()).collect(),
        }
    }

    #[test]
    fn ess_examples() {
        assert!((ParticleSet::uniform(vec![0.0; 1000]).ess().unwrap() - 1000.0).abs() < 1e-9);
        let mut point = from_weights(&[1.0, 0.0, 0.0]);
        assert!((point.ess().unwrap() - 1.0).abs() < 1e-12);
        assert!((from_weights(&[0.5, 0.25, 0.25]).ess().unwrap() - 8.0 / 3.0).abs() < 1e-12);
        point.log_weights = vec![f64::NEG_INFINITY; 3];
        assert!(matches!(point.ess(), Err(Error::DegenerateWeights { .. })));
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let mut ps = ParticleSet {
            particles: vec![0.0; 4],
            log_weights: vec![-1000.0, -1001.0, -999.5, -1200.0],
        };
        ps.normalize().unwrap();
        let s: f64 = ps.weights().unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_resamples_to_one_particle() {
        let mut w = vec![0.0; 10];
        w[0] = 1.0;
        let r = systematic_resample(&from_weights(&w), &mut seeded(1)).unwrap();
        assert!(r.particles.iter().all(|&x| x == 0.0));
        assert!(r
            .log_weights
            .iter()
            .all(|&lw| (lw + 10f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn uniform_weights_keep_every_particle() {
        let ps = ParticleSet::uniform((0..50).map(f64::from).collect());
        let r = systematic_resample(&ps, &mut seeded(2)).unwrap();
        assert_eq!(r.particles, ps.particles);
    }

    #[test]
    fn systematic_resampling_is_unbiased() {
        let mut w = vec![0.7, 0.3];
        w.resize(10, 0.0);
        let ps = from_weights(&w);
        let mut rng = seeded(3);
        let reps = 10_000;
        let mut copies = 0usize;
        for _ in 0..reps {
            let r = systematic_resample(&ps, &mut rng).unwrap();
            copies += r.particles.iter().filter(|&&x| x == 0.0).count();
        }
        let mean = copies as f64 / reps as f64;
        assert!((mean - 7.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn weighted_quantile_points() {
        let ps = from_weights(&[0.5, 0.5]);
        assert_eq!(ps.quantile_points(4).unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
    }
}
