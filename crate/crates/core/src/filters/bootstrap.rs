use super::particles::{systematic_resample, ParticleSet};
use crate::rng::SimRng;
use crate::ssm::StateSpaceModel;
use crate::{Error, Result};

/// Default resampling trigger: half the particle count.
pub fn default_ess_threshold(n_particles: usize) -> f64 {
    n_particles as f64 / 2.0
}

/// Runs the bootstrap particle filter, handing the weighted cloud at each
/// `t` (1-based) to `visit` before any resampling. Keeps memory at one cloud.
pub fn bootstrap_pf_visit<F>(
    model: &dyn StateSpaceModel,
    y: &[f64],
    n_particles: usize,
    ess_threshold: f64,
    rng: &mut SimRng,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &ParticleSet) -> Result<()>,
{
    if n_particles == 0 {
        return Err(Error::domain("particle count must be positive"));
    }
    if y.is_empty() {
        return Ok(());
    }
    if model.log_likelihood(0.0, y[0]).is_none() {
        return Err(Error::Interface(
            "bootstrap filter needs an emission density".into(),
        ));
    }
    let particles: Vec<f64> = (0..n_particles)
        .map(|_| model.sample_initial(rng))
        .collect();
    let mut ps = ParticleSet::uniform(particles);
    for (i, &yt) in y.iter().enumerate() {
        let t = i + 1;
        for (x, lw) in ps.particles.iter_mut().zip(ps.log_weights.iter_mut()) {
            *x = model.sample_transition(*x, rng);
            *lw += model.log_likelihood(*x, yt).unwrap_or(f64::NEG_INFINITY);
        }
        ps.normalize().map_err(|_| Error::DegenerateWeights { t })?;
        visit(t, &ps)?;
        if ps.ess()? < ess_threshold {
            ps = systematic_resample(&ps, rng)?;
        }
    }
    Ok(())
}

/// Bootstrap particle filter returning the weighted cloud at every `t`.
pub fn bootstrap_pf_run(
    model: &dyn StateSpaceModel,
    y: &[f64],
    n_particles: usize,
    ess_threshold: f64,
    rng: &mut SimRng,
) -> Result<Vec<ParticleSet>> {
    let mut out = Vec::with_capacity(y.len());
    bootstrap_pf_visit(model, y, n_particles, ess_threshold, rng, |_, ps| {
        out.push(ps.clone());
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::ssm::{
        simulate_trajectory, LGParams, LinearGaussian, SVParams, StableParams, StochasticVolatility,
    };

    #[test]
    fn deterministic_transition_collapses_on_truth() {
        let p = LGParams::new(0.5, 0.0, 1e-3).unwrap();
        let m = LinearGaussian::with_initial(p, 2.0, 1.0).unwrap();
        let tr = simulate_trajectory(
            &LinearGaussian::with_initial(p, 2.0, 0.0).unwrap(),
            5,
            &mut seeded(1),
        )
        .unwrap();
        let out = bootstrap_pf_run(&m, &tr.observations, 20_000, 10_000.0, &mut seeded(2)).unwrap();
        for (t, ps) in out.iter().enumerate().skip(1) {
            assert!((ps.mean().unwrap() - tr.states[t + 1]).abs() < 1e-2);
            assert!(ps.variance().unwrap().sqrt() < 1e-2);
        }
    }

    #[test]
    fn needs_density() {
        let noise = StableParams::new(1.5, 0.3, 1.0, 0.0).unwrap();
        let m = StochasticVolatility::new(SVParams::new(0.0, 0.9, 0.2, noise).unwrap()).unwrap();
        assert!(matches!(
            bootstrap_pf_run(&m, &[0.1], 10, 5.0, &mut seeded(0)),
            Err(Error::Interface(_))
        ));
    }

    #[test]
    fn underflow_reports_time() {
        let p = LGParams::new(0.5, 0.1, 1e-3).unwrap();
        let m = LinearGaussian::stationary(p).unwrap();
        let err = bootstrap_pf_run(&m, &[0.0, 1e200], 10, 5.0, &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeights { t: 2 }), "{err}");
    }
}
