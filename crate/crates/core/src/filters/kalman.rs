use serde::{Deserialize, Serialize};

use crate::ssm::LGParams;
use crate::util::norm_ppf;
use crate::{Error, Result};

/// Forward-pass quantities for `t = 1..=T`, stored at index `t - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanTrace {
    pub m0: f64,
    pub c0: f64,
    /// Prior means `a_t`.
    pub a: Vec<f64>,
    /// Prior variances `R_t`.
    pub r: Vec<f64>,
    /// Forecast means `f_t`.
    pub f: Vec<f64>,
    /// Forecast variances `S_t`.
    pub s: Vec<f64>,
    pub k: Vec<f64>,
    /// Posterior means `m_t`.
    pub m: Vec<f64>,
    /// Posterior variances `C_t`.
    pub c: Vec<f64>,
}

impl KalmanTrace {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// `n` deterministic quantile points `m_t + √C_t Φ⁻¹((k - ½)/n)` of the
    /// filtering law at time `t` (1-based).
    pub fn quantile_points(&self, t: usize, n: usize) -> Vec<f64> {
        let (m, sd) = (self.m[t - 1], self.c[t - 1].sqrt());
        (1..=n)
            .map(|k| m + sd * norm_ppf((k as f64 - 0.5) / n as f64))
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,a,R,f,S,K,m,C")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                i + 1,
                self.a[i],
                self.r[i],
                self.f[i],
                self.s[i],
                self.k[i],
                self.m[i],
                self.c[i]
            )?;
        }
        Ok(())
    }
}

pub fn kalman_filter(y: &[f64], p: &LGParams, m0: f64, c0: f64) -> Result<KalmanTrace> {
    p.validate()?;
    if !(c0 > 0.0) {
        return Err(Error::domain(format!(
            "initial variance C0 = {c0} must be positive"
        )));
    }
    let n = y.len();
    let mut tr = KalmanTrace {
        m0,
        c0,
        a: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
    };
    let (vx, vy) = (p.sigma_x * p.sigma_x, p.sigma_y * p.sigma_y);
    let (mut m, mut c) = (m0, c0);
    for (t, &yt) in y.iter().enumerate() {
        let a = p.phi * m;
        let r = p.phi * p.phi * c + vx;
        let s = r + vy;
        let k = r / s;
        m = a + k * (yt - a);
        c = (1.0 - k) * r;
        if !(c > 0.0 && r >= c && c.is_finite()) {
            return Err(Error::Numerical(format!(
                "Kalman variance C_{} = {c} not positive",
                t + 1
            )));
        }
        tr.a.push(a);
        tr.r.push(r);
        tr.f.push(a);
        tr.s.push(s);
        tr.k.push(k);
        tr.m.push(m);
        tr.c.push(c);
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_step() {
        let p = LGParams::new(1.0, 0.0, 1.0).unwrap();
        let tr = kalman_filter(&[2.0], &p, 0.0, 1.0).unwrap();
        assert!((tr.m[0] - 1.0).abs() < 1e-15);
        assert!((tr.c[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uninformative_observations() {
        let p = LGParams::new(0.9, 0.2, 1e6).unwrap();
        let y = [3.0, -1.0, 2.0, 0.5];
        let tr = kalman_filter(&y, &p, 0.5, 0.3).unwrap();
        for i in 0..y.len() {
            assert!(((tr.m[i] - tr.a[i]) / tr.a[i]).abs() < 1e-6);
            assert!(((tr.c[i] - tr.r[i]) / tr.r[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_nonpositive_c0() {
        let p = LGParams::new(0.9, 0.2, 1.0).unwrap();
        assert!(kalman_filter(&[1.0], &p, 0.0, 0.0).is_err());
    }

    #[test]
    fn quantile_points_are_centred() {
        let p = LGParams::new(0.9, 0.2, 1.0).unwrap();
        let tr = kalman_filter(&[1.0, 2.0], &p, 0.0, 1.0).unwrap();
        let q = tr.quantile_points(2, 1001);
        assert!((q[500] - tr.m[1]).abs() < 1e-12);
    }
}
