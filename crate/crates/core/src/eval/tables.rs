//! Aggregate result tables in CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub method: String,
    pub rmse: f64,
    pub cov75: f64,
    pub cov90: f64,
    pub cov95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub method: String,
    pub wasserstein: f64,
    pub mmd: f64,
    pub energy: f64,
    pub mean_diff: f64,
    pub std_diff: f64,
}

pub fn write_accuracy_table<W: Write>(mut w: W, rows: &[AccuracyRow]) -> Result<()> {
    writeln!(w, "method,rmse,cov75,cov90,cov95")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.method, r.rmse, r.cov75, r.cov90, r.cov95
        )?;
    }
    Ok(())
}

pub fn write_distance_table<W: Write>(mut w: W, rows: &[DistanceRow]) -> Result<()> {
    writeln!(w, "method,wasserstein,mmd,energy,mean_diff,std_diff")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.method, r.wasserstein, r.mmd, r.energy, r.mean_diff, r.std_diff
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        let mut buf = Vec::new();
        write_accuracy_table(
            &mut buf,
            &[AccuracyRow {
                method: "kalman".into(),
                rmse: 0.347,
                cov75: 0.75,
                cov90: 0.9,
                cov95: 0.95,
            }],
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "method,rmse,cov75,cov90,cov95");
        assert!(s.contains("kalman,0.347000,"));
    }
}
