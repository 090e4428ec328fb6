//! Filtering output: per-step posterior draws plus diagnostics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::SampleSet;
use crate::util::{mean, quantile_sorted, sorted, var};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: usize,
    /// Final-epoch training loss (standardized units) when a map was trained.
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub epochs: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterWarning {
    pub t: usize,
    pub message: String,
}

/// Draws of `x_t` for `t = 1..=T`; `draws[t - 1]` holds step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    pub draws: Vec<Vec<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub warnings: Vec<FilterWarning>,
}

impl FilterOutput {
    pub(crate) fn with_capacity(horizon: usize) -> Self {
        Self {
            draws: Vec::with_capacity(horizon),
            diagnostics: Vec::with_capacity(horizon),
            warnings: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    /// Draws at step `t` (1-based).
    pub fn at(&self, t: usize) -> &[f64] {
        &self.draws[t - 1]
    }

    pub fn means(&self) -> Vec<f64> {
        self.draws.iter().map(|d| mean(d)).collect()
    }

    pub fn sample_sets(&self) -> Result<Vec<SampleSet>> {
        self.draws
            .iter()
            .map(|d| SampleSet::new(d.clone()))
            .collect()
    }

    /// Long-format draws: `t,draw_index,x`.
    pub fn write_draws_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,draw_index,x")?;
        for (i, d) in self.draws.iter().enumerate() {
            for (j, x) in d.iter().enumerate() {
                writeln!(w, "{},{},{}", i + 1, j, x)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `t,mean,sd,q05,q25,q50,q75,q95`.
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,mean,sd,q05,q25,q50,q75,q95")?;
        for (i, d) in self.draws.iter().enumerate() {
            if d.is_empty() {
                return Err(Error::EmptySample);
            }
            let s = sorted(d);
            let sd = if d.len() > 1 { var(d).sqrt() } else { 0.0 };
            let q: Vec<String> = [0.05, 0.25, 0.5, 0.75, 0.95]
                .iter()
                .map(|&p| quantile_sorted(&s, p).to_string())
                .collect();
            writeln!(w, "{},{},{},{}", i + 1, mean(d), sd, q.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// `t,train_loss,val_loss,epochs,wall_time_s` (empty cells when absent).
    pub fn write_diagnostics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,train_loss,val_loss,epochs,wall_time_s")?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for d in &self.diagnostics {
            writeln!(
                w,
                "{},{},{},{},{}",
                d.t,
                opt(d.train_loss),
                opt(d.val_loss),
                d.epochs,
                d.wall_time_s
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
