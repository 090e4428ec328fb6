use std::sync::OnceLock;

use crate::util::{mean, quantile_sorted, sorted, var};
use crate::{Error, Result};

/// Nonempty finite sample with a lazily sorted copy.
#[derive(Debug, Clone)]
pub struct SampleSet {
    values: Vec<f64>,
    sorted: OnceLock<Vec<f64>>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("sample value {i} is not finite")));
        }
        Ok(Self {
            values,
            sorted: OnceLock::new(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        self.sorted.get_or_init(|| sorted(&self.values))
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Sample standard deviation (divisor `n - 1`).
    pub fn sd(&self) -> f64 {
        var(&self.values).sqrt()
    }

    /// Linearly interpolated empirical quantile.
    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(self.sorted(), p)
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            sorted: OnceLock::new(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * a).collect(),
            sorted: OnceLock::new(),
        }
    }
}

impl PartialEq for SampleSet {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl TryFrom<Vec<f64>> for SampleSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}
