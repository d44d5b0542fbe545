//! Validated real-valued series and the moment helpers shared by the
//! association and estimation code.

use std::ops::Deref;

use crate::error::{Error, Result};

/// An ordered, finite, real-valued series of at least two samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewSamples(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Signal(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        mean(&self.0)
    }

    /// Population standard deviation (divisor `n`).
    pub fn sd(&self) -> f64 {
        population_sd(&self.0)
    }

    /// Returns `true` when every sample is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl Deref for Signal {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Signal::new(values)
    }
}

impl TryFrom<&[f64]> for Signal {
    type Error = Error;

    fn try_from(values: &[f64]) -> Result<Self> {
        Signal::new(values.to_vec())
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn population_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Mean and population sd, or `ZeroVariance` when the slice is constant.
pub(crate) fn moments(v: &[f64]) -> Result<(f64, f64)> {
    let m = mean(v);
    let sd = population_sd(v);
    // Constant slices can leave a rounding residue in the sd.
    if sd == 0.0 || v.iter().all(|&x| x == v[0]) {
        return Err(Error::ZeroVariance);
    }
    Ok((m, sd))
}

/// Centers to mean 0 and scales to population sd 1.
pub fn standardize(x: &Signal) -> Result<Signal> {
    let (m, sd) = moments(x)?;
    Ok(Signal(x.iter().map(|v| (v - m) / sd).collect()))
}
