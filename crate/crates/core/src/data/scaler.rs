use serde::{Deserialize, Serialize};

use super::SeriesTensor;
use crate::error::{HadlError, Result};
use crate::tensor::Matrix;

/// Per-channel z-score with population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits on timesteps `[start, end)` only.
    pub fn fit(series: &SeriesTensor, start: usize, end: usize) -> Result<Self> {
        if end <= start || end > series.timesteps() {
            return Err(HadlError::Empty("scaler fit range"));
        }
        let n = (end - start) as f64;
        let mut mean = Vec::with_capacity(series.channels());
        let mut std = Vec::with_capacity(series.channels());
        for c in 0..series.channels() {
            let x = &series.channel(c)[start..end];
            let m = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            if !(s > 0.0 && s.is_finite()) || s <= 1e-12 * m.abs() {
                return Err(HadlError::ConstantChannel(c));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(Self { mean, std })
    }

    fn check(&self, series: &SeriesTensor) -> Result<()> {
        if series.channels() != self.mean.len() {
            return Err(HadlError::ShapeMismatch(format!(
                "scaler fitted on {} channels, series has {}",
                self.mean.len(),
                series.channels()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, series: &SeriesTensor) -> Result<SeriesTensor> {
        self.check(series)?;
        let values = Matrix::from_fn(series.channels(), series.timesteps(), |c, t| {
            (series.values.get(c, t) - self.mean[c]) / self.std[c]
        });
        SeriesTensor::new(series.names.clone(), values)
    }

    pub fn inverse(&self, series: &SeriesTensor) -> Result<SeriesTensor> {
        self.check(series)?;
        let values = Matrix::from_fn(series.channels(), series.timesteps(), |c, t| {
            series.values.get(c, t) * self.std[c] + self.mean[c]
        });
        SeriesTensor::new(series.names.clone(), values)
    }
}
