//! Dataset ingestion, canonical splits, standardization, sliding windows,
//! noise injection and synthetic generators.

mod load;
mod noise;
mod registry;
mod scaler;
mod split;
mod synth;
mod window;

use serde::{Deserialize, Serialize};

use crate::error::{HadlError, Result};
use crate::tensor::Matrix;

pub use load::{load_csv, read_csv, CsvSchema};
pub use noise::inject_noise;
pub use registry::{Registry, RegistryEntry};
pub use scaler::Scaler;
pub use split::{prepare_splits, split, Convention, Segment, SplitBounds, Splits};
pub use synth::{synth, RealizableTask, SynthKind, SynthParams, Synthetic};
pub use window::{WindowBatch, WindowSource, Windows};

/// A multivariate series stored as `channels × timesteps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTensor {
    pub names: Vec<String>,
    pub values: Matrix,
}

impl SeriesTensor {
    pub fn new(names: Vec<String>, values: Matrix) -> Result<Self> {
        if names.len() != values.rows() {
            return Err(HadlError::ShapeMismatch(format!(
                "{} channel names for {} channels",
                names.len(),
                values.rows()
            )));
        }
        Ok(Self { names, values })
    }

    pub fn channels(&self) -> usize {
        self.values.rows()
    }

    pub fn timesteps(&self) -> usize {
        self.values.cols()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        self.values.row(c)
    }

    /// Copy of timesteps `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> SeriesTensor {
        let values = Matrix::from_fn(self.channels(), end - start, |c, t| self.values.get(c, start + t));
        SeriesTensor {
            names: self.names.clone(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub series: SeriesTensor,
    pub granularity: String,
}

/// Reference facts for the public benchmark files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownDataset {
    pub name: &'static str,
    pub features: usize,
    pub timesteps: usize,
    pub granularity: &'static str,
}

pub const KNOWN_DATASETS: &[KnownDataset] = &[
    KnownDataset { name: "ETTh1", features: 7, timesteps: 17420, granularity: "1 hour" },
    KnownDataset { name: "ETTh2", features: 7, timesteps: 17420, granularity: "1 hour" },
    KnownDataset { name: "ETTm1", features: 7, timesteps: 69680, granularity: "15 min" },
    KnownDataset { name: "ETTm2", features: 7, timesteps: 69680, granularity: "15 min" },
    KnownDataset { name: "Weather", features: 21, timesteps: 52697, granularity: "10 min" },
    KnownDataset { name: "Traffic", features: 862, timesteps: 17544, granularity: "1 hour" },
    KnownDataset { name: "Electricity", features: 321, timesteps: 26304, granularity: "15 min" },
];

pub fn known_dataset(name: &str) -> Option<&'static KnownDataset> {
    KNOWN_DATASETS.iter().find(|d| d.name.eq_ignore_ascii_case(name))
}
