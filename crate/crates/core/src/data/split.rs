use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Dataset, Scaler, SeriesTensor, Windows};
use crate::error::{HadlError, Result};

/// How a series is cut into train / validation / test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Convention {
    /// Hourly ETT files: 12/4/4 months of 30 days (8640/2880/2880 steps).
    EttHour,
    /// 15-minute ETT files: 34560/11520/11520 steps.
    EttMinute,
    /// Fractions of the whole series; the test share is taken first and the
    /// validation segment gets the remainder.
    Ratio { train: f64, test: f64 },
}

impl Convention {
    pub const DEFAULT_RATIO: Convention = Convention::Ratio { train: 0.7, test: 0.2 };

    /// Convention implied by a dataset name.
    pub fn for_dataset(name: &str) -> Self {
        let lower = name.to_ascii_lowercase();
        if lower.starts_with("etth") {
            Convention::EttHour
        } else if lower.starts_with("ettm") {
            Convention::EttMinute
        } else {
            Self::DEFAULT_RATIO
        }
    }
}

impl FromStr for Convention {
    type Err = HadlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ett_hour" | "etth" => Ok(Convention::EttHour),
            "ett_minute" | "ettm" => Ok(Convention::EttMinute),
            "ratio" | "custom" => Ok(Self::DEFAULT_RATIO),
            _ => Err(HadlError::UnknownConvention(s.to_string())),
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Convention::EttHour => f.write_str("ett_hour"),
            Convention::EttMinute => f.write_str("ett_minute"),
            Convention::Ratio { train, test } => write!(f, "ratio({train},{test})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train_end: usize,
    pub val_end: usize,
    pub test_end: usize,
}

impl SplitBounds {
    pub fn lengths(&self) -> (usize, usize, usize) {
        (
            self.train_end,
            self.val_end - self.train_end,
            self.test_end - self.val_end,
        )
    }

    pub fn for_convention(convention: Convention, timesteps: usize) -> Result<Self> {
        let (train, val, test) = match convention {
            Convention::EttHour => (8640, 2880, 2880),
            Convention::EttMinute => (34560, 11520, 11520),
            Convention::Ratio { train, test } => {
                let n_train = (timesteps as f64 * train) as usize;
                let n_test = (timesteps as f64 * test) as usize;
                (n_train, timesteps.saturating_sub(n_train + n_test), n_test)
            }
        };
        if train == 0 || val == 0 || test == 0 || train + val + test > timesteps {
            return Err(HadlError::Config(format!(
                "{timesteps} timesteps cannot be split as {convention}"
            )));
        }
        Ok(Self {
            train_end: train,
            val_end: train + val,
            test_end: train + val + test,
        })
    }
}

/// A contiguous range of a series whose targets lie in `[start, end)`.
///
/// Inputs may read back as far as `context_start`, which lets validation and
/// test windows borrow their lookback from the preceding segment.
#[derive(Debug, Clone)]
pub struct Segment {
    pub name: String,
    series: Arc<SeriesTensor>,
    start: usize,
    end: usize,
    context_start: usize,
}

impl Segment {
    pub fn new(name: impl Into<String>, series: Arc<SeriesTensor>, start: usize, end: usize, context_start: usize) -> Result<Self> {
        if !(context_start <= start && start <= end && end <= series.timesteps()) {
            return Err(HadlError::ShapeMismatch(format!(
                "segment [{context_start}..{start}..{end}) outside series of {} steps",
                series.timesteps()
            )));
        }
        Ok(Self {
            name: name.into(),
            series,
            start,
            end,
            context_start,
        })
    }

    /// A segment covering a whole series with no borrowed context.
    pub fn whole(name: impl Into<String>, series: SeriesTensor) -> Self {
        let end = series.timesteps();
        Self {
            name: name.into(),
            series: Arc::new(series),
            start: 0,
            end,
            context_start: 0,
        }
    }

    pub fn series(&self) -> &SeriesTensor {
        &self.series
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn context_start(&self) -> usize {
        self.context_start
    }

    /// Own timesteps, not counting borrowed context.
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn channels(&self) -> usize {
        self.series.channels()
    }

    /// Own values of channel `c`.
    pub fn values(&self, c: usize) -> &[f64] {
        &self.series.channel(c)[self.start..self.end]
    }

    pub fn windows(&self, lookback: usize, horizon: usize, stride: usize) -> Result<Windows> {
        Windows::new(self.clone(), lookback, horizon, stride)
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub bounds: SplitBounds,
    pub train: Segment,
    pub val: Segment,
    pub test: Segment,
    pub scaler: Option<Scaler>,
}

/// Cuts a dataset into train / validation / test views without rescaling.
pub fn split(dataset: &Dataset, convention: Convention) -> Result<Splits> {
    let series = Arc::new(dataset.series.clone());
    build(&dataset.name, series, convention, dataset.series.timesteps(), None)
}

/// Splits, then (optionally) standardizes every segment with statistics
/// fitted on the training segment alone.
pub fn prepare_splits(dataset: &Dataset, convention: Convention, standardize: bool) -> Result<Splits> {
    let bounds = SplitBounds::for_convention(convention, dataset.series.timesteps())?;
    if !standardize {
        return split(dataset, convention);
    }
    let scaler = Scaler::fit(&dataset.series, 0, bounds.train_end)?;
    let scaled = Arc::new(scaler.transform(&dataset.series)?);
    build(&dataset.name, scaled, convention, dataset.series.timesteps(), Some(scaler))
}

fn build(
    name: &str,
    series: Arc<SeriesTensor>,
    convention: Convention,
    timesteps: usize,
    scaler: Option<Scaler>,
) -> Result<Splits> {
    let b = SplitBounds::for_convention(convention, timesteps)?;
    Ok(Splits {
        bounds: b,
        train: Segment::new(format!("{name}/train"), series.clone(), 0, b.train_end, 0)?,
        val: Segment::new(format!("{name}/val"), series.clone(), b.train_end, b.val_end, 0)?,
        test: Segment::new(format!("{name}/test"), series, b.val_end, b.test_end, 0)?,
        scaler,
    })
}
