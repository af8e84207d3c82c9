use super::Segment;
use crate::error::{HadlError, Result};
use crate::tensor::Tensor3;

/// Paired lookback inputs and horizon targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// `batch × channels × L`
    pub inputs: Tensor3,
    /// `batch × channels × H`
    pub targets: Tensor3,
    /// Absolute start timestep of each window's inputs.
    pub origins: Vec<usize>,
}

impl WindowBatch {
    pub fn new(inputs: Tensor3, targets: Tensor3, origins: Vec<usize>) -> Result<Self> {
        if inputs.batch() != targets.batch()
            || inputs.channels() != targets.channels()
            || origins.len() != inputs.batch()
        {
            return Err(HadlError::ShapeMismatch(format!(
                "inputs {:?}, targets {:?}, {} origins",
                inputs.shape(),
                targets.shape(),
                origins.len()
            )));
        }
        Ok(Self {
            inputs,
            targets,
            origins,
        })
    }
}

/// Anything that can hand out windows by index.
pub trait WindowSource {
    fn n_windows(&self) -> usize;
    fn channels(&self) -> usize;
    fn lookback(&self) -> usize;
    fn horizon(&self) -> usize;
    fn batch(&self, indices: &[usize]) -> WindowBatch;
}

/// Sliding windows over a segment, in origin order.
#[derive(Debug, Clone)]
pub struct Windows {
    segment: Segment,
    lookback: usize,
    horizon: usize,
    origins: Vec<usize>,
}

impl Windows {
    /// Targets stay inside `[segment.start, segment.end)`; inputs may reach at
    /// most `lookback` steps before `segment.start` when the segment allows it.
    pub fn new(segment: Segment, lookback: usize, horizon: usize, stride: usize) -> Result<Self> {
        if lookback == 0 || horizon == 0 || stride == 0 {
            return Err(HadlError::Config("lookback, horizon and stride must be positive".into()));
        }
        let first = segment.start().saturating_sub(lookback).max(segment.context_start());
        let span = segment.end() - first;
        let needed = lookback + horizon;
        if span < needed {
            return Err(HadlError::SegmentTooShort { len: span, needed });
        }
        let origins = (first..=segment.end() - needed).step_by(stride).collect();
        Ok(Self {
            segment,
            lookback,
            horizon,
            origins,
        })
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn segment(&self) -> &Segment {
        &self.segment
    }

    /// Consecutive batches of at most `size` windows.
    pub fn iter_batches(&self, size: usize) -> impl Iterator<Item = WindowBatch> + '_ {
        let idx: Vec<usize> = (0..self.len()).collect();
        let size = size.max(1);
        (0..idx.len().div_ceil(size)).map(move |k| {
            let end = ((k + 1) * size).min(idx.len());
            self.batch(&idx[k * size..end])
        })
    }
}

impl WindowSource for Windows {
    fn n_windows(&self) -> usize {
        self.origins.len()
    }

    fn channels(&self) -> usize {
        self.segment.channels()
    }

    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn batch(&self, indices: &[usize]) -> WindowBatch {
        let c = self.channels();
        let (l, h) = (self.lookback, self.horizon);
        let mut inputs = Tensor3::zeros(indices.len(), c, l);
        let mut targets = Tensor3::zeros(indices.len(), c, h);
        let series = self.segment.series();
        let mut origins = Vec::with_capacity(indices.len());
        for (b, &i) in indices.iter().enumerate() {
            let t = self.origins[i];
            origins.push(t);
            for ch in 0..c {
                let row = series.channel(ch);
                inputs.row_mut(b, ch).copy_from_slice(&row[t..t + l]);
                targets.row_mut(b, ch).copy_from_slice(&row[t + l..t + l + h]);
            }
        }
        WindowBatch {
            inputs,
            targets,
            origins,
        }
    }
}

impl WindowSource for WindowBatch {
    fn n_windows(&self) -> usize {
        self.inputs.batch()
    }

    fn channels(&self) -> usize {
        self.inputs.channels()
    }

    fn lookback(&self) -> usize {
        self.inputs.len()
    }

    fn horizon(&self) -> usize {
        self.targets.len()
    }

    fn batch(&self, indices: &[usize]) -> WindowBatch {
        let c = self.channels();
        let mut inputs = Tensor3::zeros(indices.len(), c, self.lookback());
        let mut targets = Tensor3::zeros(indices.len(), c, self.horizon());
        for (b, &i) in indices.iter().enumerate() {
            for ch in 0..c {
                inputs.row_mut(b, ch).copy_from_slice(self.inputs.row(i, ch));
                targets.row_mut(b, ch).copy_from_slice(self.targets.row(i, ch));
            }
        }
        WindowBatch {
            inputs,
            targets,
            origins: indices.iter().map(|&i| self.origins[i]).collect(),
        }
    }
}
