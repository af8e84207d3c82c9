//! Desk-scale synthetic signals for tests and smoke runs.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, SeriesTensor, WindowBatch};
use crate::error::{HadlError, Result};
use crate::model::{HadlModel, Head, HeadKind, Variant};
use crate::tensor::{Matrix, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthKind {
    SineMix,
    LowRankTarget,
    RandomWalk,
}

impl FromStr for SynthKind {
    type Err = HadlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine_mix" => Ok(SynthKind::SineMix),
            "low_rank_target" => Ok(SynthKind::LowRankTarget),
            "random_walk" => Ok(SynthKind::RandomWalk),
            _ => Err(HadlError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub channels: usize,
    /// Series length for `sine_mix` / `random_walk`.
    pub length: usize,
    pub periods: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Std of additive white noise on `sine_mix`.
    pub noise_std: f64,
    /// Step std for `random_walk`.
    pub step_std: f64,
    // low_rank_target
    pub lookback: usize,
    pub horizon: usize,
    pub rank: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            channels: 3,
            length: 2000,
            periods: vec![24.0, 12.0],
            amplitudes: vec![1.0, 0.5],
            noise_std: 0.0,
            step_std: 1.0,
            lookback: 64,
            horizon: 16,
            rank: 2,
            n_train: 1024,
            n_val: 256,
            n_test: 256,
        }
    }
}

/// Windows whose targets come from a known model with inner rank `r*`, so
/// zero error is reachable by the low-rank head.
#[derive(Debug, Clone)]
pub struct RealizableTask {
    pub truth: HadlModel,
    pub train: WindowBatch,
    pub val: WindowBatch,
    pub test: WindowBatch,
}

#[derive(Debug, Clone)]
pub enum Synthetic {
    Series(Dataset),
    Task(RealizableTask),
}

pub fn synth(kind: &str, params: &SynthParams, seed: u64) -> Result<Synthetic> {
    let kind: SynthKind = kind.parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::SineMix => sine_mix(params, &mut rng).map(Synthetic::Series),
        SynthKind::RandomWalk => random_walk(params, &mut rng).map(Synthetic::Series),
        SynthKind::LowRankTarget => low_rank_target(params, &mut rng).map(Synthetic::Task),
    }
}

fn channel_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("ch{c}")).collect()
}

fn sine_mix(p: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    if p.periods.len() != p.amplitudes.len() || p.periods.iter().any(|&t| t <= 0.0) {
        return Err(HadlError::Config(
            "sine_mix needs one positive period per amplitude".into(),
        ));
    }
    // Channel c is phase-shifted by 2πc/C within each component.
    let mut values = Matrix::from_fn(p.channels, p.length, |c, t| {
        let phase = 2.0 * PI * c as f64 / p.channels.max(1) as f64;
        p.periods
            .iter()
            .zip(&p.amplitudes)
            .map(|(&period, &amp)| amp * (2.0 * PI * t as f64 / period + phase).sin())
            .sum()
    });
    if p.noise_std > 0.0 {
        for v in values.as_mut_slice() {
            let z: f64 = rng.sample(StandardNormal);
            *v += p.noise_std * z;
        }
    }
    Ok(Dataset {
        name: "sine_mix".into(),
        series: SeriesTensor::new(channel_names(p.channels), values)?,
        granularity: "step".into(),
    })
}

fn random_walk(p: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let mut values = Matrix::zeros(p.channels, p.length);
    for c in 0..p.channels {
        let mut x = 0.0;
        for v in values.row_mut(c) {
            let z: f64 = rng.sample(StandardNormal);
            x += p.step_std * z;
            *v = x;
        }
    }
    Ok(Dataset {
        name: "random_walk".into(),
        series: SeriesTensor::new(channel_names(p.channels), values)?,
        granularity: "step".into(),
    })
}

fn low_rank_target(p: &SynthParams, rng: &mut ChaCha8Rng) -> Result<RealizableTask> {
    let variant = Variant {
        use_haar: true,
        use_dct: true,
        head: HeadKind::LowRank(p.rank),
        bias: true,
    };
    let d_in = variant.input_dim(p.lookback)?;
    let r = p.rank.max(1);
    let mut normal = |scale: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        scale * z
    };
    let pm = Matrix::from_fn(d_in, r, |_, _| normal(1.0));
    let qm = Matrix::from_fn(r, p.horizon, |_, _| normal(1.0 / (r as f64).sqrt()));
    let bias = (0..p.horizon).map(|_| normal(0.1)).collect();
    let truth = HadlModel::from_parts(
        p.lookback,
        p.horizon,
        true,
        true,
        Head::LowRank { p: pm, q: qm },
        Some(bias),
        0,
    )?;

    let mut draw = |n: usize, offset: usize| -> Result<WindowBatch> {
        let data = (0..n * p.channels * p.lookback).map(|_| normal(1.0)).collect();
        let inputs = Tensor3::from_vec(n, p.channels, p.lookback, data)?;
        let targets = truth.forward(&inputs)?;
        WindowBatch::new(inputs, targets, (offset..offset + n).collect())
    };
    let train = draw(p.n_train, 0)?;
    let val = draw(p.n_val, p.n_train)?;
    let test = draw(p.n_test, p.n_train + p.n_val)?;
    Ok(RealizableTask {
        truth,
        train,
        val,
        test,
    })
}
