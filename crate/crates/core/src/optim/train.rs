use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grads, AdamState, TrainConfig};
use crate::data::WindowSource;
use crate::error::{HadlError, Result};
use crate::model::{FeaturePipeline, HadlModel};
use crate::tensor::Matrix;

/// Windows pushed through the (parameter-free) transforms once.
///
/// Window `i` occupies rows `i·C .. (i+1)·C` of both matrices.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub features: Matrix,
    pub targets: Matrix,
    pub channels: usize,
}

impl Prepared {
    pub fn from_source(pipeline: &FeaturePipeline, source: &dyn WindowSource) -> Result<Self> {
        if source.lookback() != pipeline.lookback() {
            return Err(HadlError::ShapeMismatch(format!(
                "windows have lookback {}, model expects {}",
                source.lookback(),
                pipeline.lookback()
            )));
        }
        let n = source.n_windows();
        let c = source.channels();
        let mut features = Matrix::zeros(n * c, pipeline.output_dim());
        let mut targets = Matrix::zeros(n * c, source.horizon());
        const CHUNK: usize = 256;
        let mut start = 0;
        while start < n {
            let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
            let batch = source.batch(&idx);
            for (k, row) in batch.inputs.rows().enumerate() {
                pipeline.transform_row(row, features.row_mut(start * c + k));
            }
            for (k, row) in batch.targets.rows().enumerate() {
                targets.row_mut(start * c + k).copy_from_slice(row);
            }
            start += idx.len();
        }
        Ok(Self {
            features,
            targets,
            channels: c,
        })
    }

    pub fn n_windows(&self) -> usize {
        if self.channels == 0 {
            0
        } else {
            self.features.rows() / self.channels
        }
    }

    fn gather(&self, windows: &[usize]) -> (Matrix, Matrix) {
        let c = self.channels;
        let mut a = Matrix::zeros(windows.len() * c, self.features.cols());
        let mut y = Matrix::zeros(windows.len() * c, self.targets.cols());
        for (k, &w) in windows.iter().enumerate() {
            for ch in 0..c {
                a.row_mut(k * c + ch).copy_from_slice(self.features.row(w * c + ch));
                y.row_mut(k * c + ch).copy_from_slice(self.targets.row(w * c + ch));
            }
        }
        (a, y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned; `None` if no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_mse: Option<f64>,
    pub stopped_early: bool,
    /// Norm of the full-batch training gradient at the returned parameters.
    pub final_grad_norm: f64,
}

impl TrainTrace {
    /// Columns `epoch,train_loss,val_mse`, preceded by `# key=value` lines.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[(String, String)]) -> Result<()> {
        for (k, v) in header {
            writeln!(w, "# {k}={v}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "train_loss", "val_mse"])?;
        for e in &self.epochs {
            out.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.val_mse.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean squared error of `model` over prepared windows.
pub fn evaluate_mse(model: &HadlModel, data: &Prepared) -> Result<f64> {
    Ok(evaluate(model, data)?.0)
}

/// `(mse, mae)` over prepared windows.
pub fn evaluate(model: &HadlModel, data: &Prepared) -> Result<(f64, f64)> {
    let pred = model.predict_features(&data.features)?;
    if pred.as_slice().is_empty() {
        return Err(HadlError::Empty("evaluation set"));
    }
    let n = pred.as_slice().len() as f64;
    let (mut sse, mut sae) = (0.0, 0.0);
    for (p, t) in pred.as_slice().iter().zip(data.targets.as_slice()) {
        let d = p - t;
        sse += d * d;
        sae += d.abs();
    }
    Ok((sse / n, sae / n))
}

/// `∇_W = Aᵀ·G` of the unregularized loss at the model's effective map
/// `W = P·Q`, over all prepared windows.
pub fn dense_gradient(model: &HadlModel, data: &Prepared) -> Result<Matrix> {
    let mut g = model.predict_features(&data.features)?;
    let scale = 2.0 / g.as_slice().len() as f64;
    for (gv, t) in g.as_mut_slice().iter_mut().zip(data.targets.as_slice()) {
        *gv = scale * (*gv - t);
    }
    data.features.t_matmul(&g)
}

/// Transforms both window sets with the model's pipeline and trains.
pub fn train(
    model: HadlModel,
    train: &dyn WindowSource,
    val: &dyn WindowSource,
    config: &TrainConfig,
) -> Result<(HadlModel, TrainTrace)> {
    if train.n_windows() == 0 {
        return Err(HadlError::EmptyData("training"));
    }
    if val.n_windows() == 0 {
        return Err(HadlError::EmptyData("validation"));
    }
    let pipeline = model.pipeline()?;
    let train = Prepared::from_source(&pipeline, train)?;
    let val = Prepared::from_source(&pipeline, val)?;
    train_prepared(model, &train, &val, config)
}

/// Mini-batch ADAM with per-epoch validation and early stopping.
///
/// Window order is reshuffled every epoch from a generator seeded with
/// `config.seed`. The parameters of the epoch with the lowest validation MSE
/// are returned; training stops after `patience` epochs without a strict
/// improvement.
pub fn train_prepared(
    mut model: HadlModel,
    train: &Prepared,
    val: &Prepared,
    config: &TrainConfig,
) -> Result<(HadlModel, TrainTrace)> {
    config.validate()?;
    if train.n_windows() == 0 {
        return Err(HadlError::EmptyData("training"));
    }
    if val.n_windows() == 0 {
        return Err(HadlError::EmptyData("validation"));
    }
    let mut trace = TrainTrace::default();
    if config.max_epochs == 0 {
        return Ok((model, trace));
    }

    let mut adam = AdamState::new(&model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.n_windows()).collect();
    let mut best: Option<(f64, HadlModel)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (a, y) = train.gather(chunk);
            let (value, grads) = loss_and_grads(&model, &a, &y, config.l1_lambda)?;
            adam.step(&mut model.params_mut(), &grads, config)?;
            weighted += value * chunk.len() as f64;
        }
        let val_mse = evaluate_mse(&model, val)?;
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss: weighted / order.len() as f64,
            val_mse,
        });

        if best.as_ref().is_none_or(|(b, _)| val_mse < *b) {
            best = Some((val_mse, model.clone()));
            trace.best_epoch = Some(epoch);
            trace.best_val_mse = Some(val_mse);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                trace.stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let model = best.map(|(_, m)| m).unwrap_or(model);
    let (_, grads) = loss_and_grads(&model, &train.features, &train.targets, config.l1_lambda)?;
    trace.final_grad_norm = grads.norm();
    Ok((model, trace))
}
