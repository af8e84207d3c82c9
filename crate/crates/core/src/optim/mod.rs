//! Loss, analytic gradients, ADAM and the early-stopping training loop.
//!
//! With `A` the transformed input rows stacked as `rows × d_in`, `Ŷ = A·P·Q + b`
//! and `G = 2·(Ŷ − Y)/count`:
//!
//! ```text
//! dP = Aᵀ·G·Qᵀ + λ·sign(P)
//! dQ = (A·P)ᵀ·G + λ·sign(Q)
//! db = Σ_rows G
//! ```
//!
//! For a dense head `dW = Aᵀ·G + λ·sign(W)`. `sign(0) = 0`.

mod adam;
mod gradcheck;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{HadlError, Result};
use crate::model::{HadlModel, Head};
use crate::tensor::{Matrix, Tensor3};

pub use adam::AdamState;
pub use gradcheck::{gradcheck, GradcheckReport};
pub use train::{dense_gradient, evaluate, evaluate_mse, train, train_prepared, EpochRecord, Prepared, TrainTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Weight of the L1 penalty on the head weights (bias excluded).
    pub l1_lambda: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Windows per mini-batch; every window contributes all its channels.
    pub batch_size: usize,
    pub seed: u64,
    /// Std of the Gaussian noise added to the training series.
    pub noise_eta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l1_lambda: 1e-4,
            max_epochs: 100,
            patience: 20,
            batch_size: 64,
            seed: 42,
            noise_eta: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HadlError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.l1_lambda >= 0.0) || !(self.noise_eta >= 0.0) {
            return bad("l1_lambda and noise_eta must be non-negative");
        }
        if self.batch_size == 0 || self.patience == 0 {
            return bad("batch_size and patience must be positive");
        }
        if self.max_epochs > 0 && self.patience > self.max_epochs {
            return bad("patience cannot exceed max_epochs");
        }
        Ok(())
    }
}

/// Gradients in the order of [`HadlModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub tensors: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_same_shape(pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(HadlError::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.rows() == 0 || pred.cols() == 0 {
        return Err(HadlError::Empty("loss input"));
    }
    Ok(())
}

/// Mean squared error plus `λ·(‖P‖₁ + ‖Q‖₁)`.
pub fn loss(pred: &Matrix, target: &Matrix, model: &HadlModel, l1_lambda: f64) -> Result<f64> {
    check_same_shape(pred, target)?;
    let n = pred.as_slice().len() as f64;
    let sse: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sse / n + l1_lambda * model.weight_l1())
}

/// Loss and gradients on already-transformed rows `a` (`rows × d_in`).
pub fn loss_and_grads(
    model: &HadlModel,
    a: &Matrix,
    y: &Matrix,
    l1_lambda: f64,
) -> Result<(f64, ParamGrads)> {
    let (pred, z) = match model.head() {
        Head::LowRank { p, q } => {
            let z = a.matmul(p)?;
            let mut pred = z.matmul(q)?;
            add_bias(&mut pred, model.bias());
            (pred, Some(z))
        }
        Head::Dense { .. } => (model.predict_features(a)?, None),
    };
    let value = loss(&pred, y, model, l1_lambda)?;

    let scale = 2.0 / pred.as_slice().len() as f64;
    let mut g = pred;
    for (gv, t) in g.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *gv = scale * (*gv - t);
    }

    let with_l1 = |mut d: Matrix, w: &Matrix| {
        if l1_lambda != 0.0 {
            for (dv, wv) in d.as_mut_slice().iter_mut().zip(w.as_slice()) {
                *dv += l1_lambda * sign(*wv);
            }
        }
        d.into_vec()
    };

    let mut tensors = match model.head() {
        Head::LowRank { p, q } => {
            let z = z.expect("low-rank forward keeps A·P");
            let dq = z.t_matmul(&g)?;
            let gqt = g.matmul_t(q)?;
            let dp = a.t_matmul(&gqt)?;
            vec![with_l1(dp, p), with_l1(dq, q)]
        }
        Head::Dense { w } => vec![with_l1(a.t_matmul(&g)?, w)],
    };
    if model.bias().is_some() {
        tensors.push(g.column_sums());
    }
    Ok((value, ParamGrads { tensors }))
}

fn add_bias(pred: &mut Matrix, bias: Option<&[f64]>) {
    if let Some(b) = bias {
        for i in 0..pred.rows() {
            for (o, bv) in pred.row_mut(i).iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
}

/// Gradients of the loss for raw windows `x` (`batch × C × L`) and targets
/// `y` (`batch × C × H`).
pub fn gradients(model: &HadlModel, x: &Tensor3, y: &Tensor3, l1_lambda: f64) -> Result<ParamGrads> {
    let (a, t) = transformed_pair(model, x, y)?;
    Ok(loss_and_grads(model, &a, &t, l1_lambda)?.1)
}

/// Loss for raw windows; the finite-difference reference uses this.
pub fn window_loss(model: &HadlModel, x: &Tensor3, y: &Tensor3, l1_lambda: f64) -> Result<f64> {
    let (a, t) = transformed_pair(model, x, y)?;
    loss(&model.predict_features(&a)?, &t, model, l1_lambda)
}

fn transformed_pair(model: &HadlModel, x: &Tensor3, y: &Tensor3) -> Result<(Matrix, Matrix)> {
    if x.batch() != y.batch() || x.channels() != y.channels() || y.len() != model.horizon() {
        return Err(HadlError::ShapeMismatch(format!(
            "inputs {:?} and targets {:?} do not pair for horizon {}",
            x.shape(),
            y.shape(),
            model.horizon()
        )));
    }
    Ok((model.pipeline()?.transform(x)?, y.to_matrix()))
}
