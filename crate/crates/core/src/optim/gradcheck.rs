use serde::Serialize;

use super::{gradients, window_loss};
use crate::error::{HadlError, Result};
use crate::model::HadlModel;
use crate::tensor::Tensor3;

/// Denominator floor for the relative error, so exactly-zero gradients
/// compare on an absolute scale.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub n_params: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    /// `(tensor name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares analytic gradients with central differences
/// `(f(θ+h) − f(θ−h)) / 2h`, one parameter at a time.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn gradcheck(
    model: &HadlModel,
    x: &Tensor3,
    y: &Tensor3,
    l1_lambda: f64,
    step: f64,
    tolerance: f64,
) -> Result<GradcheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(HadlError::InvalidStep(step));
    }
    let analytic = gradients(model, x, y, l1_lambda)?;
    let names = model.param_names();
    let mut probe = model.clone();

    let mut n_params = 0;
    let mut max_err = 0.0f64;
    let mut sum_err = 0.0;
    let mut worst = None;
    for (t, grad) in analytic.tensors.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let orig = model.params()[t][i];
            probe.params_mut()[t][i] = orig + step;
            let plus = window_loss(&probe, x, y, l1_lambda)?;
            probe.params_mut()[t][i] = orig - step;
            let minus = window_loss(&probe, x, y, l1_lambda)?;
            probe.params_mut()[t][i] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            n_params += 1;
            sum_err += err;
            if err > max_err || worst.is_none() {
                max_err = max_err.max(err);
                worst = Some((names[t].to_string(), i));
            }
        }
    }
    let mean = if n_params > 0 { sum_err / n_params as f64 } else { 0.0 };
    Ok(GradcheckReport {
        n_params,
        max_rel_error: max_err,
        mean_rel_error: mean,
        worst,
        tolerance,
        passed: max_err < tolerance,
    })
}
