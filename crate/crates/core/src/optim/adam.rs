use super::{ParamGrads, TrainConfig};
use crate::error::{HadlError, Result};

/// First/second moment estimates for each parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[&[f64]]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// One bias-corrected ADAM update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &ParamGrads, cfg: &TrainConfig) -> Result<()> {
        if params.len() != self.m.len()
            || grads.tensors.len() != self.m.len()
            || params
                .iter()
                .zip(&grads.tensors)
                .zip(&self.m)
                .any(|((p, g), m)| p.len() != m.len() || g.len() != m.len())
        {
            return Err(HadlError::ShapeMismatch(
                "optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}
