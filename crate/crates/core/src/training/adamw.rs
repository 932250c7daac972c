//! AdamW with decoupled weight decay and bias-corrected moments.

use crate::model::ParamStore;
use crate::tensor::TensorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One update of a single parameter buffer. `step` is the 1-based step
/// number used for bias correction.
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &AdamWConfig,
) -> Result<(), TensorError> {
    if grad.len() != param.len() || m.len() != param.len() || v.len() != param.len() {
        return Err(TensorError::ShapeMismatch {
            op: "adamw_step",
            left: vec![param.len()],
            right: vec![grad.len(), m.len(), v.len()],
        });
    }
    assert!(step >= 1, "bias correction needs step >= 1");
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        let decayed = param[i] - cfg.lr * cfg.weight_decay * param[i];
        param[i] = decayed - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Moment buffers for every tensor of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        OptimizerState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Applies one update from the gradients stored on the parameters.
    /// Parameters without a gradient are treated as having zero gradient.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<(), TensorError> {
        if params.len() != self.first.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adamw_step",
                left: vec![params.len()],
                right: vec![self.first.len()],
            });
        }
        self.step += 1;
        for (i, (_, t)) in params.iter_mut().enumerate() {
            let grad = t.grad.take().unwrap_or_else(|| vec![0.0; t.len()]);
            adamw_update(
                t.data_mut(),
                &grad,
                &mut self.first[i],
                &mut self.second[i],
                self.step,
                &self.config,
            )?;
        }
        Ok(())
    }
}
