//! Loss functions shared by training (through the graph) and evaluation.
//!
//! The graph's fused KLD and BCE nodes call straight into [`kld`] and
//! [`bce_with_logits`], so a loss reported during training and the same
//! metric computed at evaluation time agree to the last bit.

use crate::autograd::sigmoid;
use crate::tensor::TensorError;

/// Smoothing added inside both logarithms of the KL divergence.
pub const KLD_EPS: f64 = 1e-8;

/// Largest tolerated deviation of a distribution's sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-3;

/// Which distribution weights the log-ratio terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KldDirection {
    /// `sum target * (log target - log pred)`
    #[default]
    TargetWeighted,
    /// `sum pred * (log pred - log target)`
    PredWeighted,
}

impl KldDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            KldDirection::TargetWeighted => "target",
            KldDirection::PredWeighted => "pred",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "target" => Some(KldDirection::TargetWeighted),
            "pred" => Some(KldDirection::PredWeighted),
            _ => None,
        }
    }
}

pub fn check_distribution(p: &[f64]) -> Result<(), TensorError> {
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOLERANCE || !s.is_finite() {
        return Err(TensorError::NotADistribution(s));
    }
    Ok(())
}

/// Smoothed KL divergence between `pred` and `target`, both on the simplex.
/// Terms with zero weight contribute zero (`0 ln 0 = 0`).
pub fn kld(pred: &[f64], target: &[f64], eps: f64, direction: KldDirection) -> Result<f64, TensorError> {
    check_distribution(pred)?;
    check_distribution(target)?;
    let (w, other) = match direction {
        KldDirection::TargetWeighted => (target, pred),
        KldDirection::PredWeighted => (pred, target),
    };
    Ok(w.iter()
        .zip(other)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else {
                a * ((a + eps).ln() - (b + eps).ln())
            }
        })
        .sum())
}

/// `d kld / d pred`.
pub fn kld_grad(pred: &[f64], target: &[f64], eps: f64, direction: KldDirection) -> Vec<f64> {
    match direction {
        KldDirection::TargetWeighted => pred.iter().zip(target).map(|(p, t)| -t / (p + eps)).collect(),
        KldDirection::PredWeighted => pred
            .iter()
            .zip(target)
            .map(|(p, t)| (p + eps).ln() - (t + eps).ln() + p / (p + eps))
            .collect(),
    }
}

/// Mean binary cross-entropy in the overflow-free logit form
/// `max(x, 0) - x*y + ln(1 + exp(-|x|))`.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> f64 {
    let n = logits.len().max(1) as f64;
    logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
        .sum::<f64>()
        / n
}

pub fn bce_with_logits_grad(logits: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = logits.len().max(1) as f64;
    logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| (sigmoid(x) - y) / n)
        .collect()
}

/// Euclidean distance between predicted and target CoM. Not squared.
pub fn com_l2(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Relative weights of the three supervision terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pressure: f64,
    pub contact: f64,
    pub com: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pressure: 1.0,
            contact: 1.0,
            com: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("pressure", self.pressure),
            ("contact", self.contact),
            ("com", self.com),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!(
                    "loss weight {name} must be a finite nonnegative number, got {v}"
                ));
            }
        }
        Ok(())
    }
}

/// Per-sample loss terms. A missing term (airborne frame, no CoM label)
/// contributes nothing to the total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub pressure: Option<f64>,
    pub contact: f64,
    pub com: Option<f64>,
}

impl LossComponents {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.pressure * self.pressure.unwrap_or(0.0) + w.contact * self.contact + w.com * self.com.unwrap_or(0.0)
    }
}
