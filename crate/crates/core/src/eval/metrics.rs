use super::EvalError;
use crate::tensor::TensorError;
use crate::training::loss::{kld, KldDirection, KLD_EPS};

/// Per-frame pressure KLD, the same function the training loss uses.
pub fn kld_metric(pred: &[f64], gt: &[f64]) -> Result<f64, TensorError> {
    kld(pred, gt, KLD_EPS, KldDirection::TargetWeighted)
}

/// Region-level confusion counts accumulated over frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContactConfusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// Some ratio had a zero denominator and was set to 0.
    pub degenerate: bool,
}

impl ContactConfusion {
    pub fn add(&mut self, pred: &[bool], gt: &[bool]) -> Result<(), EvalError> {
        if pred.len() != gt.len() {
            return Err(EvalError::LengthMismatch(pred.len(), gt.len()));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            match (p, g) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => self.tn += 1,
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> ContactMetrics {
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_);
        let iou = ratio(self.tp, self.tp + self.fp + self.fn_);
        ContactMetrics {
            degenerate: precision.is_none() || recall.is_none() || f1.is_none(),
            precision: precision.unwrap_or(0.0),
            recall: recall.unwrap_or(0.0),
            f1: f1.unwrap_or(0.0),
            iou: iou.unwrap_or(0.0),
        }
    }
}

pub fn contact_metrics(pred: &[bool], gt: &[bool]) -> Result<ContactMetrics, EvalError> {
    let mut c = ContactConfusion::default();
    c.add(pred, gt)?;
    Ok(c.metrics())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::loss::KLD_EPS;
    use crate::Graph;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn kld_examples() {
        assert_eq!(kld_metric(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_abs_diff_eq!(kld_metric(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 2f64.ln(), epsilon = 1e-7);
        assert!(kld_metric(&[0.5, 0.6], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn metric_matches_the_loss_node_bitwise() {
        let pred = [0.1, 0.2, 0.3, 0.4];
        let gt = [0.25, 0.25, 0.0, 0.5];
        let mut g = Graph::new();
        let p = g.constant(crate::Tensor::row(&pred));
        let l = g.kl_divergence(p, &gt, KLD_EPS, KldDirection::TargetWeighted).unwrap();
        assert_eq!(
            g.value(l).data()[0].to_bits(),
            kld_metric(&pred, &gt).unwrap().to_bits()
        );
    }

    #[test]
    fn contact_examples() {
        let m = contact_metrics(&[true, false, true, true], &[true, true, true, false]).unwrap();
        assert_abs_diff_eq!(m.precision, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.recall, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.f1, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.iou, 0.5);
        assert!(!m.degenerate);
        let same = contact_metrics(&[true, false], &[true, false]).unwrap();
        assert_eq!((same.precision, same.recall, same.f1, same.iou), (1.0, 1.0, 1.0, 1.0));
        let zero = contact_metrics(&[false; 4], &[false; 4]).unwrap();
        assert!(zero.degenerate);
        assert!(contact_metrics(&[true], &[true, false]).is_err());
    }

    proptest! {
        #[test]
        fn iou_and_f1_relation(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            let c = ContactConfusion { tp, fp, fn_, tn: 0 };
            let m = c.metrics();
            prop_assert!(m.iou <= m.f1 && m.f1 <= 1.0);
            if tp + fp + fn_ > 0 {
                prop_assert!((m.iou - m.f1 / (2.0 - m.f1)).abs() < 1e-15);
            }
        }
    }
}
