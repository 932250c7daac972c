use super::DataError;
use crate::tensor::Tensor;

/// Standard deviations below this are replaced by 1.
pub const MIN_STD: f64 = 1e-8;

/// Translates one `[K x F]` frame so the hip joint sits at the origin.
pub fn center_on_hip(frame: &[f64], features: usize, hip: usize) -> Vec<f64> {
    let origin = frame[hip * features..(hip + 1) * features].to_vec();
    frame
        .chunks(features)
        .flat_map(|j| j.iter().zip(&origin).map(|(v, o)| v - o))
        .collect()
}

/// Per joint-dimension z-score statistics of hip-centered poses.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseStats {
    pub joints: usize,
    pub features: usize,
    pub mean: Vec<f64>,
    /// Population standard deviation, clamped to 1 below [`MIN_STD`].
    pub std: Vec<f64>,
}

impl PoseStats {
    /// Two-pass mean and population std over already centered frames.
    pub fn fit<'a>(
        frames: impl Iterator<Item = &'a [f64]> + Clone,
        joints: usize,
        features: usize,
    ) -> Result<Self, DataError> {
        let dims = joints * features;
        let mut mean = vec![0.0; dims];
        let mut n = 0usize;
        for f in frames.clone() {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(DataError::EmptyStatistics);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dims];
        for f in frames {
            for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(PoseStats {
            joints,
            features,
            mean,
            std,
        })
    }

    /// Identity statistics: zero mean, unit std.
    pub fn identity(joints: usize, features: usize) -> Self {
        PoseStats {
            joints,
            features,
            mean: vec![0.0; joints * features],
            std: vec![1.0; joints * features],
        }
    }

    /// z-scores one centered frame.
    pub fn apply(&self, centered: &[f64]) -> Vec<f64> {
        centered
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn to_tensors(&self) -> (Tensor, Tensor) {
        let shape = vec![self.joints, self.features];
        (
            Tensor::new(shape.clone(), self.mean.clone()).expect("pose stats shape"),
            Tensor::new(shape, self.std.clone()).expect("pose stats shape"),
        )
    }

    pub fn from_tensors(mean: &Tensor, std: &Tensor) -> Result<Self, DataError> {
        if mean.rank() != 2 || mean.shape() != std.shape() {
            return Err(DataError::Format(format!(
                "pose statistics must be two matching [K x F] tensors, got {:?} and {:?}",
                mean.shape(),
                std.shape()
            )));
        }
        Ok(PoseStats {
            joints: mean.shape()[0],
            features: mean.shape()[1],
            mean: mean.data().to_vec(),
            std: std.data().to_vec(),
        })
    }
}
