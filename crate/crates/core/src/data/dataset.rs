use super::pose::{center_on_hip, PoseStats, MIN_STD};
use super::{derive_contact, preprocess_pressure, window_sequences, ContactSpec, DataError, RawRecording};
use crate::model::PoseSequence;
use crate::tensor::Tensor;
use crate::training::Sample;

/// z-score statistics of the hip-relative CoM target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for ComStats {
    fn default() -> Self {
        ComStats {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

/// Everything fitted on a training split that is needed to turn raw
/// recordings into model inputs and model outputs back into mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub hip: usize,
    pub pose: PoseStats,
    pub com: ComStats,
}

impl Normalizer {
    /// Fits pose and CoM statistics on every frame of `train`.
    pub fn fit(train: &[&RawRecording]) -> Result<Self, DataError> {
        let first = train.first().ok_or(DataError::EmptyStatistics)?;
        let (k, f, hip) = (first.joints(), first.features(), first.skeleton.hip);
        let centered: Vec<Vec<f64>> = train
            .iter()
            .flat_map(|r| (0..r.frames()).map(move |t| center_on_hip(r.pose_frame(t), f, hip)))
            .collect();
        let pose = PoseStats::fit(centered.iter().map(Vec::as_slice), k, f)?;

        let offsets: Vec<[f64; 3]> = train
            .iter()
            .flat_map(|r| (0..r.frames()).filter_map(move |t| com_offset(r, t)))
            .collect();
        let com = if offsets.is_empty() {
            ComStats::default()
        } else {
            let n = offsets.len() as f64;
            let mut mean = [0.0; 3];
            for o in &offsets {
                (0..3).for_each(|i| mean[i] += o[i]);
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = [0.0; 3];
            for o in &offsets {
                (0..3).for_each(|i| var[i] += (o[i] - mean[i]).powi(2));
            }
            let std = var.map(|v| {
                let s = (v / n).sqrt();
                if s < MIN_STD {
                    1.0
                } else {
                    s
                }
            });
            ComStats { mean, std }
        };
        Ok(Normalizer { hip, pose, com })
    }

    /// Hip-centered, z-scored frame `t` of `rec`.
    pub fn pose_frame(&self, rec: &RawRecording, t: usize) -> Vec<f64> {
        self.normalize_pose(rec.pose_frame(t), rec.features())
    }

    pub fn normalize_pose(&self, frame: &[f64], features: usize) -> Vec<f64> {
        self.pose.apply(&center_on_hip(frame, features, self.hip))
    }

    pub fn normalize_com(&self, rec: &RawRecording, t: usize) -> Option<[f64; 3]> {
        com_offset(rec, t).map(|o| std::array::from_fn(|i| (o[i] - self.com.mean[i]) / self.com.std[i]))
    }

    /// Inverse of [`Normalizer::normalize_com`] for frame `t` of `rec`.
    pub fn denormalize_com(&self, rec: &RawRecording, t: usize, z: [f64; 3]) -> [f64; 3] {
        self.denormalize_com_frame(rec.pose_frame(t), rec.features(), z)
    }

    /// CoM in mm from a normalized prediction and the raw pose frame it
    /// was made for.
    pub fn denormalize_com_frame(&self, frame: &[f64], features: usize, z: [f64; 3]) -> [f64; 3] {
        let hip = hip_position(frame, features, self.hip);
        std::array::from_fn(|i| z[i] * self.com.std[i] + self.com.mean[i] + hip[i])
    }

    /// `norm.*` tensors for a checkpoint.
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let (m, s) = self.pose.to_tensors();
        vec![
            ("norm.pose_mean".into(), m),
            ("norm.pose_std".into(), s),
            ("norm.com_mean".into(), Tensor::row(&self.com.mean)),
            ("norm.com_std".into(), Tensor::row(&self.com.std)),
        ]
    }

    pub fn from_tensors(hip: usize, get: impl Fn(&str) -> Option<Tensor>) -> Result<Self, DataError> {
        let need = |name: &str| get(name).ok_or_else(|| DataError::Format(format!("missing tensor {name}")));
        let pose = PoseStats::from_tensors(&need("norm.pose_mean")?, &need("norm.pose_std")?)?;
        let three = |t: Tensor| -> Result<[f64; 3], DataError> {
            t.data()
                .try_into()
                .map_err(|_| DataError::Format(format!("CoM statistics must have 3 entries, got {}", t.len())))
        };
        Ok(Normalizer {
            hip,
            pose,
            com: ComStats {
                mean: three(need("norm.com_mean")?)?,
                std: three(need("norm.com_std")?)?,
            },
        })
    }
}

/// The hip position in mm when poses are 3D, zero otherwise.
fn hip_position(frame: &[f64], features: usize, hip: usize) -> [f64; 3] {
    if features != 3 {
        return [0.0; 3];
    }
    let h = hip * 3;
    [frame[h], frame[h + 1], frame[h + 2]]
}

fn com_offset(rec: &RawRecording, t: usize) -> Option<[f64; 3]> {
    let c = rec.com_frame(t)?;
    let h = hip_position(rec.pose_frame(t), rec.features(), rec.skeleton.hip);
    Some([c[0] - h[0], c[1] - h[1], c[2] - h[2]])
}

/// Training samples with the `(recording, frame)` each came from.
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub origins: Vec<(usize, usize)>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One sample per frame of every recording in `recs`, normalized with
/// `norm`. Origins index into `recs`.
pub fn build_samples(
    recs: &[&RawRecording],
    norm: &Normalizer,
    contact: &ContactSpec,
    window: usize,
) -> Result<SampleSet, DataError> {
    let mut set = SampleSet::default();
    for (ri, rec) in recs.iter().enumerate() {
        let (rows, cols) = rec.grid_dims();
        let (k, f) = (rec.joints(), rec.features());
        let frames: Vec<Vec<f64>> = (0..rec.frames()).map(|t| norm.pose_frame(rec, t)).collect();
        for w in window_sequences(rec, window)? {
            let data: Vec<f64> = w.frames.iter().flat_map(|&i| frames[i].iter().copied()).collect();
            let seq = PoseSequence::new(Tensor::new(vec![window, k, f], data)?, rec.subject_id.clone())
                .map_err(|e| DataError::Format(e.to_string()))?;
            let grid = rec.pressure_frame(w.center);
            let bits = derive_contact(grid, rows, cols, contact, rec.body_weight)?;
            set.samples.push(Sample {
                window: seq,
                pressure: preprocess_pressure(grid),
                contact: bits.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
                com: norm.normalize_com(rec, w.center),
            });
            set.origins.push((ri, w.center));
        }
    }
    Ok(set)
}
