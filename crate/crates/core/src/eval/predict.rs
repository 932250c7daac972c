use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::EvalError;
use crate::data::{window_indices, Normalizer};
use crate::model::{FootFormer, ModelError, PoseSequence};
use crate::tensor::Tensor;

/// Model outputs for every frame of one pose stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingPrediction {
    /// Distribution over both grids per frame.
    pub pressure: Vec<Vec<f64>>,
    pub contact_logits: Vec<Vec<f64>>,
    /// CoM in mm.
    pub com: Vec<[f64; 3]>,
}

impl RecordingPrediction {
    pub fn frames(&self) -> usize {
        self.pressure.len()
    }

    pub fn contact_bits(&self, t: usize) -> Vec<bool> {
        self.contact_logits[t].iter().map(|&x| x > 0.0).collect()
    }

    /// Writes `pressure.ftk` `[frames x 2 x rows x cols]`, `com.ftk`
    /// `[frames x 3]` and `contact.txt` with one line of region bits per
    /// frame.
    pub fn save_dir(&self, dir: &Path, rows: usize, cols: usize) -> Result<(), EvalError> {
        fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        let n = self.frames();
        let pressure = Tensor::new(vec![n, 2, rows, cols], self.pressure.concat())?;
        let com = Tensor::new(vec![n, 3], self.com.iter().flatten().copied().collect())?;
        let save = |name: &str, t: &Tensor| {
            let p = dir.join(name);
            t.save(&p).map_err(|e| EvalError::io(&p, e))
        };
        save("pressure.ftk", &pressure)?;
        save("com.ftk", &com)?;
        let mut bits = String::new();
        for t in 0..n {
            let line: String = self
                .contact_bits(t)
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            let _ = writeln!(bits, "{line}");
        }
        let p = dir.join("contact.txt");
        fs::write(&p, bits).map_err(|e| EvalError::io(&p, e))
    }
}

/// Saved predictions as read back for stability analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedPrediction {
    /// `[frames x 2 x rows x cols]` distributions.
    pub pressure: Tensor,
    /// `[frames x 3]` mm.
    pub com: Tensor,
}

impl SavedPrediction {
    pub fn load_dir(dir: &Path) -> Result<Self, EvalError> {
        let load = |name: &str| {
            let p = dir.join(name);
            Tensor::load(&p).map_err(|e| EvalError::io(&p, e))
        };
        let pressure = load("pressure.ftk")?;
        let com = load("com.ftk")?;
        if pressure.rank() != 4 || com.rank() != 2 || com.shape()[0] != pressure.shape()[0] || com.shape()[1] != 3 {
            return Err(EvalError::Shape(format!(
                "prediction tensors have shapes {:?} and {:?}",
                pressure.shape(),
                com.shape()
            )));
        }
        Ok(SavedPrediction { pressure, com })
    }

    pub fn frames(&self) -> usize {
        self.pressure.shape()[0]
    }

    pub fn pressure_frame(&self, t: usize) -> &[f64] {
        let n = self.pressure.len() / self.frames();
        &self.pressure.data()[t * n..(t + 1) * n]
    }

    pub fn com_frame(&self, t: usize) -> [f64; 3] {
        let d = &self.com.data()[3 * t..3 * t + 3];
        [d[0], d[1], d[2]]
    }
}

/// Runs `model` on the edge-replicated window around every frame of the
/// raw `[frames x K x F]` pose stream.
pub fn predict_poses(model: &FootFormer, norm: &Normalizer, poses: &Tensor) -> Result<RecordingPrediction, EvalError> {
    if poses.rank() != 3 || poses.shape()[0] == 0 {
        return Err(EvalError::Shape(format!(
            "poses must be a non-empty [frames x K x F] tensor, got {:?}",
            poses.shape()
        )));
    }
    let (n, k, f) = (poses.shape()[0], poses.shape()[1], poses.shape()[2]);
    let cfg = model.config();
    if (k, f) != (cfg.joints, cfg.features) || (k, f) != (norm.pose.joints, norm.pose.features) {
        return Err(EvalError::Model(ModelError::ConfigMismatch(format!(
            "poses have {k} joints x {f} features, model expects {} x {}",
            cfg.joints, cfg.features
        ))));
    }
    poses.validate_finite()?;
    let raw = |t: usize| &poses.data()[t * k * f..(t + 1) * k * f];
    let frames: Vec<Vec<f64>> = (0..n).map(|t| norm.normalize_pose(raw(t), f)).collect();
    let mut out = RecordingPrediction {
        pressure: Vec::with_capacity(n),
        contact_logits: Vec::with_capacity(n),
        com: Vec::with_capacity(n),
    };
    for t in 0..n {
        let data: Vec<f64> = window_indices(n, t, cfg.window)
            .into_iter()
            .flat_map(|i| frames[i].iter().copied())
            .collect();
        let seq = PoseSequence::new(Tensor::new(vec![cfg.window, k, f], data)?, "")?;
        let o = model.predict(&seq)?;
        let z = o.com.data();
        out.pressure.push(o.pressure.into_data());
        out.contact_logits.push(o.contact_logits.into_data());
        out.com.push(norm.denormalize_com_frame(raw(t), f, [z[0], z[1], z[2]]));
    }
    Ok(out)
}
