use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Skeleton};
use crate::tensor::Tensor;

/// One subject's synchronized pose and insole capture.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub subject_id: String,
    pub skeleton: Skeleton,
    /// `[frames x K x F]` in the capture's own units.
    pub poses: Tensor,
    /// `[frames x 2 x rows x cols]` in kPa, left foot first.
    pub pressure: Tensor,
    /// Newtons.
    pub body_weight: Option<f64>,
    /// `[frames x 3]` in mm.
    pub com: Option<Tensor>,
    pub frame_rate: f64,
    /// Sensor pitch along the grid's columns and rows, in mm.
    pub cell_pitch_mm: (f64, f64),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl RawRecording {
    pub fn frames(&self) -> usize {
        self.poses.shape().first().copied().unwrap_or(0)
    }

    pub fn joints(&self) -> usize {
        self.poses.shape()[1]
    }

    pub fn features(&self) -> usize {
        self.poses.shape()[2]
    }

    /// `(rows, cols)` of one foot's grid.
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.pressure.shape()[2], self.pressure.shape()[3])
    }

    pub fn pose_frame(&self, t: usize) -> &[f64] {
        let n = self.joints() * self.features();
        &self.poses.data()[t * n..(t + 1) * n]
    }

    /// Both feet of frame `t`, flattened left then right.
    pub fn pressure_frame(&self, t: usize) -> &[f64] {
        let (r, c) = self.grid_dims();
        let n = 2 * r * c;
        &self.pressure.data()[t * n..(t + 1) * n]
    }

    pub fn com_frame(&self, t: usize) -> Option<[f64; 3]> {
        self.com.as_ref().map(|c| {
            let d = &c.data()[3 * t..3 * t + 3];
            [d[0], d[1], d[2]]
        })
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |message: String| DataError::Inconsistent {
            subject: self.subject_id.clone(),
            message,
        };
        if self.poses.rank() != 3 {
            return Err(bad(format!(
                "poses must be [frames x K x F], got {:?}",
                self.poses.shape()
            )));
        }
        if self.frames() == 0 {
            return Err(DataError::RecordingTooShort(self.subject_id.clone()));
        }
        if self.pressure.rank() != 4 || self.pressure.shape()[1] != 2 {
            return Err(bad(format!(
                "pressure must be [frames x 2 x rows x cols], got {:?}",
                self.pressure.shape()
            )));
        }
        if self.pressure.shape()[0] != self.frames() {
            return Err(bad(format!(
                "{} pose frames but {} pressure frames",
                self.frames(),
                self.pressure.shape()[0]
            )));
        }
        if self.joints() != self.skeleton.joints {
            return Err(bad(format!(
                "poses have {} joints, skeleton declares {}",
                self.joints(),
                self.skeleton.joints
            )));
        }
        if let Some(com) = &self.com {
            if com.shape() != [self.frames(), 3] {
                return Err(bad(format!("CoM labels must be [frames x 3], got {:?}", com.shape())));
            }
            com.validate_finite()?;
        }
        if let Some(w) = self.body_weight {
            if !(w > 0.0) {
                return Err(bad(format!("body weight must be positive, got {w}")));
            }
        }
        if !(self.frame_rate > 0.0) {
            return Err(bad(format!("frame rate must be positive, got {}", self.frame_rate)));
        }
        self.poses.validate_finite()?;
        self.pressure.validate_finite()?;
        self.skeleton.validate()
    }

    fn meta_text(&self) -> String {
        let (rows, cols) = self.grid_dims();
        let mut s = String::new();
        let _ = writeln!(s, "subject_id={}", self.subject_id);
        if let Some(w) = self.body_weight {
            let _ = writeln!(s, "body_weight={w}");
        }
        let _ = writeln!(s, "frame_rate={}", self.frame_rate);
        let _ = writeln!(s, "rows={rows}");
        let _ = writeln!(s, "cols={cols}");
        let _ = writeln!(s, "pitch_x_mm={}", self.cell_pitch_mm.0);
        let _ = writeln!(s, "pitch_y_mm={}", self.cell_pitch_mm.1);
        let _ = writeln!(s, "skeleton={}", self.skeleton.describe());
        s
    }

    /// Writes `poses.ftk`, `pressure.ftk`, `meta.txt` and, with CoM
    /// labels, `com.ftk` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let put = |name: &str, t: &Tensor| {
            let p = dir.join(name);
            t.save(&p).map_err(|e| io_err(&p, e))
        };
        put("poses.ftk", &self.poses)?;
        put("pressure.ftk", &self.pressure)?;
        if let Some(c) = &self.com {
            put("com.ftk", c)?;
        }
        let meta = dir.join("meta.txt");
        fs::write(&meta, self.meta_text()).map_err(|e| io_err(&meta, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self, DataError> {
        let meta_path = dir.join("meta.txt");
        let text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
        let mut subject_id = None;
        let mut body_weight = None;
        let mut frame_rate = None;
        let mut dims = (None, None);
        let mut pitch = (5.08, 5.08);
        let mut skeleton = Skeleton::body25();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| io_err(&meta_path, format!("expected key=value, got {line:?}")))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| io_err(&meta_path, format!("bad number for {k}: {v:?}")))
            };
            match k.trim() {
                "subject_id" => subject_id = Some(v.trim().to_string()),
                "body_weight" => body_weight = Some(num(v)?),
                "frame_rate" => frame_rate = Some(num(v)?),
                "rows" => dims.0 = Some(num(v)? as usize),
                "cols" => dims.1 = Some(num(v)? as usize),
                "pitch_x_mm" => pitch.0 = num(v)?,
                "pitch_y_mm" => pitch.1 = num(v)?,
                "skeleton" => skeleton = Skeleton::parse(v)?,
                other => return Err(io_err(&meta_path, format!("unknown key {other:?}"))),
            }
        }
        let subject_id = subject_id.ok_or_else(|| io_err(&meta_path, "missing subject_id"))?;
        let load = |name: &str| {
            let p = dir.join(name);
            Tensor::load(&p).map_err(|e| io_err(&p, e))
        };
        let com_path = dir.join("com.ftk");
        let rec = RawRecording {
            subject_id,
            skeleton,
            poses: load("poses.ftk")?,
            pressure: load("pressure.ftk")?,
            body_weight,
            com: if com_path.exists() {
                Some(load("com.ftk")?)
            } else {
                None
            },
            frame_rate: frame_rate.unwrap_or(50.0),
            cell_pitch_mm: pitch,
        };
        rec.validate()?;
        if let (Some(r), Some(c)) = dims {
            if rec.grid_dims() != (r, c) {
                return Err(io_err(
                    &meta_path,
                    format!("meta declares a {r}x{c} grid, pressure.ftk has {:?}", rec.grid_dims()),
                ));
            }
        }
        Ok(rec)
    }
}

/// Recording directories listed one per line. Blank lines and `#`
/// comments are skipped; relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub recordings: Vec<PathBuf>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Self {
        let recordings = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let p = PathBuf::from(l);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            })
            .collect();
        Manifest { recordings }
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Ok(Self::parse(&text, path.parent().unwrap_or(Path::new("."))))
    }
}

/// Every recording of a study, sharing one skeleton and grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub recordings: Vec<RawRecording>,
}

impl Dataset {
    pub fn new(recordings: Vec<RawRecording>) -> Result<Self, DataError> {
        for r in &recordings {
            r.validate()?;
        }
        if let Some(first) = recordings.first() {
            for r in &recordings[1..] {
                if r.skeleton != first.skeleton
                    || r.grid_dims() != first.grid_dims()
                    || r.features() != first.features()
                {
                    return Err(DataError::Inconsistent {
                        subject: r.subject_id.clone(),
                        message: "skeleton, feature count or grid layout differs from the first recording".into(),
                    });
                }
            }
        }
        Ok(Dataset { recordings })
    }

    pub fn load(manifest: &Path) -> Result<Self, DataError> {
        let m = Manifest::load(manifest)?;
        let recordings = m
            .recordings
            .iter()
            .map(|d| RawRecording::load_dir(d))
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::new(recordings)
    }

    /// Writes each recording under `root/<index>_<subject>` and a
    /// `manifest.txt` listing them. Returns the manifest path.
    pub fn save(&self, root: &Path) -> Result<PathBuf, DataError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let mut manifest = String::new();
        for (i, r) in self.recordings.iter().enumerate() {
            let name = format!("{i:03}_{}", r.subject_id);
            r.save_dir(&root.join(&name))?;
            let _ = writeln!(manifest, "{name}");
        }
        let path = root.join("manifest.txt");
        fs::write(&path, manifest).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.recordings.iter().map(|r| r.subject_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn skeleton(&self) -> Option<&Skeleton> {
        self.recordings.first().map(|r| &r.skeleton)
    }
}
