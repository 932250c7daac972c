//! Ingestion and preprocessing: pose normalization, pressure
//! normalization, contact labels, windowing and leave-one-subject-out
//! splits.

mod dataset;
mod loso;
mod pose;
mod pressure;
mod recording;
mod skeleton;
pub mod synth;
mod window;

use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

pub use dataset::{build_samples, ComStats, Normalizer, SampleSet};
pub use loso::{loso_split, round_robin, Fold};
pub use pose::{center_on_hip, PoseStats, MIN_STD};
pub use pressure::{
    derive_contact, preprocess_pressure, region_rows, sigmoid_normalize_pressure, ContactRule, ContactSpec,
    PRESSURE_MAX_KPA,
};
pub use recording::{Dataset, Manifest, RawRecording};
pub use skeleton::{FootJoints, Skeleton};
pub use window::{window_indices, window_sequences, WindowRef};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("inconsistent recording {subject}: {message}")]
    Inconsistent { subject: String, message: String },
    #[error("contact rule needs the subject's body weight")]
    MissingBodyWeight,
    #[error("recording {0} has no frames")]
    RecordingTooShort(String),
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("need at least two subjects for leave-one-subject-out, found {0}")]
    TooFewSubjects(usize),
    #[error("no training frames to compute statistics from")]
    EmptyStatistics,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
