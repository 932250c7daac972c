//! Metrics, statistics, leave-one-subject-out evaluation and reports.

mod harness;
mod metrics;
mod predict;
mod report;
mod stats;
mod sweep;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;
use crate::stability::StabilityError;
use crate::tensor::TensorError;

pub use harness::{
    compare_methods, evaluate_folds, run_loso_evaluation, EvalOptions, EvalReport, FoldModel, MethodResult,
    SubjectMetrics, TTestRow, METRICS,
};
pub use metrics::{contact_metrics, kld_metric, ContactConfusion, ContactMetrics};
pub use predict::{predict_poses, RecordingPrediction, SavedPrediction};
pub use report::{
    format_per_subject, format_summary, format_ttests, parse_summary, summary_row, write_report, PER_SUBJECT_HEADER,
    SUMMARY_HEADER, TTEST_HEADER,
};
pub use stats::{paired_t_test, summarize, t_two_sided_p, MetricSummary, TTest, RSTD_SCALE};
pub use sweep::{
    format_sweep, threshold_sweep, SweepAccumulator, SweepFrame, SweepRow, SWEEP_HEADER, SWEEP_THRESHOLDS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no values to summarize")]
    EmptyInput,
    #[error("non-finite value")]
    NonFinite,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all paired differences are equal")]
    ZeroVariance,
    #[error("{method} has no fold holding out {subject}")]
    MissingFold { method: String, subject: String },
    #[error("{method} evaluates {subject} twice")]
    DuplicateFold { method: String, subject: String },
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl EvalError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// Short status word for report tables.
    pub fn status(&self) -> &'static str {
        match self {
            EvalError::ZeroVariance => "zero_variance",
            EvalError::TooFewPairs(_) => "too_few_pairs",
            EvalError::LengthMismatch(..) => "length_mismatch",
            _ => "error",
        }
    }
}
