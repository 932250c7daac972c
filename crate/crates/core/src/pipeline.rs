//! End-to-end steps shared by the command line and the examples.

use crate::config::RunConfig;
use crate::data::{loso_split, DataError, Dataset, Normalizer, RawRecording, Skeleton};
use crate::eval::FoldModel;
use crate::model::{Checkpoint, FootFormer, ModelError};
use crate::training::{train, EpochLog, TrainError};

/// A model trained on one split, with the statistics it was trained with.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub config: RunConfig,
    pub skeleton: Skeleton,
    pub model: FootFormer,
    pub normalizer: Normalizer,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("checkpoint does not fit: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Checks that a model's input and output shapes fit the dataset.
pub fn check_compat(config: &RunConfig, skeleton: &Skeleton, ds: &Dataset) -> Result<(), PipelineError> {
    let m = &config.model;
    let Some(first) = ds.recordings.first() else {
        return Err(PipelineError::Data(DataError::Format(
            "dataset has no recordings".into(),
        )));
    };
    let (rows, cols) = first.grid_dims();
    let problems: Vec<String> = [
        (m.joints != first.joints()).then(|| format!("model has {} joints, data {}", m.joints, first.joints())),
        (m.features != first.features())
            .then(|| format!("model has {} features, data {}", m.features, first.features())),
        ((m.pressure_rows, m.pressure_cols) != (rows, cols))
            .then(|| format!("model grid {}x{}, data {rows}x{cols}", m.pressure_rows, m.pressure_cols)),
        (skeleton != &first.skeleton).then(|| {
            format!(
                "skeleton {} differs from data {}",
                skeleton.describe(),
                first.skeleton.describe()
            )
        }),
    ]
    .into_iter()
    .flatten()
    .collect();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Mismatch(problems.join("; ")))
    }
}

/// Trains on every subject except `config.held_out`, fitting the
/// normalization statistics on that training split.
pub fn train_fold(
    ds: &Dataset,
    config: &RunConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainedFold, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let skeleton = ds
        .skeleton()
        .cloned()
        .ok_or_else(|| DataError::Format("dataset has no recordings".into()))?;
    check_compat(config, &skeleton, ds).map_err(|e| match e {
        PipelineError::Mismatch(m) => PipelineError::Config(m),
        other => other,
    })?;
    let (train_recs, normalizer): (Vec<&RawRecording>, Normalizer) = match &config.held_out {
        Some(s) => {
            let fold = loso_split(ds, s)?;
            (fold.train_recordings(ds), fold.normalizer)
        }
        None => {
            let all: Vec<&RawRecording> = ds.recordings.iter().collect();
            let n = Normalizer::fit(&all)?;
            (all, n)
        }
    };
    let samples = crate::data::build_samples(&train_recs, &normalizer, &config.contact_spec(), config.model.window)?;
    log::info!(
        "training on {} windows from {} recordings",
        samples.len(),
        train_recs.len()
    );
    let mut model = FootFormer::new(config.model.clone(), config.train.seed)?;
    let log = train(&mut model, &samples.samples, &config.train, on_epoch)?;
    Ok(TrainedFold {
        config: config.clone(),
        skeleton,
        model,
        normalizer,
        log,
    })
}

impl TrainedFold {
    /// Model, run settings (without paths), skeleton and statistics.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut extra: Vec<(String, String)> = self
            .config
            .to_pairs()
            .into_iter()
            .filter(|(k, _)| k != "data.manifest")
            .collect();
        extra.push(("data.skeleton".into(), self.skeleton.describe()));
        self.model.to_checkpoint(&extra, &self.normalizer.to_tensors())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, PipelineError> {
        let mismatch = |m: String| PipelineError::Mismatch(m);
        let config = RunConfig::from_pairs(
            ckpt.config
                .iter()
                .filter(|(k, _)| k != "data.skeleton")
                .map(|(k, v)| (k.as_str(), v.as_str())),
        )
        .map_err(mismatch)?;
        let skeleton = Skeleton::parse(
            ckpt.config_value("data.skeleton")
                .ok_or_else(|| mismatch("checkpoint has no data.skeleton".into()))?,
        )
        .map_err(|e| mismatch(e.to_string()))?;
        let model = FootFormer::from_checkpoint(ckpt).map_err(|e| mismatch(e.to_string()))?;
        let normalizer =
            Normalizer::from_tensors(skeleton.hip, |n| ckpt.tensor(n).cloned()).map_err(|e| mismatch(e.to_string()))?;
        if (normalizer.pose.joints, normalizer.pose.features) != (config.model.joints, config.model.features) {
            return Err(mismatch("normalization statistics do not match the model input".into()));
        }
        Ok(TrainedFold {
            config,
            skeleton,
            model,
            normalizer,
            log: Vec::new(),
        })
    }

    pub fn fold_model(&self) -> FoldModel {
        FoldModel {
            method: self.config.method.clone(),
            held_out: self.config.held_out.clone(),
            model: self.model.clone(),
            normalizer: self.normalizer.clone(),
        }
    }
}
