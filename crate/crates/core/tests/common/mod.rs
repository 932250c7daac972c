#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use footformer::config::RunConfig;
use footformer::data::synth::{generate, SynthConfig};
use footformer::data::{Dataset, FootJoints, RawRecording, Skeleton};
use footformer::tensor::Tensor;

/// A model small enough to train in well under a second on the default
/// synthetic grid (3D BODY25 poses, 12x5 insoles).
pub const SMALL_MODEL: &str = "\
model.features=3
model.embed_dim=16
model.layers=1
model.heads=2
model.mlp_hidden=16
model.decoder_hidden=8
model.decoder_heads=2
model.dropout=0
model.pressure_rows=12
model.pressure_cols=5
train.batch_size=16
train.lr=0.003
train.weight_decay=0
";

pub fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_text(SMALL_MODEL).unwrap();
    cfg
}

pub fn synth(subjects: usize, frames: usize) -> Dataset {
    generate(&SynthConfig {
        subjects,
        frames,
        ..Default::default()
    })
}

/// Writes `ds` under `dir` and returns its manifest.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> PathBuf {
    ds.save(dir).unwrap()
}

/// The same capture with the last two joints dropped.
pub fn drop_two_joints(ds: &Dataset) -> Dataset {
    let recs = ds
        .recordings
        .iter()
        .map(|r| {
            let (n, k, f) = (r.frames(), r.joints(), r.features());
            let mut data = Vec::with_capacity(n * (k - 2) * f);
            for t in 0..n {
                data.extend_from_slice(&r.pose_frame(t)[..(k - 2) * f]);
            }
            RawRecording {
                skeleton: Skeleton {
                    joints: k - 2,
                    hip: 8,
                    left: FootJoints {
                        ankle: 14,
                        toe: 19,
                        heel: 21,
                    },
                    right: FootJoints {
                        ankle: 11,
                        toe: 22,
                        heel: 20,
                    },
                },
                poses: Tensor::new(vec![n, k - 2, f], data).unwrap(),
                ..r.clone()
            }
        })
        .collect();
    Dataset::new(recs).unwrap()
}

pub fn footformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_footformer"))
        .args(args)
        .env("FOOTFORMER_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Parses a CSV with a header into rows of named fields.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

pub fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

pub fn tiny_model_config() -> footformer::model::ModelConfig {
    footformer::model::ModelConfig {
        features: 3,
        embed_dim: 8,
        layers: 2,
        heads: 2,
        mlp_hidden: 12,
        decoder_hidden: 8,
        decoder_heads: 2,
        dropout: 0.0,
        pressure_rows: 12,
        pressure_cols: 5,
        ..Default::default()
    }
}

/// Normalized training windows over every recording of `ds`.
pub fn samples_of(ds: &Dataset, window: usize) -> Vec<footformer::training::Sample> {
    let recs: Vec<&RawRecording> = ds.recordings.iter().collect();
    let norm = footformer::data::Normalizer::fit(&recs).unwrap();
    footformer::data::build_samples(&recs, &norm, &footformer::data::ContactSpec::default(), window)
        .unwrap()
        .samples
}
