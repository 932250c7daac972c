//! Command-line front end. Exit codes: 2 configuration, 3 data,
//! 4 checkpoint does not fit the data, 1 anything else.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{Dataset, RawRecording};
use crate::eval::{
    evaluate_folds, predict_poses, summarize, summary_row, write_report, EvalError, FoldModel, RecordingPrediction,
    SavedPrediction, SUMMARY_HEADER,
};
use crate::model::Checkpoint;
use crate::pipeline::{check_compat, train_fold, PipelineError, TrainedFold};
use crate::stability::{
    analyze_frame, com_cop_distance, format_stability, ground_truth_stability, polygon_iou, FloorSetup, SegmentTable,
    StabilityFrame,
};
use crate::tensor::Tensor;
use crate::training::format_log;

/// Environment variable holding the log filter, e.g. `info`.
pub const LOG_ENV: &str = "FOOTFORMER_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "footformer",
    version,
    about = "Foot pressure, contact and center of mass from pose sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one fold and write a checkpoint plus its training log.
    Train(TrainArgs),
    /// Evaluate checkpoints on their held-out subjects.
    Eval(EvalArgs),
    /// Predict pressure, contact and CoM for a pose stream.
    Predict(PredictArgs),
    /// Per-frame CoP, BoS and CoM stability records.
    Stability(StabilityArgs),
    /// Print every configuration key with its default value.
    DumpDefaults,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key=value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Dataset manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint path; the log goes to `<out>.log`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub held_out: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// One per fold or method.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override a `data.*` or `stability.*` key for the evaluation.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Evaluate on these subjects instead of each checkpoint's held-out one.
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A raw `[frames x K x F]` pose tensor.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub poses: Option<PathBuf>,
    /// Predict every recording of a manifest into `<out>/<subject>/`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Take pressure and CoM from this model instead of the recordings.
    #[arg(long, conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Take pressure and CoM from `predict --data` output.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// BoS pressure threshold in kPa.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            PipelineError::Data(d) => CliError::Data(d.to_string()),
            PipelineError::Mismatch(m) => CliError::Mismatch(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Data(_) | EvalError::UnknownSubject(_) | EvalError::Shape(_) | EvalError::Stability(_) => {
                CliError::Data(e.to_string())
            }
            EvalError::Model(_) => CliError::Mismatch(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn apply_sets(cfg: &mut RunConfig, sets: &[String]) -> Result<(), CliError> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        cfg.set(k.trim(), v.trim()).map_err(CliError::Config)?;
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::load(path).map_err(|e| CliError::Data(e.to_string()))
}

fn load_fold(path: &Path) -> Result<TrainedFold, CliError> {
    let ckpt = Checkpoint::load(path).map_err(|e| CliError::Mismatch(format!("{}: {e}", path.display())))?;
    TrainedFold::from_checkpoint(&ckpt).map_err(|e| CliError::Mismatch(format!("{}: {e}", path.display())))
}

/// Configuration from defaults, then the file, then `--set`, then flags.
pub fn resolve_train_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.cfg.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    apply_sets(&mut cfg, &args.cfg.set)?;
    if let Some(s) = &args.held_out {
        cfg.held_out = Some(s.clone());
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(d) = &args.data {
        cfg.manifest = Some(d.clone());
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_train_config(args)?;
    let manifest = cfg
        .manifest
        .clone()
        .ok_or_else(|| CliError::Config("no dataset manifest: pass --data or set data.manifest".into()))?;
    let ds = load_dataset(&manifest)?;
    let fold = train_fold(&ds, &cfg, |l| log::info!("{}", l.record()))?;
    fold.to_checkpoint()
        .save(&args.out)
        .map_err(|e| CliError::Other(format!("{}: {e}", args.out.display())))?;
    let mut log_path = args.out.clone().into_os_string();
    log_path.push(".log");
    write(Path::new(&log_path), &format_log(&fold.log))?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data)?;
    let folds: Vec<TrainedFold> = args
        .checkpoints
        .iter()
        .map(|p| load_fold(p))
        .collect::<Result<_, _>>()?;
    for (f, p) in folds.iter().zip(&args.checkpoints) {
        check_compat(&f.config, &f.skeleton, &ds).map_err(|e| CliError::Mismatch(format!("{}: {e}", p.display())))?;
    }
    let mut cfg = folds[0].config.clone();
    apply_sets(&mut cfg, &args.set)?;
    cfg.validate().map_err(CliError::Config)?;
    let mut models = Vec::new();
    for fold in &folds {
        let model = fold.fold_model();
        if args.subjects.is_empty() {
            models.push(model);
            continue;
        }
        for s in &args.subjects {
            models.push(FoldModel {
                held_out: Some(s.clone()),
                ..model.clone()
            });
        }
    }
    let report = evaluate_folds(&ds, &models, &cfg.eval_options())?;
    write_report(&args.out, &report)?;
    Ok(())
}

fn append(acc: &mut Option<RecordingPrediction>, p: RecordingPrediction) {
    match acc {
        None => *acc = Some(p),
        Some(a) => {
            a.pressure.extend(p.pressure);
            a.contact_logits.extend(p.contact_logits);
            a.com.extend(p.com);
        }
    }
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let fold = load_fold(&args.checkpoint)?;
    let (rows, cols) = (fold.config.model.pressure_rows, fold.config.model.pressure_cols);
    let predict = |poses: &Tensor| {
        // A pose tensor that does not fit the model is malformed input.
        predict_poses(&fold.model, &fold.normalizer, poses).map_err(|e| CliError::Data(e.to_string()))
    };
    if let Some(path) = &args.poses {
        let poses = Tensor::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        predict(&poses)?.save_dir(&args.out, rows, cols)?;
        return Ok(());
    }
    let manifest = args.data.as_ref().expect("clap requires --poses or --data");
    let ds = load_dataset(manifest)?;
    check_compat(&fold.config, &fold.skeleton, &ds)?;
    for subject in ds.subjects() {
        let mut acc = None;
        for rec in ds.recordings.iter().filter(|r| r.subject_id == subject) {
            append(&mut acc, predict(&rec.poses)?);
        }
        if let Some(p) = acc {
            p.save_dir(&args.out.join(&subject), rows, cols)?;
        }
    }
    Ok(())
}

/// Where predicted pressure and CoM come from.
enum Source {
    GroundTruth,
    Model(Box<TrainedFold>),
    Saved(PathBuf),
}

const ERROR_HEADER: &str = "frame,cop_mm,bos_iou,com_cop_err_mm,com_bos_err_mm";

struct FrameErrors {
    cop_mm: Option<f64>,
    bos_iou: Option<f64>,
    com_cop: Option<f64>,
    com_bos: Option<f64>,
}

fn frame_errors(pred: &StabilityFrame, gt: &StabilityFrame) -> FrameErrors {
    let both = |a: Option<f64>, b: Option<f64>| Some((a? - b?).abs());
    FrameErrors {
        cop_mm: pred.cop.zip(gt.cop).map(|(p, g)| com_cop_distance(p, g)),
        bos_iou: pred.bos.as_ref().zip(gt.bos.as_ref()).map(|(p, g)| polygon_iou(p, g)),
        com_cop: both(pred.com_cop, gt.com_cop),
        com_bos: both(pred.com_bos, gt.com_bos),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Predicted pressure (scaled to the reference frame's total kPa) and CoM
/// for every frame of one subject's recordings.
fn source_frames(
    source: &Source,
    subject: &str,
    recs: &[&RawRecording],
    reference: &[StabilityFrame],
    threshold: f64,
) -> Result<Vec<StabilityFrame>, CliError> {
    let saved = match source {
        Source::GroundTruth => return Ok(reference.to_vec()),
        Source::Saved(dir) => {
            let p = SavedPrediction::load_dir(&dir.join(subject)).map_err(|e| CliError::Data(e.to_string()))?;
            let expected: usize = recs.iter().map(|r| r.frames()).sum();
            if p.frames() != expected {
                return Err(CliError::Data(format!(
                    "predictions for {subject} have {} frames, recordings have {expected}",
                    p.frames()
                )));
            }
            Some(p)
        }
        Source::Model(_) => None,
    };
    let mut out = Vec::with_capacity(reference.len());
    let mut offset = 0;
    for rec in recs {
        let predicted = match source {
            Source::Model(fold) => Some(predict_poses(&fold.model, &fold.normalizer, &rec.poses)?),
            _ => None,
        };
        let setup = FloorSetup::of(rec);
        for t in 0..rec.frames() {
            let frame = offset + t;
            let (dist, com): (Vec<f64>, [f64; 3]) = match (&predicted, &saved) {
                (Some(p), _) => (p.pressure[t].clone(), p.com[t]),
                (None, Some(s)) => (s.pressure_frame(frame).to_vec(), s.com_frame(frame)),
                (None, None) => unreachable!("ground truth handled above"),
            };
            if dist.len() != rec.pressure_frame(t).len() {
                return Err(CliError::Data(format!(
                    "predicted map has {} cells, recording has {}",
                    dist.len(),
                    rec.pressure_frame(t).len()
                )));
            }
            let total: f64 = rec
                .pressure_frame(t)
                .iter()
                .map(|v| v.clamp(0.0, crate::data::PRESSURE_MAX_KPA))
                .sum();
            let kpa: Vec<f64> = dist.iter().map(|p| p * total).collect();
            let cells = setup
                .cells(rec.pose_frame(t))
                .map_err(|e| CliError::Data(e.to_string()))?;
            out.push(analyze_frame(frame, &kpa, &cells, com, threshold));
        }
        offset += rec.frames();
    }
    Ok(out)
}

pub fn cmd_stability(args: &StabilityArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data)?;
    let mut threshold = crate::stability::DEFAULT_BOS_THRESHOLD;
    let source = match (&args.checkpoint, &args.predictions) {
        (Some(c), _) => {
            let fold = load_fold(c)?;
            check_compat(&fold.config, &fold.skeleton, &ds)?;
            threshold = fold.config.bos_threshold;
            Source::Model(Box::new(fold))
        }
        (None, Some(p)) => Source::Saved(p.clone()),
        (None, None) => Source::GroundTruth,
    };
    if let Some(t) = args.threshold {
        threshold = t;
    }
    if !(threshold >= 0.0) {
        return Err(CliError::Config(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    let table = SegmentTable::body25();
    let mut summary = format!("{SUMMARY_HEADER}\n");
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); 6];
    let names = [
        "com_cop_mm",
        "com_bos_mm",
        "cop_err_mm",
        "bos_iou",
        "com_cop_err_mm",
        "com_bos_err_mm",
    ];
    for subject in ds.subjects() {
        let recs: Vec<&RawRecording> = ds.recordings.iter().filter(|r| r.subject_id == subject).collect();
        let mut reference = Vec::new();
        for rec in &recs {
            let offset = reference.len();
            let frames = ground_truth_stability(rec, &table, threshold).map_err(|e| CliError::Data(e.to_string()))?;
            reference.extend(frames.into_iter().map(|mut f| {
                f.frame += offset;
                f
            }));
        }
        let predicted = source_frames(&source, &subject, &recs, &reference, threshold)?;
        let mut errors = format!("{ERROR_HEADER}\n");
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); 6];
        for (p, g) in predicted.iter().zip(&reference) {
            let e = frame_errors(p, g);
            let _ = writeln!(
                errors,
                "{},{},{},{},{}",
                p.frame,
                opt(e.cop_mm),
                opt(e.bos_iou),
                opt(e.com_cop),
                opt(e.com_bos)
            );
            let values = [p.com_cop, p.com_bos, e.cop_mm, e.bos_iou, e.com_cop, e.com_bos];
            for (col, v) in columns.iter_mut().zip(values) {
                col.extend(v);
            }
        }
        let dir = args.out.join(&subject);
        write(&dir.join("stability.csv"), &format_stability(&predicted, threshold))?;
        write(&dir.join("errors.csv"), &errors)?;
        for (i, name) in names.iter().enumerate() {
            if let Ok(s) = summarize(&columns[i]) {
                let _ = writeln!(summary, "{}", summary_row(&subject, name, &s));
            }
            pooled[i].extend(&columns[i]);
        }
    }
    for (i, name) in names.iter().enumerate() {
        if let Ok(s) = summarize(&pooled[i]) {
            let _ = writeln!(summary, "{}", summary_row("all", name, &s));
        }
    }
    write(&args.out.join("summary.csv"), &summary)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Stability(a) => cmd_stability(a),
        Command::DumpDefaults => {
            print!("{}", RunConfig::default().dump());
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("footformer: {e}");
            e.exit_code()
        }
    }
}
