use std::collections::BTreeMap;

use super::metrics::{kld_metric, ContactConfusion};
use super::predict::predict_poses;
use super::stats::{paired_t_test, TTest};
use super::sweep::{SweepAccumulator, SweepFrame, SweepRow, SWEEP_THRESHOLDS};
use super::EvalError;
use crate::data::{
    derive_contact, preprocess_pressure, ContactSpec, Dataset, Normalizer, RawRecording, PRESSURE_MAX_KPA,
};
use crate::model::FootFormer;
use crate::stability::{
    analyze_frame, com_cop_distance, dempster_com, polygon_iou, FloorSetup, SegmentTable, DEFAULT_BOS_THRESHOLD,
};
use crate::training::loss::com_l2;

/// A trained model with the statistics of the split it was trained on.
/// `held_out: None` evaluates on every subject.
#[derive(Debug, Clone)]
pub struct FoldModel {
    pub method: String,
    pub held_out: Option<String>,
    pub model: FootFormer,
    pub normalizer: Normalizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub contact: ContactSpec,
    pub bos_threshold: f64,
    pub sweep_thresholds: Vec<f64>,
    pub table: SegmentTable,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            contact: ContactSpec::default(),
            bos_threshold: DEFAULT_BOS_THRESHOLD,
            sweep_thresholds: SWEEP_THRESHOLDS.to_vec(),
            table: SegmentTable::body25(),
        }
    }
}

/// Metric names in report order.
pub const METRICS: [&str; 10] = [
    "kld",
    "precision",
    "recall",
    "f1",
    "contact_iou",
    "com_mm",
    "cop_mm",
    "bos_iou",
    "com_cop_mm",
    "com_bos_mm",
];

/// One subject's metrics, each a mean over that subject's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectMetrics {
    pub subject: String,
    pub frames: usize,
    /// Frames with no pressure, left out of the KLD.
    pub airborne: usize,
    /// Frames with an undefined CoP or BoS, left out of stability means.
    pub degenerate_frames: usize,
    pub kld: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub contact_iou: f64,
    pub contact_degenerate: bool,
    /// Predicted against labeled CoM.
    pub com_mm: Option<f64>,
    pub cop_mm: Option<f64>,
    pub bos_iou: Option<f64>,
    /// Absolute difference of predicted and reference CoM-CoP distances.
    pub com_cop_mm: Option<f64>,
    /// Absolute difference of predicted and reference signed CoM-BoS
    /// distances.
    pub com_bos_mm: Option<f64>,
}

impl SubjectMetrics {
    pub fn value(&self, metric: &str) -> Option<f64> {
        match metric {
            "kld" => self.kld,
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "f1" => Some(self.f1),
            "contact_iou" => Some(self.contact_iou),
            "com_mm" => self.com_mm,
            "cop_mm" => self.cop_mm,
            "bos_iou" => self.bos_iou,
            "com_cop_mm" => self.com_cop_mm,
            "com_bos_mm" => self.com_bos_mm,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    frames: usize,
    airborne: usize,
    degenerate: usize,
    kld: Mean,
    contact: ContactConfusion,
    com: Mean,
    cop: Mean,
    iou: Mean,
    com_cop: Mean,
    com_bos: Mean,
}

impl Accumulator {
    fn finish(&self, subject: &str) -> SubjectMetrics {
        let c = self.contact.metrics();
        SubjectMetrics {
            subject: subject.to_string(),
            frames: self.frames,
            airborne: self.airborne,
            degenerate_frames: self.degenerate,
            kld: self.kld.get(),
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            contact_iou: c.iou,
            contact_degenerate: c.degenerate,
            com_mm: self.com.get(),
            cop_mm: self.cop.get(),
            bos_iou: self.iou.get(),
            com_cop_mm: self.com_cop.get(),
            com_bos_mm: self.com_bos.get(),
        }
    }
}

fn evaluate_recording(
    fold: &FoldModel,
    rec: &RawRecording,
    opts: &EvalOptions,
    acc: &mut Accumulator,
    sweep: &mut SweepAccumulator,
) -> Result<(), EvalError> {
    let pred = predict_poses(&fold.model, &fold.normalizer, &rec.poses)?;
    let (rows, cols) = rec.grid_dims();
    let setup = FloorSetup::of(rec);
    for t in 0..rec.frames() {
        acc.frames += 1;
        let raw = rec.pressure_frame(t);
        match preprocess_pressure(raw) {
            Some(gt) => acc.kld.push(kld_metric(&pred.pressure[t], &gt)?),
            None => acc.airborne += 1,
        }
        let gt_bits = derive_contact(raw, rows, cols, &opts.contact, rec.body_weight)?;
        acc.contact.add(&pred.contact_bits(t), &gt_bits)?;
        let label = rec.com_frame(t);
        if let Some(c) = label {
            acc.com.push(com_l2(&pred.com[t], &c));
        }

        let gt_com = match label {
            Some(c) => Some(c),
            None if rec.features() == 3 => Some(dempster_com(rec.pose_frame(t), &opts.table)?),
            None => None,
        };
        let (Some(gt_com), Ok(cells)) = (gt_com, setup.cells(rec.pose_frame(t))) else {
            acc.degenerate += 1;
            continue;
        };
        let gt_kpa: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, PRESSURE_MAX_KPA)).collect();
        let total: f64 = gt_kpa.iter().sum();
        let pred_kpa: Vec<f64> = pred.pressure[t].iter().map(|p| p * total).collect();
        sweep.add(&SweepFrame {
            pred: &pred_kpa,
            gt: &gt_kpa,
            pred_cells: &cells,
            gt_cells: &cells,
        });
        let g = analyze_frame(t, &gt_kpa, &cells, gt_com, opts.bos_threshold);
        let p = analyze_frame(t, &pred_kpa, &cells, pred.com[t], opts.bos_threshold);
        let mut complete = true;
        match (p.cop, g.cop, p.com_cop, g.com_cop) {
            (Some(pc), Some(gc), Some(pd), Some(gd)) => {
                acc.cop.push(com_cop_distance(pc, gc));
                acc.com_cop.push((pd - gd).abs());
            }
            _ => complete = false,
        }
        match (&p.bos, &g.bos, p.com_bos, g.com_bos) {
            (Some(pb), Some(gb), Some(pd), Some(gd)) => {
                acc.iou.push(polygon_iou(pb, gb));
                acc.com_bos.push((pd - gd).abs());
            }
            _ => complete = false,
        }
        if !complete {
            acc.degenerate += 1;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: String,
    /// Sorted by subject id.
    pub subjects: Vec<SubjectMetrics>,
    pub sweep: Vec<SweepRow>,
}

impl MethodResult {
    /// Unweighted mean of the per-subject values.
    pub fn pooled(&self) -> SubjectMetrics {
        let mean = |metric: &str| {
            let v: Vec<f64> = self.subjects.iter().filter_map(|s| s.value(metric)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        SubjectMetrics {
            subject: "pooled".into(),
            frames: self.subjects.iter().map(|s| s.frames).sum(),
            airborne: self.subjects.iter().map(|s| s.airborne).sum(),
            degenerate_frames: self.subjects.iter().map(|s| s.degenerate_frames).sum(),
            kld: mean("kld"),
            precision: mean("precision").unwrap_or(0.0),
            recall: mean("recall").unwrap_or(0.0),
            f1: mean("f1").unwrap_or(0.0),
            contact_iou: mean("contact_iou").unwrap_or(0.0),
            contact_degenerate: self.subjects.iter().any(|s| s.contact_degenerate),
            com_mm: mean("com_mm"),
            cop_mm: mean("cop_mm"),
            bos_iou: mean("bos_iou"),
            com_cop_mm: mean("com_cop_mm"),
            com_bos_mm: mean("com_bos_mm"),
        }
    }
}

/// A paired t-test over subjects between two methods on one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct TTestRow {
    pub method_a: String,
    pub method_b: String,
    pub metric: String,
    pub n: usize,
    pub outcome: Result<TTest, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub methods: Vec<MethodResult>,
    pub ttests: Vec<TTestRow>,
}

/// Evaluates each fold model on its held-out subject (or on every
/// subject when none is named), grouping results by method.
pub fn evaluate_folds(ds: &Dataset, folds: &[FoldModel], opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    let subjects = ds.subjects();
    let mut per_method: BTreeMap<String, (BTreeMap<String, Accumulator>, SweepAccumulator)> = BTreeMap::new();
    for fold in folds {
        let targets: Vec<String> = match &fold.held_out {
            Some(s) if !subjects.contains(s) => return Err(EvalError::UnknownSubject(s.clone())),
            Some(s) => vec![s.clone()],
            None => subjects.clone(),
        };
        let (accs, sweep) = per_method
            .entry(fold.method.clone())
            .or_insert_with(|| (BTreeMap::new(), SweepAccumulator::new(&opts.sweep_thresholds)));
        for subject in targets {
            if accs.contains_key(&subject) {
                return Err(EvalError::DuplicateFold {
                    method: fold.method.clone(),
                    subject,
                });
            }
            let mut acc = Accumulator::default();
            for rec in ds.recordings.iter().filter(|r| r.subject_id == subject) {
                evaluate_recording(fold, rec, opts, &mut acc, sweep)?;
            }
            log::info!("evaluated {} on {subject}", fold.method);
            accs.insert(subject, acc);
        }
    }
    let methods: Vec<MethodResult> = per_method
        .into_iter()
        .map(|(method, (accs, sweep))| MethodResult {
            method,
            subjects: accs.iter().map(|(s, a)| a.finish(s)).collect(),
            sweep: sweep.rows(),
        })
        .collect();
    let ttests = compare_methods(&methods);
    Ok(EvalReport { methods, ttests })
}

/// Like [`evaluate_folds`], but every method must hold out each subject
/// exactly once.
pub fn run_loso_evaluation(ds: &Dataset, folds: &[FoldModel], opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    for fold in folds {
        if fold.held_out.is_none() {
            return Err(EvalError::MissingFold {
                method: fold.method.clone(),
                subject: "(fold trained on every subject)".into(),
            });
        }
    }
    let methods: Vec<&str> = {
        let mut m: Vec<&str> = folds.iter().map(|f| f.method.as_str()).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    for method in methods {
        for subject in ds.subjects() {
            if !folds
                .iter()
                .any(|f| f.method == method && f.held_out.as_deref() == Some(subject.as_str()))
            {
                return Err(EvalError::MissingFold {
                    method: method.to_string(),
                    subject,
                });
            }
        }
    }
    evaluate_folds(ds, folds, opts)
}

/// Paired t-tests over shared subjects for every method pair and metric.
pub fn compare_methods(methods: &[MethodResult]) -> Vec<TTestRow> {
    let mut rows = Vec::new();
    for (i, a) in methods.iter().enumerate() {
        for b in &methods[i + 1..] {
            for metric in METRICS {
                let (xs, ys): (Vec<f64>, Vec<f64>) = a
                    .subjects
                    .iter()
                    .filter_map(|sa| {
                        let sb = b.subjects.iter().find(|sb| sb.subject == sa.subject)?;
                        Some((sa.value(metric)?, sb.value(metric)?))
                    })
                    .unzip();
                rows.push(TTestRow {
                    method_a: a.method.clone(),
                    method_b: b.method.clone(),
                    metric: metric.to_string(),
                    n: xs.len(),
                    outcome: paired_t_test(&xs, &ys).map_err(|e| e.status().to_string()),
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate, SynthConfig};
    use crate::data::{loso_split, round_robin};
    use crate::model::ModelConfig;

    fn tiny_model(seed: u64) -> FootFormer {
        let cfg = ModelConfig {
            features: 3,
            embed_dim: 8,
            layers: 1,
            heads: 2,
            mlp_hidden: 8,
            decoder_hidden: 8,
            decoder_heads: 2,
            pressure_rows: 12,
            pressure_cols: 5,
            window: 3,
            mask_window: 1,
            ..Default::default()
        };
        FootFormer::new(cfg, seed).unwrap()
    }

    fn data() -> Dataset {
        generate(&SynthConfig {
            subjects: 2,
            frames: 5,
            airborne_every: Some(4),
            ..Default::default()
        })
    }

    #[test]
    fn two_subject_loso_report() {
        let ds = data();
        let folds: Vec<FoldModel> = round_robin(&ds)
            .unwrap()
            .into_iter()
            .map(|f| FoldModel {
                method: "a".into(),
                held_out: Some(f.held_out.clone()),
                model: tiny_model(1),
                normalizer: f.normalizer,
            })
            .collect();
        let report = run_loso_evaluation(&ds, &folds, &EvalOptions::default()).unwrap();
        let m = &report.methods[0];
        assert_eq!(m.subjects.len(), 2);
        assert_eq!(m.subjects.iter().map(|s| s.frames).sum::<usize>(), 10);
        assert!(m.subjects.iter().all(|s| s.airborne == 1 && s.kld.is_some()));
        let table = crate::eval::format_per_subject(&report);
        assert_eq!(table.lines().count(), 1 + 2 + 1);
        assert_eq!(m.sweep.len(), SWEEP_THRESHOLDS.len());

        let missing = &folds[..1];
        assert!(matches!(
            run_loso_evaluation(&ds, missing, &EvalOptions::default()),
            Err(EvalError::MissingFold { .. })
        ));
    }

    #[test]
    fn identical_methods_have_zero_variance() {
        let ds = data();
        let fold = loso_split(&ds, "s00").unwrap();
        let make = |method: &str, held_out: &str| FoldModel {
            method: method.into(),
            held_out: Some(held_out.into()),
            model: tiny_model(4),
            normalizer: fold.normalizer.clone(),
        };
        let folds = vec![make("x", "s00"), make("x", "s01"), make("y", "s00"), make("y", "s01")];
        let report = evaluate_folds(&ds, &folds, &EvalOptions::default()).unwrap();
        let kld = report.ttests.iter().find(|r| r.metric == "kld").unwrap();
        assert_eq!(kld.outcome, Err("zero_variance".to_string()));
        assert_eq!(kld.n, 2);
        let dup = vec![make("x", "s00"), make("x", "s00")];
        assert!(matches!(
            evaluate_folds(&ds, &dup, &EvalOptions::default()),
            Err(EvalError::DuplicateFold { .. })
        ));
    }
}
