use crate::stability::{com_cop_distance, compute_bos, compute_cop, polygon_iou, Point};

/// BoS thresholds in kPa swept by default.
pub const SWEEP_THRESHOLDS: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0];

/// Predicted and reference kPa maps of one frame on their placed cells.
#[derive(Debug, Clone, Copy)]
pub struct SweepFrame<'a> {
    pub pred: &'a [f64],
    pub gt: &'a [f64],
    pub pred_cells: &'a [Point],
    pub gt_cells: &'a [Point],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    /// Mean CoP distance in mm; NaN when no frame qualified.
    pub cop_mm: f64,
    pub bos_iou: f64,
    pub frames: usize,
    /// Frames left out because a CoP or hull was undefined.
    pub skipped: usize,
}

fn above(values: &[f64], threshold: f64) -> Vec<f64> {
    values.iter().map(|&v| if v > threshold { v } else { 0.0 }).collect()
}

/// Running sums of a threshold sweep, fed one frame at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAccumulator {
    thresholds: Vec<f64>,
    cop: Vec<f64>,
    iou: Vec<f64>,
    used: Vec<usize>,
    skipped: Vec<usize>,
}

impl SweepAccumulator {
    pub fn new(thresholds: &[f64]) -> Self {
        let n = thresholds.len();
        SweepAccumulator {
            thresholds: thresholds.to_vec(),
            cop: vec![0.0; n],
            iou: vec![0.0; n],
            used: vec![0; n],
            skipped: vec![0; n],
        }
    }

    /// Applies each threshold to both maps before measuring.
    pub fn add(&mut self, f: &SweepFrame<'_>) {
        for (i, &th) in self.thresholds.iter().enumerate() {
            let measured = (|| {
                let pc = compute_cop(&above(f.pred, th), f.pred_cells).ok()?;
                let gc = compute_cop(&above(f.gt, th), f.gt_cells).ok()?;
                let pb = compute_bos(f.pred, f.pred_cells, th).ok()?;
                let gb = compute_bos(f.gt, f.gt_cells, th).ok()?;
                Some((com_cop_distance(pc, gc), polygon_iou(&pb, &gb)))
            })();
            match measured {
                Some((c, u)) => {
                    self.cop[i] += c;
                    self.iou[i] += u;
                    self.used[i] += 1;
                }
                None => self.skipped[i] += 1,
            }
        }
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        (0..self.thresholds.len())
            .map(|i| {
                let n = self.used[i];
                let mean = |s: f64| if n == 0 { f64::NAN } else { s / n as f64 };
                SweepRow {
                    threshold: self.thresholds[i],
                    cop_mm: mean(self.cop[i]),
                    bos_iou: mean(self.iou[i]),
                    frames: n,
                    skipped: self.skipped[i],
                }
            })
            .collect()
    }
}

/// CoP error and BoS IoU with the threshold applied to both maps.
pub fn threshold_sweep(frames: &[SweepFrame<'_>], thresholds: &[f64]) -> Vec<SweepRow> {
    let mut acc = SweepAccumulator::new(thresholds);
    frames.iter().for_each(|f| acc.add(f));
    acc.rows()
}

pub const SWEEP_HEADER: &str = "threshold,cop_mm,bos_iou,frames,skipped";

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.threshold, r.cop_mm, r.bos_iou, r.frames, r.skipped
        ));
    }
    out
}
