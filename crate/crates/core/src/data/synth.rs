//! Seeded synthetic capture: a swaying BODY25 skeleton in mm (z up) with
//! insole pressure that follows its Dempster CoM.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, RawRecording, Skeleton};
use crate::stability::{dempster_com, localize_feet, GridGeometry, SegmentTable, ANKLE_ROW_FRACTION};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    /// Frames per subject.
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub cell_pitch_mm: f64,
    pub frame_rate: f64,
    pub seed: u64,
    /// Every n-th frame has no pressure at all.
    pub airborne_every: Option<usize>,
    /// Drop CoM labels so stability falls back to the Dempster estimate.
    pub with_com: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 3,
            frames: 60,
            rows: 12,
            cols: 5,
            cell_pitch_mm: 20.0,
            frame_rate: 50.0,
            seed: 0,
            airborne_every: None,
            with_com: true,
        }
    }
}

/// Standing BODY25 pose in mm, facing +y.
const TEMPLATE: [[f64; 3]; 25] = [
    [0.0, 60.0, 1600.0],
    [0.0, 0.0, 1450.0],
    [180.0, 0.0, 1420.0],
    [200.0, 0.0, 1150.0],
    [210.0, 20.0, 900.0],
    [-180.0, 0.0, 1420.0],
    [-200.0, 0.0, 1150.0],
    [-210.0, 20.0, 900.0],
    [0.0, 0.0, 950.0],
    [100.0, 0.0, 950.0],
    [100.0, 10.0, 520.0],
    [100.0, 0.0, 80.0],
    [-100.0, 0.0, 950.0],
    [-100.0, 10.0, 520.0],
    [-100.0, 0.0, 80.0],
    [30.0, 70.0, 1630.0],
    [-30.0, 70.0, 1630.0],
    [70.0, 20.0, 1610.0],
    [-70.0, 20.0, 1610.0],
    [-110.0, 200.0, 0.0],
    [-150.0, 180.0, 0.0],
    [-100.0, -50.0, 0.0],
    [110.0, 200.0, 0.0],
    [150.0, 180.0, 0.0],
    [100.0, -50.0, 0.0],
];

/// Ankles, heels and toes stay planted.
const PLANTED: [usize; 8] = [11, 14, 19, 20, 21, 22, 23, 24];
const LEFT_FOOT: [usize; 4] = [14, 19, 20, 21];
const RIGHT_FOOT: [usize; 4] = [11, 22, 23, 24];

struct Subject {
    scale: f64,
    body_weight: f64,
    sway: [f64; 2],
    freq: f64,
    phase: [f64; 2],
    stance: f64,
    toe_out: f64,
}

impl Subject {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Subject {
            scale: rng.random_range(0.9..1.1),
            body_weight: rng.random_range(550.0..900.0),
            sway: [rng.random_range(15.0..40.0), rng.random_range(10.0..30.0)],
            freq: rng.random_range(0.4..0.9),
            phase: [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
            stance: rng.random_range(0.0..40.0),
            toe_out: rng.random_range(0.0..0.2),
        }
    }

    fn pose(&self, time: f64, noise: &mut impl FnMut() -> f64) -> Vec<f64> {
        let w = TAU * self.freq * time;
        let sx = self.sway[0] * (w + self.phase[0]).sin();
        let sy = self.sway[1] * (0.5 * w + self.phase[1]).sin();
        let arm = 40.0 * (w + self.phase[1]).sin();
        let mut out = Vec::with_capacity(75);
        for (j, p) in TEMPLATE.iter().enumerate() {
            let mut q = p.map(|v| v * self.scale);
            if PLANTED.contains(&j) {
                let (side, yaw) = if LEFT_FOOT.contains(&j) {
                    (-1.0, -self.toe_out)
                } else {
                    debug_assert!(RIGHT_FOOT.contains(&j));
                    (1.0, self.toe_out)
                };
                let ankle_x = TEMPLATE[if side < 0.0 { 14 } else { 11 }][0] * self.scale;
                let (s, c) = (-yaw).sin_cos();
                let (dx, dy) = (q[0] - ankle_x, q[1]);
                q[0] = ankle_x + side * self.stance + c * dx - s * dy;
                q[1] = s * dx + c * dy;
            } else {
                let lean = q[2] / (1000.0 * self.scale);
                q[0] += sx * lean;
                q[1] += sy * lean;
                if matches!(j, 4 | 7) {
                    q[1] += if j == 4 { arm } else { -arm };
                }
            }
            out.extend(q.iter().map(|v| v + noise()));
        }
        out
    }
}

/// Foot pressure in kPa whose per-foot load follows the CoM.
fn pressure_frame(
    pose: &[f64],
    com: [f64; 3],
    body_weight: f64,
    geometry: &GridGeometry,
    skeleton: &Skeleton,
) -> Vec<f64> {
    let feet = localize_feet(pose, 3, skeleton).expect("synthetic feet are well formed");
    let (lx, rx) = (pose[3 * skeleton.left.ankle], pose[3 * skeleton.right.ankle]);
    let left_share = ((rx - com[0]) / (rx - lx)).clamp(0.05, 0.95);
    let length = geometry.rows as f64 * geometry.pitch.1;
    let cell_area = geometry.pitch.0 * geometry.pitch.1;
    let mut out = Vec::with_capacity(2 * geometry.cells());
    for (f, share) in feet.iter().zip([left_share, 1.0 - left_share]) {
        // Along-foot position of the CoM, in rows from the heel edge.
        let (s, c) = f.angle.sin_cos();
        let along = -s * (com[0] - f.translation[0]) + c * (com[1] - f.translation[1]);
        let rc = (geometry.rows as f64 * (ANKLE_ROW_FRACTION + along / length)).clamp(1.0, geometry.rows as f64 - 2.0);
        let cc = (geometry.cols as f64 - 1.0) / 2.0;
        let (sr, sc) = (geometry.rows as f64 / 5.0, geometry.cols as f64 / 3.0);
        let weights: Vec<f64> = (0..geometry.rows)
            .flat_map(|r| {
                (0..geometry.cols).map(move |k| {
                    let dr = (r as f64 - rc) / sr;
                    let dc = (k as f64 - cc) / sc;
                    (-0.5 * (dr * dr + dc * dc)).exp()
                })
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let force = share * body_weight;
        out.extend(weights.iter().map(|w| {
            // N per mm^2 to kPa.
            let kpa = force * w / total / cell_area * 1000.0;
            if kpa < 1.0 {
                0.0
            } else {
                kpa
            }
        }));
    }
    out
}

pub fn generate_subject(cfg: &SynthConfig, index: usize) -> RawRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let subject = Subject::draw(&mut rng);
    let noise = Normal::new(0.0, 1.5).expect("finite");
    let skeleton = Skeleton::body25();
    let table = SegmentTable::body25();
    let geometry = GridGeometry {
        rows: cfg.rows,
        cols: cfg.cols,
        pitch: (cfg.cell_pitch_mm, cfg.cell_pitch_mm),
    };
    let mut poses = Vec::with_capacity(cfg.frames * 75);
    let mut pressure = Vec::with_capacity(cfg.frames * 2 * geometry.cells());
    let mut com = Vec::with_capacity(cfg.frames * 3);
    for t in 0..cfg.frames {
        let pose = subject.pose(t as f64 / cfg.frame_rate, &mut || noise.sample(&mut rng));
        let c = dempster_com(&pose, &table).expect("complete skeleton");
        let airborne = cfg.airborne_every.is_some_and(|n| n > 0 && t % n == n - 1);
        if airborne {
            pressure.extend(std::iter::repeat_n(0.0, 2 * geometry.cells()));
        } else {
            pressure.extend(pressure_frame(&pose, c, subject.body_weight, &geometry, &skeleton));
        }
        poses.extend(pose);
        com.extend(c);
    }
    RawRecording {
        subject_id: format!("s{index:02}"),
        skeleton,
        poses: Tensor::new(vec![cfg.frames, 25, 3], poses).expect("pose shape"),
        pressure: Tensor::new(vec![cfg.frames, 2, cfg.rows, cfg.cols], pressure).expect("pressure shape"),
        body_weight: Some(subject.body_weight),
        com: cfg
            .with_com
            .then(|| Tensor::new(vec![cfg.frames, 3], com).expect("com shape")),
        frame_rate: cfg.frame_rate,
        cell_pitch_mm: (cfg.cell_pitch_mm, cfg.cell_pitch_mm),
    }
}

pub fn generate(cfg: &SynthConfig) -> Dataset {
    let recs = (0..cfg.subjects).map(|i| generate_subject(cfg, i)).collect();
    Dataset::new(recs).expect("synthetic data is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::{com_cop_distance, ground_truth_stability};

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig::default();
        assert_eq!(generate(&cfg), generate(&cfg));
        let other = SynthConfig { seed: 9, ..cfg.clone() };
        assert_ne!(generate(&cfg), generate(&other));
    }

    #[test]
    fn pressure_tracks_the_com() {
        let cfg = SynthConfig {
            subjects: 1,
            frames: 40,
            ..Default::default()
        };
        let rec = &generate(&cfg).recordings[0];
        let frames = ground_truth_stability(rec, &SegmentTable::body25(), 5.0).unwrap();
        for f in &frames {
            let cop = f.cop.expect("loaded frame");
            assert!(com_cop_distance(f.com_floor, cop) < 40.0, "{f:?}");
            assert!(f.com_bos.unwrap() > 0.0);
        }
    }

    #[test]
    fn airborne_frames_are_empty() {
        let cfg = SynthConfig {
            subjects: 1,
            frames: 10,
            airborne_every: Some(5),
            ..Default::default()
        };
        let rec = &generate(&cfg).recordings[0];
        assert!(rec.pressure_frame(4).iter().all(|v| *v == 0.0));
        assert!(rec.pressure_frame(3).iter().any(|v| *v > 0.0));
    }
}
