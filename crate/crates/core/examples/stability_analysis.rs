//! Center of pressure, base of support and the CoM-based stability
//! measures for one synthetic recording, plus the BoS threshold sweep.
//!
//!     cargo run --release --example stability_analysis

use footformer::data::synth::{generate, SynthConfig};
use footformer::eval::{summarize, threshold_sweep, SweepFrame, SWEEP_THRESHOLDS};
use footformer::stability::{
    compute_bos, convex_hull, ground_truth_stability, polygon_iou, FloorSetup, SegmentTable, DEFAULT_BOS_THRESHOLD,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SynthConfig {
        subjects: 1,
        frames: 100,
        airborne_every: Some(25),
        ..Default::default()
    });
    let rec = &ds.recordings[0];
    let frames = ground_truth_stability(rec, &SegmentTable::body25(), DEFAULT_BOS_THRESHOLD)?;

    println!("frame   cop_x    cop_y   com_cop  com_bos  bos_area");
    for f in frames.iter().step_by(10) {
        match (f.cop, f.com_cop, f.com_bos, f.bos_area()) {
            (Some(c), Some(d), Some(b), Some(a)) => {
                println!(
                    "{:>5} {:>8.1} {:>8.1} {:>8.1} {:>8.1} {:>9.0}",
                    f.frame, c[0], c[1], d, b, a
                )
            }
            _ => println!("{:>5} airborne", f.frame),
        }
    }

    let com_cop: Vec<f64> = frames.iter().filter_map(|f| f.com_cop).collect();
    let com_bos: Vec<f64> = frames.iter().filter_map(|f| f.com_bos).collect();
    for (name, v) in [("CoM-CoP mm", &com_cop), ("CoM-BoS mm", &com_bos)] {
        let s = summarize(v)?;
        println!(
            "{name}: mean {:.2} +- {:.2}, median {:.2} +- {:.2} (rSTD), n={}",
            s.mean, s.std, s.median, s.rstd, s.n
        );
    }

    // The same map seen at a raised threshold shrinks the support polygon.
    let setup = FloorSetup::of(rec);
    let cells = setup.cells(rec.pose_frame(0))?;
    let values = rec.pressure_frame(0);
    let low = compute_bos(values, &cells, 5.0)?;
    let high = compute_bos(values, &cells, 40.0)?;
    println!(
        "\nframe 0 BoS area {:.0} mm^2 at 5 kPa, {:.0} mm^2 at 40 kPa, IoU {:.3}",
        low.area(),
        high.area(),
        polygon_iou(&low, &high)
    );
    let hull = convex_hull(&cells)?;
    println!("both insoles cover {:.0} mm^2", hull.area());

    // Sweep with a shifted copy of the map standing in for a prediction.
    let shifted: Vec<Vec<f64>> = (0..rec.frames())
        .map(|t| {
            let v = rec.pressure_frame(t);
            let mut s = v.to_vec();
            s.rotate_right(1);
            s
        })
        .collect();
    let cell_sets: Vec<_> = (0..rec.frames())
        .map(|t| setup.cells(rec.pose_frame(t)))
        .collect::<Result<_, _>>()?;
    let sweep_frames: Vec<SweepFrame> = (0..rec.frames())
        .map(|t| SweepFrame {
            pred: &shifted[t],
            gt: rec.pressure_frame(t),
            pred_cells: &cell_sets[t],
            gt_cells: &cell_sets[t],
        })
        .collect();
    println!("\nthreshold  cop_mm  bos_iou  frames");
    for row in threshold_sweep(&sweep_frames, &SWEEP_THRESHOLDS) {
        println!(
            "{:>9} {:>7.2} {:>8.3} {:>7}",
            row.threshold, row.cop_mm, row.bos_iou, row.frames
        );
    }
    Ok(())
}
