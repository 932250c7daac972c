//! Writes a synthetic capture to disk in the directory format the command
//! line reads, and prints the manifest path.
//!
//!     cargo run --example synthetic_dataset -- /tmp/synth [subjects] [frames]
//!     footformer train --data /tmp/synth/manifest.txt --out model.ckpt \
//!         --set model.features=3 --set model.pressure_rows=12 --set model.pressure_cols=5 ...

use std::path::PathBuf;

use footformer::data::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_data".into()));
    let subjects = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let frames = args.next().map(|s| s.parse()).transpose()?.unwrap_or(120);
    let cfg = SynthConfig {
        subjects,
        frames,
        airborne_every: Some(40),
        ..Default::default()
    };
    let ds = generate(&cfg);
    let manifest = ds.save(&root)?;
    let rec = &ds.recordings[0];
    let (rows, cols) = rec.grid_dims();
    println!(
        "{} recordings of {} frames: {} joints x {} features, two {rows}x{cols} grids at {} mm",
        ds.recordings.len(),
        frames,
        rec.joints(),
        rec.features(),
        cfg.cell_pitch_mm
    );
    println!("{}", manifest.display());
    Ok(())
}
