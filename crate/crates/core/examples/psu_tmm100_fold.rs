//! One leave-one-subject-out fold on a local copy of PSU-TMM100, reporting
//! the held-out KLD. The dataset is not distributed with this crate and
//! must first be converted into the recording directory format (one
//! directory per take with poses.ftk, pressure.ftk, com.ftk and meta.txt)
//! listed in a manifest.
//!
//!     PSU_TMM100_MANIFEST=/data/psu/manifest.txt \
//!     cargo run --release --example psu_tmm100_fold -- [held_out] [config]
//!
//! The optional config is a `key=value` file as printed by
//! `footformer dump-defaults`; input and grid sizes are taken from the
//! data. Published models reach a mean KLD of roughly 1 to 3 on this
//! data; the number printed here is informational only.

use std::path::PathBuf;

use footformer::config::RunConfig;
use footformer::data::Dataset;
use footformer::eval::evaluate_folds;
use footformer::pipeline::train_fold;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Some(manifest) = std::env::var_os("PSU_TMM100_MANIFEST").map(PathBuf::from) else {
        println!("PSU_TMM100_MANIFEST is not set; skipping");
        return Ok(());
    };
    if !manifest.is_file() {
        println!("{} does not exist; skipping", manifest.display());
        return Ok(());
    }
    let mut args = std::env::args().skip(1);
    let held_out = args.next();
    let mut cfg = match args.next() {
        Some(p) => RunConfig::load(p.as_ref())?,
        None => RunConfig::default(),
    };

    let ds = Dataset::load(&manifest)?;
    let first = &ds.recordings[0];
    let (rows, cols) = first.grid_dims();
    cfg.model.joints = first.joints();
    cfg.model.features = first.features();
    cfg.model.pressure_rows = rows;
    cfg.model.pressure_cols = cols;
    let subjects = ds.subjects();
    cfg.held_out = Some(held_out.unwrap_or_else(|| subjects[0].clone()));
    println!(
        "{} recordings, {} subjects, holding out {}",
        ds.recordings.len(),
        subjects.len(),
        cfg.held_out.as_deref().unwrap_or_default()
    );

    let fold = train_fold(&ds, &cfg, |l| println!("{}", l.record()))?;
    let report = evaluate_folds(&ds, &[fold.fold_model()], &cfg.eval_options())?;
    for s in &report.methods[0].subjects {
        println!(
            "{}: KLD {:.3} over {} frames ({} airborne)",
            s.subject,
            s.kld.unwrap_or(f64::NAN),
            s.frames,
            s.airborne
        );
    }
    Ok(())
}
