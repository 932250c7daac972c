//! Leave-one-subject-out evaluation of two model variants on synthetic
//! data, with per-subject metrics, pooled summaries and paired t-tests.
//!
//!     cargo run --release --example loso_evaluation [report_dir]

use footformer::config::RunConfig;
use footformer::data::synth::{generate, SynthConfig};
use footformer::eval::{format_summary, format_ttests, run_loso_evaluation, write_report};
use footformer::pipeline::train_fold;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SynthConfig {
        subjects: 4,
        frames: 40,
        ..Default::default()
    });
    let mut base = RunConfig::default();
    base.apply_text(
        "model.features=3\nmodel.embed_dim=16\nmodel.layers=1\nmodel.heads=2\nmodel.mlp_hidden=32\n\
         model.decoder_hidden=8\nmodel.decoder_heads=2\nmodel.dropout=0\nmodel.pressure_rows=12\n\
         model.pressure_cols=5\ntrain.epochs=40\ntrain.batch_size=16\ntrain.lr=0.003\n",
    )?;

    let mut folds = Vec::new();
    for (method, temporal) in [("stt", "stt"), ("gru", "gru")] {
        for subject in ds.subjects() {
            let mut cfg = base.clone();
            cfg.set("train.method", method)?;
            cfg.set("model.temporal", temporal)?;
            cfg.held_out = Some(subject.clone());
            let fold = train_fold(&ds, &cfg, |_| {})?;
            let last = fold.log.last().map_or(f64::NAN, |l| l.total);
            println!("{method:<4} held out {subject}: final training loss {last:.4}");
            folds.push(fold.fold_model());
        }
    }

    let report = run_loso_evaluation(&ds, &folds, &base.eval_options())?;
    for m in &report.methods {
        println!("\n{}:", m.method);
        for s in &m.subjects {
            println!(
                "  {} KLD {:.4} F1 {:.3} CoM {:.1} mm CoP {:.1} mm",
                s.subject,
                s.kld.unwrap_or(f64::NAN),
                s.f1,
                s.com_mm.unwrap_or(f64::NAN),
                s.cop_mm.unwrap_or(f64::NAN)
            );
        }
    }
    println!("\n{}", format_summary(&report));
    println!("{}", format_ttests(&report));
    if let Some(dir) = std::env::args().nth(1) {
        write_report(dir.as_ref(), &report)?;
        println!("report written to {dir}");
    }
    Ok(())
}
