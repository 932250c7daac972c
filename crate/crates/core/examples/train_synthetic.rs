//! Overfits a small FootFormer to 100 synthetic windows and prints the
//! loss curve together with the final training-set KLD.
//!
//!     cargo run --release --example train_synthetic [epochs]

use footformer::data::synth::{generate, SynthConfig};
use footformer::data::{build_samples, ContactSpec, Normalizer, RawRecording};
use footformer::eval::kld_metric;
use footformer::model::{FootFormer, ModelConfig};
use footformer::training::{train, AdamWConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let ds = generate(&SynthConfig {
        subjects: 2,
        frames: 50,
        ..Default::default()
    });
    let recs: Vec<&RawRecording> = ds.recordings.iter().collect();
    let norm = Normalizer::fit(&recs)?;
    let model_cfg = ModelConfig {
        features: 3,
        embed_dim: 32,
        layers: 2,
        heads: 4,
        mlp_hidden: 64,
        decoder_hidden: 32,
        decoder_heads: 4,
        dropout: 0.0,
        pressure_rows: 12,
        pressure_cols: 5,
        ..Default::default()
    };
    let set = build_samples(&recs, &norm, &ContactSpec::default(), model_cfg.window)?;
    println!(
        "{} windows, {} parameters",
        set.len(),
        FootFormer::new(model_cfg.clone(), 0)?.params().scalar_count()
    );

    let cfg = TrainConfig {
        epochs,
        batch_size: 10,
        seed: 7,
        optimizer: AdamWConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut model = FootFormer::new(model_cfg, cfg.seed)?;
    let start = std::time::Instant::now();
    let logs = train(&mut model, &set.samples, &cfg, |l| {
        if l.epoch == 1 || l.epoch % 20 == 0 {
            println!("{}", l.record());
        }
    })?;
    let first = logs.first().map_or(f64::NAN, |l| l.total);
    let last = logs.last().map_or(f64::NAN, |l| l.total);

    let mut kld = 0.0;
    let mut n = 0;
    for s in &set.samples {
        if let Some(target) = &s.pressure {
            kld += kld_metric(model.predict(&s.window)?.pressure.data(), target)?;
            n += 1;
        }
    }
    println!(
        "loss {first:.4} -> {last:.4} ({:.1}% drop), training KLD {:.4}, {:.1}s",
        100.0 * (1.0 - last / first),
        kld / n as f64,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
