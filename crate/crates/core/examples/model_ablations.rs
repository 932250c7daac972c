//! Builds every encoder / temporal module / gating combination, runs one
//! window through each and prints the output heads. Also prints the
//! causal attention band.
//!
//!     cargo run --release --example model_ablations

use footformer::model::{build_temporal_mask, EncoderKind, FootFormer, ModelConfig, PoseSequence, TemporalKind};
use footformer::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = ModelConfig {
        embed_dim: 64,
        layers: 2,
        heads: 4,
        mlp_hidden: 128,
        decoder_hidden: 32,
        decoder_heads: 4,
        ..Default::default()
    };
    let n = base.window * base.joints * base.features;
    let frames = Tensor::new(
        vec![base.window, base.joints, base.features],
        (0..n).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect(),
    )?;
    let seq = PoseSequence::new(frames, "demo")?;

    println!(
        "published size: {} parameters",
        FootFormer::new(ModelConfig::default(), 0)?.params().scalar_count()
    );
    println!(
        "\n{:<8} {:<18} {:<7} {:>8} {:>10} {:>9} {:>8}",
        "encoder", "temporal", "gating", "params", "sum(p)", "max(p)", "contacts"
    );
    for encoder in EncoderKind::ALL {
        for temporal in TemporalKind::ALL {
            for gating in [true, false] {
                let cfg = ModelConfig {
                    encoder: *encoder,
                    temporal: *temporal,
                    gating,
                    ..base.clone()
                };
                let model = FootFormer::new(cfg, 1)?;
                let out = model.predict(&seq)?;
                let p = out.pressure.data();
                let bits: String = out.contact_bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
                println!(
                    "{:<8} {:<18} {:<7} {:>8} {:>10.6} {:>9.2e} {:>8}",
                    encoder.as_str(),
                    temporal.as_str(),
                    gating,
                    model.params().scalar_count(),
                    p.iter().sum::<f64>(),
                    p.iter().cloned().fold(0.0, f64::max),
                    bits
                );
            }
        }
    }

    let mask = build_temporal_mask(base.window, base.mask_window);
    println!("\nattention band (row = query frame, x = may attend):");
    for i in 0..base.window {
        let row: String = (0..base.window)
            .map(|j| if mask.allows(i, j) { 'x' } else { '.' })
            .collect();
        println!("  {i} {row}");
    }
    Ok(())
}
