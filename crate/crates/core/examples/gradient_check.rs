//! Verifies the hand-written backward rules against central differences,
//! first op by op and then through the full multi-task loss.
//!
//!     cargo run --release --example gradient_check

use footformer::data::synth::{generate, SynthConfig};
use footformer::data::{build_samples, ContactSpec, Normalizer, RawRecording};
use footformer::gradcheck::{finite_difference_check, primitive_suite};
use footformer::model::{FootFormer, ModelConfig};
use footformer::training::{model_gradient_check, TrainConfig};
use footformer::{Graph, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A single function of one input: f(x) = sum(tanh(x) * x).
    let x = Tensor::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.5]])?;
    let err = finite_difference_check(
        |g: &mut Graph, v| {
            let t = g.tanh(v);
            let y = g.mul(t, v)?;
            Ok(g.sum(y))
        },
        &x,
        1e-4,
    )?;
    println!("sum(tanh(x) * x): relative error {err:.2e}");

    println!("\nevery primitive, seed 0:");
    for (name, err) in primitive_suite(0, 1e-4)? {
        println!("  {name:<32} {err:.2e}");
    }

    let ds = generate(&SynthConfig {
        subjects: 1,
        frames: 4,
        ..Default::default()
    });
    let recs: Vec<&RawRecording> = ds.recordings.iter().collect();
    let norm = Normalizer::fit(&recs)?;
    let cfg = ModelConfig {
        features: 3,
        embed_dim: 16,
        layers: 2,
        heads: 2,
        mlp_hidden: 16,
        decoder_hidden: 8,
        decoder_heads: 2,
        dropout: 0.0,
        pressure_rows: 12,
        pressure_cols: 5,
        ..Default::default()
    };
    let samples = build_samples(&recs, &norm, &ContactSpec::default(), cfg.window)?.samples;
    let model = FootFormer::new(cfg, 0)?;
    let err = model_gradient_check(&model, &samples, &TrainConfig::default(), 200, 1e-4, 1)?;
    println!(
        "\nfull model loss over {} windows, 200 random parameters: {err:.2e}",
        samples.len()
    );
    Ok(())
}
