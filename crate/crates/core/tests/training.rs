mod common;

use common::*;
use footformer::model::{EncoderKind, FootFormer, ModelConfig, PoolingKind, TemporalKind};
use footformer::training::{evaluate_loss, model_gradient_check, train, AdamWConfig, TrainConfig};

fn config(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed: 3,
        optimizer: AdamWConfig {
            lr,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn zero_learning_rate_keeps_every_epoch_identical() {
    let samples = samples_of(&synth(2, 10), 9);
    let mut model = FootFormer::new(tiny_model_config(), 1).unwrap();
    let before = model.clone();
    let logs = train(&mut model, &samples, &config(4, 0.0), |_| {}).unwrap();
    assert_eq!(model, before);
    for l in &logs[1..] {
        assert_eq!(
            (l.pressure, l.contact, l.com, l.total),
            (logs[0].pressure, logs[0].contact, logs[0].com, logs[0].total)
        );
    }
    let eval = evaluate_loss(&model, &samples, &config(1, 0.0)).unwrap();
    assert!((eval.total - logs[0].total).abs() < 1e-12);
}

#[test]
fn training_is_reproducible_from_the_seed() {
    let samples = samples_of(&synth(2, 10), 9);
    let cfg_model = ModelConfig {
        dropout: 0.2,
        ..tiny_model_config()
    };
    let run = |seed: u64| {
        let mut m = FootFormer::new(cfg_model.clone(), 5).unwrap();
        let logs = train(
            &mut m,
            &samples,
            &TrainConfig {
                seed,
                ..config(3, 1e-3)
            },
            |_| {},
        )
        .unwrap();
        (m, logs)
    };
    let (a, la) = run(1);
    let (b, lb) = run(1);
    let (c, _) = run(2);
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_ne!(a, c);
}

#[test]
fn loss_falls_on_a_small_set() {
    let samples = samples_of(&synth(1, 24), 9);
    let mut model = FootFormer::new(tiny_model_config(), 2).unwrap();
    let mut seen = Vec::new();
    let logs = train(&mut model, &samples, &config(60, 3e-3), |l| seen.push(l.epoch)).unwrap();
    assert_eq!(seen, (1..=60).collect::<Vec<_>>());
    let (first, last) = (logs[0].total, logs[59].total);
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn composed_loss_gradients_match_finite_differences() {
    let samples = samples_of(&synth(1, 3), 5);
    for encoder in EncoderKind::ALL {
        for temporal in TemporalKind::ALL {
            for (gating, pooling) in [(true, PoolingKind::Attention), (false, PoolingKind::Mean)] {
                let cfg = ModelConfig {
                    window: 5,
                    mask_window: 2,
                    encoder: *encoder,
                    temporal: *temporal,
                    gating,
                    pooling,
                    ..tiny_model_config()
                };
                let model = FootFormer::new(cfg, 4).unwrap();
                let err = model_gradient_check(&model, &samples, &config(1, 0.0), 40, 1e-4, 9).unwrap();
                assert!(err < 1e-3, "{encoder} {temporal} gating={gating}: {err}");
            }
        }
    }
}

#[test]
fn empty_and_invalid_training_inputs_are_rejected() {
    let mut model = FootFormer::new(tiny_model_config(), 0).unwrap();
    assert!(train(&mut model, &[], &config(1, 1e-3), |_| {}).is_err());
    let samples = samples_of(&synth(1, 3), 9);
    let bad = TrainConfig {
        batch_size: 0,
        ..config(1, 1e-3)
    };
    assert!(train(&mut model, &samples, &bad, |_| {}).is_err());
}
