//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when a
//! gating criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use footformer::cli::main_with_args;
use footformer::data::{build_samples, loso_split, round_robin, ContactSpec, Normalizer, RawRecording};
use footformer::eval::{kld_metric, paired_t_test, summarize};
use footformer::gradcheck::primitive_suite;
use footformer::model::{EncoderKind, FootFormer, ModelConfig, PoolingKind, PoseSequence, TemporalKind};
use footformer::stability::{convex_hull, polygon_iou, Point, Polygon};
use footformer::training::{model_gradient_check, train, AdamWConfig, TrainConfig};
use footformer::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;

/// Prefix marking a non-gating criterion that could not run here.
const SKIP: &str = "skip:";

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(
        elapsed <= Duration::from_secs(limit_s),
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn ablation(i: usize) -> (EncoderKind, TemporalKind, bool) {
    (
        EncoderKind::ALL[i % 3],
        TemporalKind::ALL[(i / 3) % 3],
        (i / 9) % 2 == 0,
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let samples = samples_of(&synth(1, 4), 5);
    let (mut worst_prim, mut worst_model) = (0.0f64, 0.0f64);
    for seed in 0..100u64 {
        for (name, err) in primitive_suite(seed, 1e-4).map_err(|e| e.to_string())? {
            check(err < 1e-4, format!("{name} at seed {seed}: relative error {err:e}"))?;
            worst_prim = worst_prim.max(err);
        }
        let (encoder, temporal, gating) = ablation(seed as usize);
        let cfg = ModelConfig {
            window: 5,
            mask_window: 2,
            encoder,
            temporal,
            gating,
            pooling: if seed % 2 == 0 {
                PoolingKind::Attention
            } else {
                PoolingKind::Mean
            },
            ..tiny_model_config()
        };
        let model = FootFormer::new(cfg, seed).map_err(|e| e.to_string())?;
        let train_cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        let err = model_gradient_check(&model, &samples, &train_cfg, 30, 1e-4, seed).map_err(|e| e.to_string())?;
        check(
            err < 1e-3,
            format!("model {encoder}/{temporal} at seed {seed}: relative error {err:e}"),
        )?;
        worst_model = worst_model.max(err);
    }
    within(start.elapsed(), 300)?;
    Ok(format!(
        "100 seeds, worst primitive {worst_prim:.2e}, worst composed {worst_model:.2e}, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn simplex() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let passes = 10_000;
    let mut models = Vec::new();
    for i in 0..18 {
        let (encoder, temporal, gating) = ablation(i);
        let cfg = ModelConfig {
            encoder,
            temporal,
            gating,
            ..tiny_model_config()
        };
        for s in 0..4 {
            models.push(FootFormer::new(cfg.clone(), (i * 4 + s) as u64).map_err(|e| e.to_string())?);
        }
    }
    for pass in 0..passes {
        let model = &models[pass % models.len()];
        let c = model.config();
        let scale = rng.random_range(0.1..10.0);
        let n = c.window * c.joints * c.features;
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let seq = PoseSequence::new(Tensor::new(vec![c.window, c.joints, c.features], data).unwrap(), "")
            .map_err(|e| e.to_string())?;
        let out = model.predict(&seq).map_err(|e| e.to_string())?;
        let p = out.pressure.data();
        let dev = (p.iter().sum::<f64>() - 1.0).abs();
        check(dev <= 1e-6, format!("pass {pass}: sum deviates by {dev:e}"))?;
        check(p.iter().all(|&v| v >= 0.0), format!("pass {pass}: negative entry"))?;
        worst = worst.max(dev);
    }
    Ok(format!(
        "{passes} passes over 3 encoders x 3 temporal modules x gating, worst |sum-1| {worst:.1e}"
    ))
}

fn causality() -> Outcome {
    let mut pairs = 0;
    for encoder in EncoderKind::ALL {
        let cfg = ModelConfig {
            encoder: *encoder,
            layers: 1,
            window: 9,
            ..tiny_model_config()
        };
        let model = FootFormer::new(cfg.clone(), 23).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = cfg.window * cfg.joints * cfg.features;
        let base = Tensor::new(
            vec![cfg.window, cfg.joints, cfg.features],
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let embed = |x: &Tensor| {
            let mut g = Graph::new();
            let p = model.params().bind(&mut g);
            let out = model.forward(&mut g, &p, x).unwrap();
            g.value(out.refined).clone()
        };
        let reference = embed(&base);
        let (d, frame) = (cfg.embed_dim, cfg.joints * cfg.features);
        for k in 0..cfg.window {
            let mut x = base.clone();
            x.data_mut()[k * frame..(k + 1) * frame]
                .iter_mut()
                .for_each(|v| *v += 0.5);
            let out = embed(&x);
            for t in 0..cfg.window {
                let allowed = t >= k && t - k <= cfg.mask_window;
                let same = out.data()[t * d..(t + 1) * d] == reference.data()[t * d..(t + 1) * d];
                check(
                    same || allowed,
                    format!("{encoder}: perturbing frame {k} changed row {t}"),
                )?;
                check(
                    !same || !allowed || t != k,
                    format!("{encoder}: frame {k} has no effect on row {t}"),
                )?;
                pairs += 1;
            }
        }
    }
    Ok(format!(
        "T=9, {pairs} (t, k) pairs over 3 encoders, out-of-band rows bit-identical"
    ))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let ds = synth(2, 50);
    let recs: Vec<&RawRecording> = ds.recordings.iter().collect();
    let norm = Normalizer::fit(&recs).map_err(|e| e.to_string())?;
    let cfg = ModelConfig {
        embed_dim: 32,
        heads: 4,
        mlp_hidden: 64,
        decoder_hidden: 32,
        decoder_heads: 4,
        ..tiny_model_config()
    };
    let set = build_samples(&recs, &norm, &ContactSpec::default(), cfg.window).map_err(|e| e.to_string())?;
    check(set.len() == 100, format!("{} windows", set.len()))?;
    let tc = TrainConfig {
        epochs: 200,
        batch_size: 10,
        seed: 7,
        optimizer: AdamWConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut model = FootFormer::new(cfg, tc.seed).map_err(|e| e.to_string())?;
    let logs = train(&mut model, &set.samples, &tc, |_| {}).map_err(|e| e.to_string())?;
    let (first, last) = (logs[0].total, logs[logs.len() - 1].total);
    let drop = 1.0 - last / first;
    let mut klds = Vec::new();
    for s in &set.samples {
        if let Some(target) = &s.pressure {
            let pred = model.predict(&s.window).map_err(|e| e.to_string())?;
            klds.push(kld_metric(pred.pressure.data(), target).map_err(|e| e.to_string())?);
        }
    }
    let kld = klds.iter().sum::<f64>() / klds.len() as f64;
    check(drop >= 0.9, format!("loss fell only {:.1}%", 100.0 * drop))?;
    check(kld < 0.05, format!("training KLD {kld}"))?;
    within(start.elapsed(), 600)?;
    Ok(format!(
        "loss {first:.3} -> {last:.3} ({:.1}% drop), training KLD {kld:.4}, {:.1}s",
        100.0 * drop,
        start.elapsed().as_secs_f64()
    ))
}

fn random_polygon(rng: &mut ChaCha8Rng) -> Polygon {
    loop {
        let (cx, cy) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = rng.random_range(0.3..1.5);
        let n = rng.random_range(3..12);
        let pts: Vec<Point> = (0..n)
            .map(|_| [cx + rng.random_range(-r..r), cy + rng.random_range(-r..r)])
            .collect();
        if let Ok(p) = convex_hull(&pts) {
            return p;
        }
    }
}

fn monte_carlo_iou(a: &Polygon, b: &Polygon, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let all = a.vertices().iter().chain(b.vertices());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in all {
        for i in 0..2 {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for _ in 0..samples {
        let p = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
        let (ia, ib) = (a.contains(p), b.contains(p));
        inter += usize::from(ia && ib);
        union += usize::from(ia || ib);
    }
    inter as f64 / union as f64
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut overlapping = 0;
    for i in 0..100 {
        let a = random_polygon(&mut rng);
        let b = random_polygon(&mut rng);
        let exact = polygon_iou(&a, &b);
        let mc = monte_carlo_iou(&a, &b, 1_000_000, &mut rng);
        let err = (exact - mc).abs();
        check(err < 1e-2, format!("pair {i}: exact {exact} vs Monte Carlo {mc}"))?;
        worst = worst.max(err);
        overlapping += usize::from(exact > 0.0);
    }
    let square = |x: f64| Polygon::new(vec![[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0]]).unwrap();
    let third = polygon_iou(&square(0.0), &square(0.5));
    check(
        (third - 1.0 / 3.0).abs() <= 1e-12,
        format!("offset squares give {third}"),
    )?;
    Ok(format!(
        "100 pairs ({overlapping} overlapping) vs 1e6-sample Monte Carlo, worst {worst:.1e}; offset squares {third}"
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut full = vec!["footformer"];
    full.extend(args);
    match main_with_args(&full) {
        0 => Ok(()),
        code => Err(format!("`{}` exited with {code}", args.join(" "))),
    }
}

fn self_consistency() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let ds = synth(3, 40);
    let manifest = write_dataset(&ds, &dir.path().join("data"));
    let out = dir.path().join("stability");
    run_cli(&["stability", "--data", path_str(&manifest), "--out", path_str(&out)])?;
    let mut frames = 0;
    for subject in ds.subjects() {
        let (header, rows) = read_csv(&out.join(&subject).join("errors.csv"));
        let (com_cop, iou) = (column(&header, "com_cop_err_mm"), column(&header, "bos_iou"));
        for r in &rows {
            let e: f64 = r[com_cop]
                .parse()
                .map_err(|_| format!("{subject} frame {}: no CoM-CoP error", r[0]))?;
            let u: f64 = r[iou]
                .parse()
                .map_err(|_| format!("{subject} frame {}: no BoS IoU", r[0]))?;
            check(e <= 1e-9, format!("{subject} frame {}: CoM-CoP error {e}", r[0]))?;
            check(u >= 1.0 - 1e-9, format!("{subject} frame {}: BoS IoU {u}", r[0]))?;
            frames += 1;
        }
    }
    check(frames == 120, format!("{frames} frames analysed"))?;
    Ok(format!(
        "{frames} frames, CoM-CoP error <= 1e-9 mm and BoS IoU >= 1-1e-9 on each"
    ))
}

fn statistics() -> Outcome {
    let table: [(usize, [f64; 3]); 4] = [
        (2, [0.42264973081037427, 0.1835034190722739, 0.09546596626670913]),
        (5, [0.36321746764912255, 0.10193947882985828, 0.03009924789746257]),
        (10, [0.3408931323020601, 0.07338803477074039, 0.013343655022569565]),
        (30, [0.32530861542602985, 0.0546250449629831, 0.005389964065651944]),
    ];
    let mut worst = 0.0f64;
    for (dof, ps) in table {
        let n = dof + 1;
        // Zero-mean pattern with unit sample standard deviation.
        let raw: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin() + i as f64 * 0.01).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        for (t, expected) in [1.0, 2.0, 3.0].into_iter().zip(ps) {
            let shift = t / (n as f64).sqrt();
            let a: Vec<f64> = raw.iter().map(|v| (v - mean) / sd + shift + 10.0).collect();
            let b = vec![10.0; n];
            let r = paired_t_test(&a, &b).map_err(|e| e.to_string())?;
            check(r.dof == dof, format!("dof {} for {n} pairs", r.dof))?;
            let err = (r.p - expected).abs();
            check(err < 1e-3, format!("t={t} dof={dof}: p {} vs {expected}", r.p))?;
            worst = worst.max(err);
        }
    }
    let rstd = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0]).map_err(|e| e.to_string())?.rstd;
    check(rstd == 1.4826, format!("rSTD of 1..5 is {rstd}"))?;
    Ok(format!("12 t-table p-values within {worst:.1e}; rSTD(1..5) = {rstd}"))
}

fn protocol() -> Outcome {
    let ds = synth(10, 12);
    let folds = round_robin(&ds).map_err(|e| e.to_string())?;
    check(folds.len() == 10, format!("{} folds", folds.len()))?;
    let mut seen = vec![0usize; ds.recordings.len()];
    for f in &folds {
        check(
            f.train.len() + f.test.len() == ds.recordings.len() && f.train.iter().all(|i| !f.test.contains(i)),
            format!("fold {} does not split the recordings", f.held_out),
        )?;
        check(
            f.test_recordings(&ds).iter().all(|r| r.subject_id == f.held_out)
                && f.train_recordings(&ds).iter().all(|r| r.subject_id != f.held_out),
            format!("fold {} mixes subjects", f.held_out),
        )?;
        f.test.iter().for_each(|&i| seen[i] += 1);
        let train_only = Normalizer::fit(&f.train_recordings(&ds)).map_err(|e| e.to_string())?;
        check(
            f.normalizer == train_only,
            format!("fold {} statistics differ from the training fit", f.held_out),
        )?;
        let mut poisoned = ds.clone();
        for r in poisoned.recordings.iter_mut().filter(|r| r.subject_id == f.held_out) {
            r.poses = r.poses.map(|v| v * 100.0 + 5e4);
            r.com = r.com.as_ref().map(|c| c.map(|v| v + 5e4));
        }
        let again = loso_split(&poisoned, &f.held_out).map_err(|e| e.to_string())?;
        check(
            again.normalizer == f.normalizer,
            format!("fold {} statistics see held-out data", f.held_out),
        )?;
    }
    check(
        seen.iter().all(|&n| n == 1),
        "some recording is not tested exactly once",
    )?;
    Ok("10 folds, exact partition, statistics fitted on training subjects only".into())
}

fn end_to_end(root: &Path, manifest: &Path) -> Result<(), String> {
    let config = root.join("run.cfg");
    fs::write(
        &config,
        format!("{SMALL_MODEL}model.dropout=0.1\ntrain.epochs=3\ntrain.held_out=s01\n"),
    )
    .map_err(|e| e.to_string())?;
    let ckpt = root.join("model.ckpt");
    run_cli(&[
        "train",
        "--config",
        path_str(&config),
        "--data",
        path_str(manifest),
        "--seed",
        "21",
        "--out",
        path_str(&ckpt),
    ])?;
    run_cli(&[
        "eval",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(manifest),
        "--out",
        path_str(&root.join("report")),
    ])?;
    run_cli(&[
        "stability",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(manifest),
        "--out",
        path_str(&root.join("stability")),
    ])
}

fn files_under(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(&p, base, out);
        } else if p.extension().is_none_or(|e| e != "cfg") {
            out.push((
                p.strip_prefix(base).unwrap().display().to_string(),
                fs::read(&p).unwrap(),
            ));
        }
    }
}

fn determinism() -> Outcome {
    let data = TempDir::new().map_err(|e| e.to_string())?;
    let manifest = write_dataset(&synth(3, 16), data.path());
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    end_to_end(a.path(), &manifest)?;
    end_to_end(b.path(), &manifest)?;
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    files_under(a.path(), a.path(), &mut fa);
    files_under(b.path(), b.path(), &mut fb);
    check(fa.len() == fb.len(), "runs wrote different file sets")?;
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        check(na == nb, format!("{na} vs {nb}"))?;
        check(ba == bb, format!("{na} differs between runs"))?;
    }
    Ok(format!(
        "train, eval, stability twice: {} files byte-identical",
        fa.len()
    ))
}

fn real_data() -> Outcome {
    match std::env::var_os("PSU_TMM100_MANIFEST") {
        Some(p) if Path::new(&p).is_file() => Ok(format!(
            "dataset found at {}; run `cargo run --release --example psu_tmm100_fold` for the one-fold KLD (not gated)",
            Path::new(&p).display()
        )),
        _ => Ok(format!("{SKIP} not gating; set PSU_TMM100_MANIFEST to a converted dataset manifest and run the psu_tmm100_fold example")),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("finite-difference gradients", gradients),
        ("pressure simplex", simplex),
        ("causal mask", causality),
        ("overfit smoke test", overfit),
        ("polygon IoU oracle", geometry),
        ("ground-truth stability self-consistency", self_consistency),
        ("t-test p-values and rSTD", statistics),
        ("LOSO protocol", protocol),
        ("end-to-end determinism", determinism),
        ("PSU-TMM100 one-fold run", real_data),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) if detail.starts_with(SKIP) => {
                println!("criterion {:>2} SKIP  {name}: {}", i + 1, detail[SKIP.len()..].trim())
            }
            Ok(detail) => println!(
                "criterion {:>2} PASS  {name}: {detail} [{:.1}s]",
                i + 1,
                start.elapsed().as_secs_f64()
            ),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
