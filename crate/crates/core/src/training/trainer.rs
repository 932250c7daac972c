use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::adamw::{AdamWConfig, OptimizerState};
use super::loss::{KldDirection, LossComponents, LossWeights, KLD_EPS};
use crate::autograd::{Graph, Var};
use crate::gradcheck::relative_error;
use crate::model::{Bound, FootFormer, ModelError, PoseSequence};
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One supervised window. Pressure is `None` for airborne frames and CoM
/// is `None` when the recording carries no CoM labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: PoseSequence,
    pub pressure: Option<Vec<f64>>,
    pub contact: Vec<f64>,
    /// Normalized CoM target.
    pub com: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub optimizer: AdamWConfig,
    pub kld_eps: f64,
    pub kld_direction: KldDirection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 512,
            seed: 0,
            weights: LossWeights::default(),
            optimizer: AdamWConfig::default(),
            kld_eps: KLD_EPS,
            kld_direction: KldDirection::TargetWeighted,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be positive".into()));
        }
        self.weights.validate().map_err(TrainError::InvalidConfig)?;
        let o = &self.optimizer;
        if !(o.lr >= 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(TrainError::InvalidConfig(format!("invalid optimizer settings {o:?}")));
        }
        if !(self.kld_eps >= 0.0) {
            return Err(TrainError::InvalidConfig("kld eps must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Mean loss terms over one epoch of training passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub pressure: f64,
    pub contact: f64,
    pub com: f64,
    pub total: f64,
}

pub const LOG_HEADER: &str = "epoch,L_p,L_c,L_com,L_total";

impl EpochLog {
    pub fn record(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.pressure, self.contact, self.com, self.total
        )
    }
}

/// Header line followed by one record per epoch.
pub fn format_log(logs: &[EpochLog]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for l in logs {
        let _ = writeln!(out, "{}", l.record());
    }
    out
}

/// Records one sample's weighted loss on `g`. Terms with zero weight or
/// missing labels are left out of the graph.
pub fn sample_loss(
    model: &FootFormer,
    g: &mut Graph,
    p: &Bound,
    sample: &Sample,
    cfg: &TrainConfig,
) -> Result<(Var, LossComponents), TrainError> {
    let out = model.forward(g, p, &sample.window.frames)?;
    let w = &cfg.weights;
    let mut parts = LossComponents::default();
    let mut terms = Vec::with_capacity(3);

    if let Some(target) = &sample.pressure {
        let l = g.kl_divergence(out.pressure, target, cfg.kld_eps, cfg.kld_direction)?;
        parts.pressure = Some(g.value(l).data()[0]);
        if w.pressure != 0.0 {
            terms.push(g.scale(l, w.pressure));
        }
    }
    let l = g.bce_with_logits(out.contact_logits, &sample.contact)?;
    parts.contact = g.value(l).data()[0];
    if w.contact != 0.0 {
        terms.push(g.scale(l, w.contact));
    }
    if let Some(target) = &sample.com {
        let t = g.constant(crate::tensor::Tensor::row(target));
        let diff = g.sub(out.com, t)?;
        let l = g.l2_norm(diff);
        parts.com = Some(g.value(l).data()[0]);
        if w.com != 0.0 {
            terms.push(g.scale(l, w.com));
        }
    }
    let mut total = match terms.first() {
        Some(&t) => t,
        None => g.constant(crate::tensor::Tensor::scalar(0.0)),
    };
    for &t in terms.iter().skip(1) {
        total = g.add(total, t)?;
    }
    Ok((total, parts))
}

/// Mean of the per-sample losses of `batch` on one graph.
fn batch_loss(
    model: &FootFormer,
    g: &mut Graph,
    p: &Bound,
    batch: &[&Sample],
    cfg: &TrainConfig,
) -> Result<(Var, Vec<LossComponents>), TrainError> {
    let mut parts = Vec::with_capacity(batch.len());
    let mut sum: Option<Var> = None;
    for s in batch {
        let (l, c) = sample_loss(model, g, p, s, cfg)?;
        parts.push(c);
        sum = Some(match sum {
            None => l,
            Some(acc) => g.add(acc, l)?,
        });
    }
    let sum = sum.expect("non-empty batch");
    Ok((g.scale(sum, 1.0 / batch.len() as f64), parts))
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn epoch_log(epoch: usize, parts: &[LossComponents], w: &LossWeights) -> EpochLog {
    EpochLog {
        epoch,
        pressure: mean_of(parts.iter().filter_map(|c| c.pressure)),
        contact: mean_of(parts.iter().map(|c| c.contact)),
        com: mean_of(parts.iter().filter_map(|c| c.com)),
        total: mean_of(parts.iter().map(|c| c.total(w))),
    }
}

/// Seeded mini-batch AdamW training. `on_epoch` sees each epoch's log as
/// soon as it is complete. Epoch means are accumulated in sample order,
/// so they do not depend on the shuffle.
pub fn train(
    model: &mut FootFormer,
    samples: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, model.params());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut parts = vec![LossComponents::default(); samples.len()];
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let mut g = Graph::training(rng.random());
            let p = model.params().bind(&mut g);
            let (loss, batch_parts) = batch_loss(model, &mut g, &p, &batch, cfg)?;
            for (&i, c) in chunk.iter().zip(batch_parts) {
                parts[i] = c;
            }
            g.backward(loss)?;
            let params = model.params_mut();
            params.zero_grad();
            params.accumulate_grads(&g, &p);
            opt.step(params)?;
        }
        let log = epoch_log(epoch, &parts, &cfg.weights);
        log::debug!("{}", log.record());
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Evaluation-mode mean loss over `samples`.
pub fn evaluate_loss(model: &FootFormer, samples: &[Sample], cfg: &TrainConfig) -> Result<EpochLog, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut parts = Vec::with_capacity(samples.len());
    for s in samples {
        let mut g = Graph::new();
        let p = model.params().bind(&mut g);
        parts.push(sample_loss(model, &mut g, &p, s, cfg)?.1);
    }
    Ok(epoch_log(0, &parts, &cfg.weights))
}

/// Checks the analytic gradient of the evaluation-mode batch loss against
/// central differences on `coords` randomly drawn parameter entries.
/// Returns the largest relative error.
pub fn model_gradient_check(
    model: &FootFormer,
    samples: &[Sample],
    cfg: &TrainConfig,
    coords: usize,
    eps: f64,
    seed: u64,
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let batch: Vec<&Sample> = samples.iter().collect();
    let mut g = Graph::new();
    let p = model.params().bind(&mut g);
    let (loss, _) = batch_loss(model, &mut g, &p, &batch, cfg)?;
    g.backward(loss)?;

    let names: Vec<(String, usize)> = model.params().iter().map(|(n, t)| (n.to_string(), t.len())).collect();
    let total: usize = names.iter().map(|(_, n)| n).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = |m: &FootFormer| -> Result<f64, TrainError> {
        let mut g = Graph::new();
        let p = m.params().bind(&mut g);
        let (l, _) = batch_loss(m, &mut g, &p, &batch, cfg)?;
        Ok(g.value(l).data()[0])
    };
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for _ in 0..coords {
        let mut flat = rng.random_range(0..total);
        let (pi, (name, _)) = names
            .iter()
            .enumerate()
            .find(|(_, (_, n))| {
                if flat < *n {
                    true
                } else {
                    flat -= n;
                    false
                }
            })
            .expect("coordinate in range");
        let analytic = g.grad(p.vars()[pi]).map_or(0.0, |gr| gr[flat]);
        let original = probe.params().get(name).expect("param").data()[flat];
        probe.params_mut().get_mut(name).expect("param").data_mut()[flat] = original + eps;
        let plus = eval(&probe)?;
        probe.params_mut().get_mut(name).expect("param").data_mut()[flat] = original - eps;
        let minus = eval(&probe)?;
        probe.params_mut().get_mut(name).expect("param").data_mut()[flat] = original;
        worst = worst.max(relative_error(analytic, (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}
