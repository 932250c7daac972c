use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{EncoderKind, ModelConfig, PoolingKind, TemporalKind};
use super::layers::{self, build_temporal_mask, init_attention, init_encoder_block, init_gru, init_linear, init_mlp};
use super::params::{glorot, normal, Bound, ParamStore};
use super::ModelError;
use crate::autograd::{sigmoid, Graph, Mask, Var};
use crate::tensor::{Tensor, TensorError};

/// A window of `T` normalized pose frames centered on the target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    /// `[T x K x F]`
    pub frames: Tensor,
    pub subject_id: String,
    pub center_frame_index: usize,
}

impl PoseSequence {
    pub fn new(frames: Tensor, subject_id: impl Into<String>) -> Result<Self, ModelError> {
        if frames.rank() != 3 || frames.shape()[0] % 2 == 0 {
            return Err(ModelError::ConfigMismatch(format!(
                "pose window must be [T x K x F] with odd T, got {:?}",
                frames.shape()
            )));
        }
        frames.validate_finite()?;
        let center_frame_index = (frames.shape()[0] - 1) / 2;
        Ok(PoseSequence {
            frames,
            subject_id: subject_id.into(),
            center_frame_index,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Predictions for the center frame of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// Distribution over both pressure grids, length `P'`.
    pub pressure: Tensor,
    pub contact_logits: Tensor,
    /// In normalized units; denormalize with the dataset's CoM statistics.
    pub com: Tensor,
}

impl ModelOutput {
    pub fn contact_probs(&self) -> Vec<f64> {
        self.contact_logits.data().iter().map(|&x| sigmoid(x)).collect()
    }

    /// Region bits at probability 0.5.
    pub fn contact_bits(&self) -> Vec<bool> {
        self.contact_logits.data().iter().map(|&x| x > 0.0).collect()
    }
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// Per-frame embeddings after positional encoding, `[T x d]`.
    pub embedded: Var,
    /// Output of the temporal module, `[T x d]`.
    pub refined: Var,
    pub pooled: Var,
    pub pressure: Var,
    pub contact_logits: Var,
    pub contact_probs: Var,
    pub com: Var,
}

/// `mean_over_joints(A X W)` for one frame: `X` is `[K x F]`, `A` is
/// `[K x K]`, `W` is `[F x d]`; the result is `[1 x d]`.
pub fn gcn_encode(g: &mut Graph, frame: Var, adjacency: Var, weight: Var) -> Result<Var, TensorError> {
    let ax = g.matmul(adjacency, frame)?;
    let axw = g.matmul(ax, weight)?;
    Ok(g.mean_rows(axw))
}

pub fn add_positional_encoding(g: &mut Graph, embeddings: Var, positions: Var) -> Result<Var, TensorError> {
    let (e, p) = (g.value(embeddings), g.value(positions));
    if e.dims2() != p.dims2() {
        return Err(TensorError::ShapeMismatch {
            op: "add_positional_encoding",
            left: e.shape().to_vec(),
            right: p.shape().to_vec(),
        });
    }
    g.add(embeddings, positions)
}

/// Softmax-weighted sum of the rows of `x` (`[T x d]`) with scores `x w`,
/// `w` being `[d x 1]`.
pub fn attention_pool(g: &mut Graph, x: Var, w: Var) -> Result<Var, TensorError> {
    let scores = g.matmul(x, w)?;
    let scores = g.transpose(scores);
    let weights = g.softmax_rows(scores);
    g.matmul(weights, x)
}

/// The full network plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FootFormer {
    config: ModelConfig,
    params: ParamStore,
}

impl FootFormer {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::InvalidConfig)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let (k, f, d, t) = (config.joints, config.features, config.embed_dim, config.window);
        match config.encoder {
            EncoderKind::Gcn => {
                p.insert("encoder.adjacency", glorot(&mut rng, k, k));
                p.insert("encoder.weight", glorot(&mut rng, f, d));
            }
            EncoderKind::Mlp => init_linear(&mut p, &mut rng, "encoder", k * f, d),
            EncoderKind::Conv1d => init_linear(&mut p, &mut rng, "encoder", 3 * f, d),
        }
        p.insert("pos", normal(&mut rng, t, d, config.pos_init_std));
        match config.temporal {
            TemporalKind::Stt | TemporalKind::PlainTransformer => {
                for l in 0..config.layers {
                    init_encoder_block(&mut p, &mut rng, &format!("temporal.{l}"), &config);
                }
            }
            TemporalKind::Gru => init_gru(&mut p, &mut rng, "temporal.gru", d),
        }
        if config.pooling == PoolingKind::Attention {
            p.insert("pool.w", glorot(&mut rng, d, 1));
        }
        let dh = config.decoder_hidden;
        let n = config.contact_regions;
        init_mlp(&mut p, &mut rng, "head.com", [d, dh, 3]);
        init_mlp(&mut p, &mut rng, "head.contact", [d, dh, n]);
        init_linear(&mut p, &mut rng, "head.pressure.query", d, dh);
        p.insert("head.pressure.contact_w", glorot(&mut rng, n, dh));
        p.insert("head.pressure.region", glorot(&mut rng, n, dh));
        init_attention(&mut p, &mut rng, "head.pressure.attn", dh);
        init_linear(&mut p, &mut rng, "head.pressure.f", dh, config.pressure_len());
        if config.gating {
            init_linear(&mut p, &mut rng, "head.pressure.g", dh, config.pressure_len());
        }
        Ok(FootFormer { config, params: p })
    }

    /// Reassembles a model, checking every parameter name and shape
    /// against a freshly initialized one.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        let reference = FootFormer::new(config.clone(), 0)?;
        if reference.params.len() != params.len() {
            return Err(ModelError::ConfigMismatch(format!(
                "expected {} parameters, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for (name, t) in reference.params.iter() {
            let got = params
                .get(name)
                .ok_or_else(|| ModelError::MissingParameter(name.to_string()))?;
            if got.shape() != t.shape() {
                return Err(ModelError::ConfigMismatch(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(FootFormer { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn check_input(&self, frames: &Tensor) -> Result<(), ModelError> {
        let c = &self.config;
        let expected = [c.window, c.joints, c.features];
        if frames.shape() != expected {
            return Err(ModelError::ConfigMismatch(format!(
                "pose window has shape {:?}, model expects {:?}",
                frames.shape(),
                expected
            )));
        }
        Ok(())
    }

    fn encode(&self, g: &mut Graph, p: &Bound, frames: &Tensor) -> Result<Var, TensorError> {
        let c = &self.config;
        let (t, k, f) = (c.window, c.joints, c.features);
        match c.encoder {
            EncoderKind::Mlp => {
                let x = g.constant(frames.reshape(&[t, k * f])?);
                layers::linear(g, p, "encoder", x)
            }
            EncoderKind::Gcn => {
                let (a, w) = (p.get("encoder.adjacency"), p.get("encoder.weight"));
                let mut rows = Vec::with_capacity(t);
                for i in 0..t {
                    let x = frame(frames, i, k, f);
                    let x = g.constant(x);
                    rows.push(gcn_encode(g, x, a, w)?);
                }
                g.concat_rows(&rows)
            }
            EncoderKind::Conv1d => {
                let mut rows = Vec::with_capacity(t);
                for i in 0..t {
                    let x = g.constant(unfold_joints(&frame(frames, i, k, f)));
                    let h = layers::linear(g, p, "encoder", x)?;
                    let h = layers::activate(g, h, c.activation);
                    rows.push(g.mean_rows(h));
                }
                g.concat_rows(&rows)
            }
        }
    }

    pub fn temporal_mask(&self) -> Mask {
        build_temporal_mask(self.config.window, self.config.mask_window)
    }

    /// The temporal module over `[T x d]` embeddings.
    pub fn stt_forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var, TensorError> {
        let c = &self.config;
        match c.temporal {
            TemporalKind::Stt | TemporalKind::PlainTransformer => {
                let mask = (c.temporal == TemporalKind::Stt).then(|| self.temporal_mask());
                let mut h = x;
                for l in 0..c.layers {
                    h = layers::encoder_block(g, p, &format!("temporal.{l}"), h, mask.as_ref(), c)?;
                }
                Ok(h)
            }
            TemporalKind::Gru => layers::gru(g, p, "temporal.gru", x),
        }
    }

    pub fn decode_com(&self, g: &mut Graph, p: &Bound, h: Var) -> Result<Var, TensorError> {
        layers::mlp(g, p, "head.com", h, self.config.activation, 0.0)
    }

    pub fn decode_contact(&self, g: &mut Graph, p: &Bound, h: Var) -> Result<Var, TensorError> {
        layers::mlp(g, p, "head.contact", h, self.config.activation, 0.0)
    }

    /// Cross-attention of one pressure query over `N` contact tokens,
    /// then the (optionally gated) projection onto the pressure simplex.
    /// Token `i` is `probs[i] * contact_w[i] + region[i]`.
    pub fn decode_pressure(&self, g: &mut Graph, p: &Bound, h: Var, contact_probs: Var) -> Result<Var, TensorError> {
        let q = layers::linear(g, p, "head.pressure.query", h)?;
        let probs = g.transpose(contact_probs);
        let tokens = g.mul(p.get("head.pressure.contact_w"), probs)?;
        let tokens = g.add(tokens, p.get("head.pressure.region"))?;
        let q = layers::attention(g, p, "head.pressure.attn", q, tokens, None, self.config.decoder_heads)?;
        let mut logits = layers::linear(g, p, "head.pressure.f", q)?;
        if self.config.gating {
            let gate = layers::linear(g, p, "head.pressure.g", q)?;
            let gate = g.sigmoid(gate);
            logits = g.mul(logits, gate)?;
        }
        Ok(g.softmax_rows(logits))
    }

    /// Records the full network on `g` for a `[T x K x F]` window.
    pub fn forward(&self, g: &mut Graph, p: &Bound, frames: &Tensor) -> Result<ForwardVars, ModelError> {
        self.check_input(frames)?;
        let e = self.encode(g, p, frames)?;
        let embedded = add_positional_encoding(g, e, p.get("pos"))?;
        let refined = self.stt_forward(g, p, embedded)?;
        let pooled = match self.config.pooling {
            PoolingKind::Attention => attention_pool(g, refined, p.get("pool.w"))?,
            PoolingKind::Mean => g.mean_rows(refined),
        };
        let com = self.decode_com(g, p, pooled)?;
        let contact_logits = self.decode_contact(g, p, pooled)?;
        let contact_probs = g.sigmoid(contact_logits);
        let pressure = self.decode_pressure(g, p, pooled, contact_probs)?;
        Ok(ForwardVars {
            embedded,
            refined,
            pooled,
            pressure,
            contact_logits,
            contact_probs,
            com,
        })
    }

    /// Evaluation-mode prediction for one window.
    pub fn predict(&self, seq: &PoseSequence) -> Result<ModelOutput, ModelError> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let out = self.forward(&mut g, &p, &seq.frames)?;
        let flat = |v: Var| {
            let t = g.value(v);
            Tensor::new(vec![t.len()], t.data().to_vec()).expect("flat shape")
        };
        Ok(ModelOutput {
            pressure: flat(out.pressure),
            contact_logits: flat(out.contact_logits),
            com: flat(out.com),
        })
    }
}

fn frame(frames: &Tensor, i: usize, k: usize, f: usize) -> Tensor {
    let n = k * f;
    Tensor::new(vec![k, f], frames.data()[i * n..(i + 1) * n].to_vec()).expect("frame shape")
}

/// `[K x F] -> [K x 3F]`: each joint next to its zero-padded neighbours.
fn unfold_joints(x: &Tensor) -> Tensor {
    let (k, f) = x.dims2();
    let mut out = vec![0.0; k * 3 * f];
    for j in 0..k {
        for (slot, offset) in [-1isize, 0, 1].into_iter().enumerate() {
            let src = j as isize + offset;
            if src < 0 || src >= k as isize {
                continue;
            }
            let src = src as usize;
            out[j * 3 * f + slot * f..j * 3 * f + (slot + 1) * f].copy_from_slice(&x.data()[src * f..(src + 1) * f]);
        }
    }
    Tensor::new(vec![k, 3 * f], out).expect("unfold shape")
}
