//! Building blocks of the network, each a function over a [`Graph`].

use rand::Rng;

use super::config::{Activation, ModelConfig};
use super::params::{glorot, Bound, ParamStore};
use crate::autograd::{Graph, Mask, Var};
use crate::tensor::{Tensor, TensorError};

pub(crate) fn init_linear<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, fan_in: usize, fan_out: usize) {
    store.insert(format!("{name}.w"), glorot(rng, fan_in, fan_out));
    store.insert(format!("{name}.b"), Tensor::zeros(&[1, fan_out]));
}

pub(crate) fn linear(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var, TensorError> {
    let y = g.matmul(x, p.get(&format!("{name}.w")))?;
    g.add(y, p.get(&format!("{name}.b")))
}

pub(crate) fn activate(g: &mut Graph, x: Var, act: Activation) -> Var {
    match act {
        Activation::Gelu => g.gelu(x),
        Activation::Relu => g.relu(x),
    }
}

pub(crate) fn init_layer_norm(store: &mut ParamStore, name: &str, dim: usize) {
    store.insert(format!("{name}.gain"), Tensor::filled(&[1, dim], 1.0));
    store.insert(format!("{name}.bias"), Tensor::zeros(&[1, dim]));
}

pub(crate) fn layer_norm(g: &mut Graph, p: &Bound, name: &str, x: Var, eps: f64) -> Result<Var, TensorError> {
    g.layer_norm(x, p.get(&format!("{name}.gain")), p.get(&format!("{name}.bias")), eps)
}

/// Two-layer perceptron `in -> hidden -> out` with one activation.
pub(crate) fn init_mlp<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, dims: [usize; 3]) {
    init_linear(store, rng, &format!("{name}.fc1"), dims[0], dims[1]);
    init_linear(store, rng, &format!("{name}.fc2"), dims[1], dims[2]);
}

pub(crate) fn mlp(
    g: &mut Graph,
    p: &Bound,
    name: &str,
    x: Var,
    act: Activation,
    dropout: f64,
) -> Result<Var, TensorError> {
    let h = linear(g, p, &format!("{name}.fc1"), x)?;
    let h = activate(g, h, act);
    let h = g.dropout(h, dropout);
    linear(g, p, &format!("{name}.fc2"), h)
}

/// Attention with learned input and output projections.
pub(crate) fn init_attention<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, dim: usize) {
    for proj in ["q", "k", "v", "o"] {
        init_linear(store, rng, &format!("{name}.{proj}"), dim, dim);
    }
}

pub(crate) fn attention(
    g: &mut Graph,
    p: &Bound,
    name: &str,
    query: Var,
    context: Var,
    mask: Option<&Mask>,
    heads: usize,
) -> Result<Var, TensorError> {
    let q = linear(g, p, &format!("{name}.q"), query)?;
    let k = linear(g, p, &format!("{name}.k"), context)?;
    let v = linear(g, p, &format!("{name}.v"), context)?;
    let a = g.multi_head_attention(q, k, v, mask, heads)?;
    linear(g, p, &format!("{name}.o"), a)
}

/// Position `i` may attend to `j` iff `i - window <= j <= i`.
pub fn build_temporal_mask(frames: usize, window: usize) -> Mask {
    Mask::from_fn(frames, frames, |i, j| j <= i && i - j <= window)
}

pub(crate) fn init_encoder_block<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, cfg: &ModelConfig) {
    let d = cfg.embed_dim;
    init_layer_norm(store, &format!("{name}.ln1"), d);
    init_attention(store, rng, &format!("{name}.attn"), d);
    init_layer_norm(store, &format!("{name}.ln2"), d);
    init_mlp(store, rng, &format!("{name}.mlp"), [d, cfg.mlp_hidden, d]);
}

/// One pre-norm transformer block:
/// `x + drop(attn(ln(x)))` then `x + mlp(ln(x))`.
pub(crate) fn encoder_block(
    g: &mut Graph,
    p: &Bound,
    name: &str,
    x: Var,
    mask: Option<&Mask>,
    cfg: &ModelConfig,
) -> Result<Var, TensorError> {
    let h = layer_norm(g, p, &format!("{name}.ln1"), x, cfg.layer_norm_eps)?;
    let a = attention(g, p, &format!("{name}.attn"), h, h, mask, cfg.heads)?;
    let a = g.dropout(a, cfg.dropout);
    let x = g.add(x, a)?;
    let h = layer_norm(g, p, &format!("{name}.ln2"), x, cfg.layer_norm_eps)?;
    let m = mlp(g, p, &format!("{name}.mlp"), h, cfg.activation, cfg.dropout)?;
    g.add(x, m)
}

pub(crate) fn init_gru<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, dim: usize) {
    init_linear(store, rng, &format!("{name}.input"), dim, 3 * dim);
    init_linear(store, rng, &format!("{name}.hidden"), dim, 3 * dim);
}

/// Single-layer GRU over the rows of `x`, returning every hidden state.
pub(crate) fn gru(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var, TensorError> {
    let (steps, d) = g.value(x).dims2();
    let xs = linear(g, p, &format!("{name}.input"), x)?;
    let mut h = g.constant(Tensor::zeros(&[1, d]));
    let mut states = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = g.row(xs, t)?;
        let ht = linear(g, p, &format!("{name}.hidden"), h)?;
        let xz = g.slice_cols(xt, 0, d)?;
        let hz = g.slice_cols(ht, 0, d)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let xr = g.slice_cols(xt, d, 2 * d)?;
        let hr = g.slice_cols(ht, d, 2 * d)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let xn = g.slice_cols(xt, 2 * d, 3 * d)?;
        let hn = g.slice_cols(ht, 2 * d, 3 * d)?;
        let gated = g.mul(r, hn)?;
        let n = g.add(xn, gated)?;
        let n = g.tanh(n);
        // h' = n + z * (h - n)
        let diff = g.sub(h, n)?;
        let keep = g.mul(z, diff)?;
        h = g.add(n, keep)?;
        states.push(h);
    }
    g.concat_rows(&states)
}
