//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node holding its forward value
//! and enough state to replay the local derivative. Nodes are appended in
//! evaluation order, so the tape is always topologically sorted and
//! [`Graph::backward`] simply walks it from the loss towards the leaves.
//!
//! ```
//! use footformer::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = g.mul(x, x).unwrap();
//! g.backward(y).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[6.0]);
//! ```
//!
//! Gradients from repeated `backward` calls accumulate into the leaves
//! until [`Graph::zero_grad`] is called.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Tensor, TensorError};
use crate::training::loss::{self, KldDirection};

/// Additive score offset for masked attention positions.
pub const MASK_FILL: f64 = -1e30;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary op is expanded onto the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    MatMul(Var, Var),
    Transpose(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Relu(Var),
    Ln(Var),
    Exp(Var),
    Softmax {
        x: Var,
        len: usize,
        inner: usize,
    },
    Normalize {
        x: Var,
        inv_std: Vec<f64>,
    },
    SumAll(Var),
    MeanRows(Var),
    Gather {
        src: Var,
        index: Vec<Option<usize>>,
    },
    Concat {
        parts: Vec<Var>,
        axis: Axis,
    },
    Reshape(Var),
    L2Norm(Var),
    Kld {
        pred: Var,
        target: Vec<f64>,
        eps: f64,
        direction: KldDirection,
    },
    BceLogits {
        logits: Var,
        targets: Vec<f64>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Boolean attention mask of shape `[queries x keys]`, or `[1 x keys]`
/// when the same pattern applies to every query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self, TensorError> {
        if rows * cols != allowed.len() {
            return Err(TensorError::BadLength {
                shape: vec![rows, cols],
                len: allowed.len(),
            });
        }
        Ok(Mask { rows, cols, allowed })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let allowed = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Mask { rows, cols, allowed }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Whether query `q` may attend to key `k`, broadcasting a single row.
    pub fn allows(&self, q: usize, k: usize) -> bool {
        let r = if self.rows == 1 { 0 } else { q };
        self.allowed[r * self.cols + k]
    }
}

/// Recording tape. Train mode enables dropout with a seeded generator.
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
    rng: Option<ChaCha8Rng>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// `a[m x k] * b[k x n]`
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `g[m x n] * b[k x n]^T`
fn mm_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a[m x k]^T * g[m x n]`
fn mm_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
            rng: None,
        }
    }

    /// Training-mode graph whose dropout masks are drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Graph {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf created with [`Graph::param`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Untracked leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf whose gradient is recorded.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        let tracked = self.tracked(x);
        self.push(value, op, tracked)
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (ra, ca) = ta.dims2();
        let (rb, cb) = tb.dims2();
        if ta.shape() == tb.shape() || (ra, ca) == (rb, cb) {
            Ok(Bcast::Same)
        } else if rb == 1 && cb == ca {
            Ok(Bcast::Row)
        } else if cb == 1 && rb == ra {
            Ok(Bcast::Col)
        } else if tb.len() == 1 {
            Ok(Bcast::Scalar)
        } else {
            Err(mismatch(op, ta, tb))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(Var, Var, Bcast) -> Op,
    ) -> Result<Var, TensorError> {
        let mode = self.bcast(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let (_, cols) = ta.dims2();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match mode {
                    Bcast::Same => tb.data()[i],
                    Bcast::Row => tb.data()[i % cols],
                    Bcast::Col => tb.data()[i / cols],
                    Bcast::Scalar => tb.data()[0],
                };
                f(x, y)
            })
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, make(a, b, mode), tracked))
    }

    /// Elementwise sum. `b` may also be a row `[1 x n]`, a column
    /// `[m x 1]` or a single value, broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() > 2 || tb.rank() > 2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k) = ta.dims2();
        let (k2, n) = tb.dims2();
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let data = mm(ta.data(), tb.data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a, b), tracked))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], data).expect("transpose shape");
        let tracked = self.tracked(x);
        self.push(value, Op::Transpose(x), tracked)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, gelu, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Ln(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    /// Max-stabilized softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        let shape = if t.rank() == 0 { vec![1] } else { t.shape().to_vec() };
        if axis >= shape.len() {
            return Err(TensorError::ShapeMismatch {
                op: "softmax",
                left: shape,
                right: vec![axis],
            });
        }
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).map(|j| src[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[at(j)] /= total;
                }
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::Softmax { x, len, inner }, tracked))
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let axis = self.value(x).rank().saturating_sub(1);
        self.softmax(x, axis).expect("last axis exists")
    }

    /// Per-row standardization with population variance, no affine part.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let mut out = vec![0.0; r * c];
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = &t.data()[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (o, v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let value = Tensor::new(t.shape().to_vec(), out).expect("normalize shape");
        let tracked = self.tracked(x);
        self.push(value, Op::Normalize { x, inv_std }, tracked)
    }

    /// Row-wise layer normalization followed by `gain * y + bias`, where
    /// `gain` and `bias` are `[1 x cols]`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, TensorError> {
        let y = self.normalize_rows(x, eps);
        let y = self.mul(y, gain)?;
        self.add(y, bias)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let tracked = self.tracked(x);
        self.push(value, Op::SumAll(x), tracked)
    }

    /// Mean over rows: `[m x n] -> [1 x n]`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(&t.data()[i * c..(i + 1) * c]) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= r as f64);
        let value = Tensor::new(vec![1, c], out).expect("mean shape");
        let tracked = self.tracked(x);
        self.push(value, Op::MeanRows(x), tracked)
    }

    /// Output element `i` is `src[index[i]]`, or zero where the index is
    /// `None`. Slicing, padding and unfolding are all expressed this way.
    pub fn gather(&mut self, src: Var, index: Vec<Option<usize>>, shape: Vec<usize>) -> Result<Var, TensorError> {
        let t = self.value(src);
        if let Some(bad) = index.iter().flatten().find(|&&j| j >= t.len()) {
            return Err(TensorError::ShapeMismatch {
                op: "gather",
                left: t.shape().to_vec(),
                right: vec![*bad],
            });
        }
        let data = index.iter().map(|j| j.map_or(0.0, |j| t.data()[j])).collect();
        let value = Tensor::new(shape, data)?;
        let tracked = self.tracked(src);
        Ok(self.push(value, Op::Gather { src, index }, tracked))
    }

    /// Column range `[start, end)` of the matrix view.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let (r, c) = self.value(x).dims2();
        if start > end || end > c {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                left: vec![r, c],
                right: vec![start, end],
            });
        }
        let w = end - start;
        let index = (0..r * w).map(|i| Some((i / w) * c + start + i % w)).collect();
        self.gather(x, index, vec![r, w])
    }

    /// Single row as a `[1 x cols]` tensor.
    pub fn row(&mut self, x: Var, r: usize) -> Result<Var, TensorError> {
        let (rows, c) = self.value(x).dims2();
        if r >= rows {
            return Err(TensorError::ShapeMismatch {
                op: "row",
                left: vec![rows, c],
                right: vec![r],
            });
        }
        let index = (0..c).map(|j| Some(r * c + j)).collect();
        self.gather(x, index, vec![1, c])
    }

    fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::ShapeMismatch {
            op: "concat",
            left: vec![],
            right: vec![],
        })?;
        let (r0, c0) = self.value(first).dims2();
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            match axis {
                Axis::Rows if c != c0 => return Err(mismatch("concat_rows", self.value(first), self.value(p))),
                Axis::Cols if r != r0 => return Err(mismatch("concat_cols", self.value(first), self.value(p))),
                Axis::Rows => total += r,
                Axis::Cols => total += c,
            }
        }
        let (shape, data) = match axis {
            Axis::Rows => {
                let mut data = Vec::with_capacity(total * c0);
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                (vec![total, c0], data)
            }
            Axis::Cols => {
                let mut data = Vec::with_capacity(r0 * total);
                for i in 0..r0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(i));
                    }
                }
                (vec![r0, total], data)
            }
        };
        let value = Tensor::new(shape, data)?;
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            tracked,
        ))
    }

    /// Stacks matrices vertically; all parts share the column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        self.concat(parts, Axis::Rows)
    }

    /// Stacks matrices horizontally; all parts share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        self.concat(parts, Axis::Cols)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).reshape(shape)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::Reshape(x), tracked))
    }

    /// Euclidean norm of all entries. The subgradient at zero is zero.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let n = self.value(x).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(n), Op::L2Norm(x), tracked)
    }

    /// KL divergence between a predicted distribution and a fixed target.
    /// See [`loss::kld`] for the formula; both share one implementation.
    pub fn kl_divergence(
        &mut self,
        pred: Var,
        target: &[f64],
        eps: f64,
        direction: KldDirection,
    ) -> Result<Var, TensorError> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(TensorError::ShapeMismatch {
                op: "kl_divergence",
                left: p.shape().to_vec(),
                right: vec![target.len()],
            });
        }
        let v = loss::kld(p.data(), target, eps, direction)?;
        let tracked = self.tracked(pred);
        Ok(self.push(
            Tensor::scalar(v),
            Op::Kld {
                pred,
                target: target.to_vec(),
                eps,
                direction,
            },
            tracked,
        ))
    }

    /// Mean binary cross-entropy from logits against `{0,1}` targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, TensorError> {
        let l = self.value(logits);
        if l.len() != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                left: l.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let v = loss::bce_with_logits(l.data(), targets);
        let tracked = self.tracked(logits);
        Ok(self.push(
            Tensor::scalar(v),
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
            },
            tracked,
        ))
    }

    /// Inverted dropout. Identity on evaluation graphs or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        let Some(rng) = self.rng.as_mut() else {
            return x;
        };
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let n = self.nodes[x.0].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let t = self.value(x);
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("dropout shape");
        let tracked = self.tracked(x);
        self.push(value, Op::Dropout { x, mask }, tracked)
    }

    /// Scaled dot-product attention split across `heads`. `q` is
    /// `[Tq x d]`, `k` and `v` are `[Tk x d]`; the result is `[Tq x d]`.
    /// Masked keys receive an additive [`MASK_FILL`] before the softmax.
    pub fn multi_head_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        mask: Option<&Mask>,
        heads: usize,
    ) -> Result<Var, TensorError> {
        let (tq, d) = self.value(q).dims2();
        let (tk, dk) = self.value(k).dims2();
        let (tv, dv) = self.value(v).dims2();
        if dk != d || dv != d || tv != tk {
            return Err(mismatch("multi_head_attention", self.value(q), self.value(k)));
        }
        if heads == 0 || d % heads != 0 {
            return Err(TensorError::HeadsDoNotDivide { dim: d, heads });
        }
        let bias = match mask {
            None => None,
            Some(m) => {
                let (mr, mc) = m.shape();
                if mc != tk || (mr != tq && mr != 1) {
                    return Err(TensorError::ShapeMismatch {
                        op: "attention mask",
                        left: vec![mr, mc],
                        right: vec![tq, tk],
                    });
                }
                let mut data = vec![0.0; tq * tk];
                for i in 0..tq {
                    if !(0..tk).any(|j| m.allows(i, j)) {
                        return Err(TensorError::AllMasked(i));
                    }
                    for j in 0..tk {
                        if !m.allows(i, j) {
                            data[i * tk + j] = MASK_FILL;
                        }
                    }
                }
                Some(self.constant(Tensor::new(vec![tq, tk], data)?))
            }
        };
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.slice_cols(q, h * dh, (h + 1) * dh)?,
                    self.slice_cols(k, h * dh, (h + 1) * dh)?,
                    self.slice_cols(v, h * dh, (h + 1) * dh)?,
                )
            };
            let kt = self.transpose(kh);
            let scores = self.matmul(qh, kt)?;
            let mut scores = self.scale(scores, scale);
            if let Some(b) = bias {
                scores = self.add(scores, b)?;
            }
            let weights = self.softmax_rows(scores);
            outs.push(self.matmul(weights, vh)?);
        }
        if outs.len() == 1 {
            Ok(outs[0])
        } else {
            self.concat_cols(&outs)
        }
    }

    /// Propagates `d loss / d node` back to every tracked leaf.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let leaf_grads = &mut self.leaf_grads;
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>| {
            if !nodes[v.0].tracked {
                return;
            }
            match &mut grads[v.0] {
                Some(g) => g.iter_mut().zip(contrib).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.tracked {
                continue;
            }
            let out = &node.value;
            match &node.op {
                Op::Leaf => match &mut leaf_grads[i] {
                    Some(buf) => buf.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                },
                Op::Add(a, b, mode) | Op::Sub(a, b, mode) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    acc(&mut grads, *b, reduce_bcast(&g, *mode, &nodes[b.0].value, out, sign));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b, mode) => {
                    let ta = &nodes[a.0].value;
                    let tb = &nodes[b.0].value;
                    let (_, cols) = out.dims2();
                    let bval = |i: usize| match mode {
                        Bcast::Same => tb.data()[i],
                        Bcast::Row => tb.data()[i % cols],
                        Bcast::Col => tb.data()[i / cols],
                        Bcast::Scalar => tb.data()[0],
                    };
                    if nodes[b.0].tracked {
                        let prod: Vec<f64> = g.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *b, reduce_bcast(&prod, *mode, tb, out, 1.0));
                    }
                    let ga = g.iter().enumerate().map(|(i, x)| x * bval(i)).collect();
                    acc(&mut grads, *a, ga);
                }
                Op::MatMul(a, b) => {
                    let ta = &nodes[a.0].value;
                    let tb = &nodes[b.0].value;
                    let (m, k) = ta.dims2();
                    let (_, n) = tb.dims2();
                    if nodes[a.0].tracked {
                        acc(&mut grads, *a, mm_bt(&g, tb.data(), m, n, k));
                    }
                    if nodes[b.0].tracked {
                        acc(&mut grads, *b, mm_at(ta.data(), &g, m, k, n));
                    }
                }
                Op::Transpose(x) => {
                    let (r, c) = out.dims2();
                    let mut gx = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            gx[j * r + i] = g[i * c + j];
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Scale(x, c) => acc(&mut grads, *x, g.iter().map(|v| v * c).collect()),
                Op::AddScalar(x) | Op::Reshape(x) => acc(&mut grads, *x, g),
                Op::Sigmoid(x) => {
                    let gx = g.iter().zip(out.data()).map(|(d, y)| d * y * (1.0 - y)).collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let gx = g.iter().zip(out.data()).map(|(d, y)| d * (1.0 - y * y)).collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Gelu(x) => {
                    let xs = nodes[x.0].value.data();
                    let gx = g.iter().zip(xs).map(|(d, v)| d * gelu_grad(*v)).collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let xs = nodes[x.0].value.data();
                    let gx = g.iter().zip(xs).map(|(d, v)| if *v > 0.0 { *d } else { 0.0 }).collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Ln(x) => {
                    let xs = nodes[x.0].value.data();
                    let gx = g.iter().zip(xs).map(|(d, v)| d / v).collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Exp(x) => {
                    let gx = g.iter().zip(out.data()).map(|(d, y)| d * y).collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Softmax { x, len, inner } => {
                    let y = out.data();
                    let (len, inner) = (*len, *inner);
                    let outer = y.len() / (len * inner);
                    let mut gx = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * len * inner + j * inner + i;
                            let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..len {
                                gx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Normalize { x, inv_std } => {
                    let (r, c) = out.dims2();
                    let y = out.data();
                    let mut gx = vec![0.0; r * c];
                    for i in 0..r {
                        let gy = &g[i * c..(i + 1) * c];
                        let yr = &y[i * c..(i + 1) * c];
                        let mean_g = gy.iter().sum::<f64>() / c as f64;
                        let mean_gy = gy.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for j in 0..c {
                            gx[i * c + j] = inv_std[i] * (gy[j] - mean_g - yr[j] * mean_gy);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SumAll(x) => {
                    let n = nodes[x.0].value.len();
                    acc(&mut grads, *x, vec![g[0]; n]);
                }
                Op::MeanRows(x) => {
                    let (r, c) = nodes[x.0].value.dims2();
                    let gx = (0..r * c).map(|i| g[i % c] / r as f64).collect();
                    acc(&mut grads, *x, gx);
                }
                Op::Gather { src, index } => {
                    let mut gx = vec![0.0; nodes[src.0].value.len()];
                    for (o, j) in index.iter().enumerate() {
                        if let Some(j) = j {
                            gx[*j] += g[o];
                        }
                    }
                    acc(&mut grads, *src, gx);
                }
                Op::Concat { parts, axis } => {
                    let (rows, total) = out.dims2();
                    let mut offset = 0;
                    for p in parts {
                        let (r, c) = nodes[p.0].value.dims2();
                        let gp = match axis {
                            Axis::Rows => g[offset * c..(offset + r) * c].to_vec(),
                            Axis::Cols => (0..rows)
                                .flat_map(|i| g[i * total + offset..i * total + offset + c].iter().copied())
                                .collect(),
                        };
                        offset += match axis {
                            Axis::Rows => r,
                            Axis::Cols => c,
                        };
                        acc(&mut grads, *p, gp);
                    }
                }
                Op::L2Norm(x) => {
                    let n = out.data()[0];
                    let xs = nodes[x.0].value.data();
                    let gx = if n > 0.0 {
                        xs.iter().map(|v| g[0] * v / n).collect()
                    } else {
                        vec![0.0; xs.len()]
                    };
                    acc(&mut grads, *x, gx);
                }
                Op::Kld {
                    pred,
                    target,
                    eps,
                    direction,
                } => {
                    let p = nodes[pred.0].value.data();
                    let gx = loss::kld_grad(p, target, *eps, *direction)
                        .into_iter()
                        .map(|v| v * g[0])
                        .collect();
                    acc(&mut grads, *pred, gx);
                }
                Op::BceLogits { logits, targets } => {
                    let l = nodes[logits.0].value.data();
                    let gx = loss::bce_with_logits_grad(l, targets)
                        .into_iter()
                        .map(|v| v * g[0])
                        .collect();
                    acc(&mut grads, *logits, gx);
                }
                Op::Dropout { x, mask } => {
                    let gx = g.iter().zip(mask).map(|(d, m)| d * m).collect();
                    acc(&mut grads, *x, gx);
                }
            }
        }
        Ok(())
    }
}

/// Sums a gradient shaped like `out` down to the broadcast operand shape.
fn reduce_bcast(g: &[f64], mode: Bcast, operand: &Tensor, out: &Tensor, sign: f64) -> Vec<f64> {
    let (_, cols) = out.dims2();
    match mode {
        Bcast::Same => g.iter().map(|v| sign * v).collect(),
        Bcast::Row => {
            let mut r = vec![0.0; operand.len()];
            for (i, v) in g.iter().enumerate() {
                r[i % cols] += sign * v;
            }
            r
        }
        Bcast::Col => {
            let mut r = vec![0.0; operand.len()];
            for (i, v) in g.iter().enumerate() {
                r[i / cols] += sign * v;
            }
            r
        }
        Bcast::Scalar => vec![sign * g.iter().sum::<f64>()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::identity(2));
        let b = g.constant(mat(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let c = g.matmul(i, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 4.0, 5.0, 6.0]);

        let a = g.constant(mat(&[&[1.0, 2.0]]));
        let b = g.constant(mat(&[&[3.0], &[4.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_inner_extent_mismatch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn matmul_gradient_rule() {
        // d/da sum(a.b) at a=[[1,2]], b=[[3],[4]] is b^T.
        let mut g = Graph::new();
        let a = g.param(mat(&[&[1.0, 2.0]]));
        let b = g.param(mat(&[&[3.0], &[4.0]]));
        let c = g.matmul(a, b).unwrap();
        let s = g.sum(c);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[3.0, 4.0]);
        assert_eq!(g.grad(b).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let cases: [(&[f64], &[f64]); 3] = [
            (&[0.0, 0.0], &[0.5, 0.5]),
            (&[1000.0, 1000.0], &[0.5, 0.5]),
            (&[0.0, 3f64.ln()], &[0.25, 0.75]),
        ];
        for (input, expected) in cases {
            let x = g.constant(Tensor::row(input));
            let y = g.softmax(x, 1).unwrap();
            for (a, b) in g.value(y).data().iter().zip(expected) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn softmax_along_leading_axis() {
        let mut g = Graph::new();
        let x = g.constant(mat(&[&[0.0, 5.0], &[0.0, 5.0]]));
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5, 0.5, 0.5]);
        assert!(g.softmax(x, 2).is_err());
    }

    #[test]
    fn layer_norm_examples() {
        let mut g = Graph::new();
        let one = g.constant(Tensor::row(&[1.0, 1.0, 1.0]));
        let zero = g.constant(Tensor::row(&[0.0, 0.0, 0.0]));
        let x = g.constant(Tensor::row(&[5.0, 5.0, 5.0]));
        let y = g.layer_norm(x, one, zero, 1e-5).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.0]);

        let one = g.constant(Tensor::row(&[1.0, 1.0]));
        let zero = g.constant(Tensor::row(&[0.0, 0.0]));
        let x = g.constant(Tensor::row(&[1.0, 3.0]));
        let y = g.layer_norm(x, one, zero, 0.0).unwrap();
        assert_eq!(g.value(y).data(), &[-1.0, 1.0]);
    }

    #[test]
    fn attention_single_token_returns_value() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::row(&[0.3, -1.2]));
        let y = g.multi_head_attention(q, q, q, None, 1).unwrap();
        assert_eq!(g.value(y).data(), &[0.3, -1.2]);
    }

    #[test]
    fn attention_masked_key_is_excluded() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::row(&[1.0, 0.0]));
        let k = g.constant(mat(&[&[0.0, 1.0], &[5.0, 5.0]]));
        let v = g.constant(mat(&[&[7.0, -3.0], &[100.0, 100.0]]));
        let mask = Mask::new(1, 2, vec![true, false]).unwrap();
        let y = g.multi_head_attention(q, k, v, Some(&mask), 1).unwrap();
        assert_eq!(g.value(y).data(), &[7.0, -3.0]);
    }

    #[test]
    fn attention_uniform_scores_average_values() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::row(&[0.0, 0.0]));
        let k = g.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let v = g.constant(mat(&[&[1.0, 0.0], &[2.0, 3.0], &[6.0, 3.0]]));
        let y = g.multi_head_attention(q, k, v, None, 2).unwrap();
        let out = g.value(y).data();
        assert_abs_diff_eq!(out[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn attention_errors() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(&[2, 4]));
        let mask = Mask::new(2, 2, vec![true, false, false, false]).unwrap();
        assert_eq!(
            g.multi_head_attention(q, q, q, Some(&mask), 1).unwrap_err(),
            TensorError::AllMasked(1)
        );
        assert!(matches!(
            g.multi_head_attention(q, q, q, None, 3),
            Err(TensorError::HeadsDoNotDivide { .. })
        ));
        let k = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(
            g.multi_head_attention(q, k, k, None, 1),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);

        let mut g = Graph::new();
        let x = g.param(Tensor::row(&[0.1, -2.0, 3.0]));
        let y = g.softmax_rows(x);
        let s = g.sum(y);
        g.backward(s).unwrap();
        for v in g.grad(x).unwrap() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[8.0]);
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn shared_operand_sums_paths() {
        // y = x*x + 3x, dy/dx = 2x + 3
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1.5));
        let sq = g.mul(x, x).unwrap();
        let lin = g.scale(x, 3.0);
        let y = g.add(sq, lin).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn dropout_is_identity_in_eval_and_seeded_in_train() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[4, 4], 1.0));
        assert_eq!(g.dropout(x, 0.5), x);

        let run = |seed| {
            let mut g = Graph::training(seed);
            let x = g.constant(Tensor::filled(&[8, 8], 1.0));
            let y = g.dropout(x, 0.5);
            g.value(y).data().to_vec()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
        assert!(run(7).iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn broadcast_row_and_column() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(&[2, 3]));
        let row = g.param(Tensor::row(&[1.0, 2.0, 3.0]));
        let col = g.param(Tensor::new(vec![2, 1], vec![10.0, 20.0]).unwrap());
        let b = g.add(a, row).unwrap();
        let c = g.add(b, col).unwrap();
        assert_eq!(g.value(c).data(), &[11.0, 12.0, 13.0, 21.0, 22.0, 23.0]);
        let s = g.sum(c);
        g.backward(s).unwrap();
        assert_eq!(g.grad(row).unwrap(), &[2.0, 2.0, 2.0]);
        assert_eq!(g.grad(col).unwrap(), &[3.0, 3.0]);
        let bad = g.constant(Tensor::zeros(&[3, 2]));
        assert!(g.add(a, bad).is_err());
    }
}
