//! Central finite-difference verification of recorded gradients.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Mask, Var};
use crate::tensor::{Tensor, TensorError};
use crate::training::loss::KldDirection;

/// Relative error used throughout: `|analytic - numeric| / max(1, |analytic|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Compares the gradient of the scalar built by `f` against central
/// differences at `x`. Returns the maximum relative error over all
/// coordinates of `x`.
///
/// `f` is called once on a tracked copy of `x` for the analytic gradient
/// and twice per coordinate on untracked perturbed copies.
pub fn finite_difference_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, TensorError>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    finite_difference_check_coords(f, x, eps, &coords)
}

/// Same as [`finite_difference_check`] restricted to `coords`.
pub fn finite_difference_check_coords<F>(f: F, x: &Tensor, eps: f64, coords: &[usize]) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, TensorError>,
{
    finite_difference_check_on(Graph::new, f, x, eps, coords)
}

/// Central-difference check where every evaluation runs on a fresh graph
/// from `new_graph`. A seeded training graph replays the same dropout
/// mask on each call, which makes dropout checkable.
pub fn finite_difference_check_on<G, F>(
    new_graph: G,
    f: F,
    x: &Tensor,
    eps: f64,
    coords: &[usize],
) -> Result<f64, TensorError>
where
    G: Fn() -> Graph,
    F: Fn(&mut Graph, Var) -> Result<Var, TensorError>,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let mut g = new_graph();
    let xv = g.param(x.clone());
    let out = f(&mut g, xv)?;
    g.backward(out)?;
    let analytic = g.grad(xv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |t: Tensor| -> Result<f64, TensorError> {
        let mut g = new_graph();
        let v = g.constant(t);
        let out = f(&mut g, v)?;
        Ok(g.value(out).data()[0])
    };

    let mut worst = 0.0f64;
    for &i in coords {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Entries bounded away from zero so kinks stay outside the stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    uniform(rng, shape, -1.0, 1.0).map(|v| v.signum() * (0.05 + v.abs()))
}

struct Inputs {
    a: Tensor,
    b: Tensor,
    row: Tensor,
    col: Tensor,
    scalar: Tensor,
    right: Tensor,
    keys: Tensor,
    values: Tensor,
    mask: Mask,
    target: Vec<f64>,
    bits: Vec<f64>,
}

type Check = Box<dyn Fn(&mut Graph, Var) -> Result<Var, TensorError>>;

/// Random-input gradient check of every differentiable graph operation.
/// Each operand of a multi-input op is checked separately with the others
/// held constant. Non-scalar results are reduced with a fixed random
/// weighting so every output entry contributes. Returns the largest
/// relative error for each named case.
pub fn primitive_suite(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = uniform(&mut rng, &[3, 4], -1.0, 1.0);
    let b = uniform(&mut rng, &[3, 4], -1.0, 1.0);
    let row = uniform(&mut rng, &[1, 4], -1.0, 1.0);
    let col = uniform(&mut rng, &[3, 1], -1.0, 1.0);
    let scalar = uniform(&mut rng, &[1], -1.0, 1.0);
    let right = uniform(&mut rng, &[4, 2], -1.0, 1.0);
    let kinked = away_from_zero(&mut rng, &[3, 4]);
    let positive = uniform(&mut rng, &[3, 4], 0.2, 2.0);
    let cube = uniform(&mut rng, &[2, 3, 2], -1.0, 1.0);
    let keys = uniform(&mut rng, &[5, 4], -1.0, 1.0);
    let values = uniform(&mut rng, &[5, 4], -1.0, 1.0);
    let target_logits = uniform(&mut rng, &[12], -2.0, 2.0);
    let total: f64 = target_logits.data().iter().map(|v| v.exp()).sum();
    let mut target: Vec<f64> = target_logits.data().iter().map(|v| v.exp() / total).collect();
    target[3] = 0.0;
    let s: f64 = target.iter().sum();
    target.iter_mut().for_each(|v| *v /= s);
    let bits: Vec<f64> = (0..12).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
    let drop_seed: u64 = rng.random();

    let mut weights = Vec::new();
    for shape in [
        [3usize, 4],
        [3, 2],
        [4, 3],
        [1, 4],
        [6, 4],
        [3, 8],
        [2, 6],
        [1, 2],
        [3, 3],
        [12, 1],
    ] {
        weights.push(uniform(&mut rng, &shape, -1.0, 1.0));
    }
    let weight_for = move |shape: &[usize]| -> Tensor {
        let n: usize = shape.iter().product();
        let w = weights
            .iter()
            .find(|w| w.len() == n)
            .cloned()
            .unwrap_or_else(|| Tensor::filled(&[n], 0.5));
        w.reshape(shape).expect("weight shape")
    };
    let readout = move |g: &mut Graph, y: Var| -> Result<Var, TensorError> {
        let w = g.constant(weight_for(g.value(y).shape()));
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    };

    fn c(g: &mut Graph, t: &Tensor) -> Var {
        g.constant(t.clone())
    }

    let d = Rc::new(Inputs {
        a: a.clone(),
        b,
        row,
        col,
        scalar,
        right,
        keys,
        values,
        mask: Mask::from_fn(3, 5, |i, j| j <= i + 2),
        target,
        bits,
    });
    let mut cases: Vec<(&'static str, Tensor, Check)> = Vec::new();
    let mut case = |name: &'static str, x: &Tensor, f: fn(&mut Graph, Var, &Inputs) -> Result<Var, TensorError>| {
        let (r, d) = (readout.clone(), Rc::clone(&d));
        let check: Check = Box::new(move |g: &mut Graph, v: Var| {
            let y = f(g, v, &d)?;
            if g.value(y).len() == 1 {
                Ok(y)
            } else {
                r(g, y)
            }
        });
        cases.push((name, x.clone(), check));
    };

    case("add", &d.a, |g, x, d| {
        let o = c(g, &d.b);
        g.add(x, o)
    });
    case("add_row_broadcast", &d.row, |g, x, d| {
        let o = c(g, &d.a);
        g.add(o, x)
    });
    case("add_col_broadcast", &d.col, |g, x, d| {
        let o = c(g, &d.a);
        g.add(o, x)
    });
    case("add_scalar_broadcast", &d.scalar, |g, x, d| {
        let o = c(g, &d.a);
        g.add(o, x)
    });
    case("sub_left", &d.a, |g, x, d| {
        let o = c(g, &d.b);
        g.sub(x, o)
    });
    case("sub_right", &d.b, |g, x, d| {
        let o = c(g, &d.a);
        g.sub(o, x)
    });
    case("sub_row_broadcast", &d.row, |g, x, d| {
        let o = c(g, &d.a);
        g.sub(o, x)
    });
    case("mul", &d.a, |g, x, d| {
        let o = c(g, &d.b);
        g.mul(x, o)
    });
    case("mul_self", &d.a, |g, x, _| g.mul(x, x));
    case("mul_row_broadcast", &d.row, |g, x, d| {
        let o = c(g, &d.a);
        g.mul(o, x)
    });
    case("mul_col_broadcast", &d.col, |g, x, d| {
        let o = c(g, &d.a);
        g.mul(o, x)
    });
    case("matmul_left", &d.a, |g, x, d| {
        let o = c(g, &d.right);
        g.matmul(x, o)
    });
    case("matmul_right", &d.right, |g, x, d| {
        let o = c(g, &d.a);
        g.matmul(o, x)
    });
    case("transpose", &d.a, |g, x, _| Ok(g.transpose(x)));
    case("scale", &d.a, |g, x, _| Ok(g.scale(x, -1.7)));
    case("add_scalar", &d.a, |g, x, _| Ok(g.add_scalar(x, 0.3)));
    case("sigmoid", &d.a, |g, x, _| Ok(g.sigmoid(x)));
    case("tanh", &d.a, |g, x, _| Ok(g.tanh(x)));
    case("gelu", &d.a, |g, x, _| Ok(g.gelu(x)));
    case("relu", &kinked, |g, x, _| Ok(g.relu(x)));
    case("ln", &positive, |g, x, _| Ok(g.ln(x)));
    case("exp", &d.a, |g, x, _| Ok(g.exp(x)));
    case("softmax_rows", &d.a, |g, x, _| Ok(g.softmax_rows(x)));
    case("softmax_axis0", &cube, |g, x, _| g.softmax(x, 0));
    case("softmax_axis1", &cube, |g, x, _| g.softmax(x, 1));
    case("normalize_rows", &d.a, |g, x, _| Ok(g.normalize_rows(x, 1e-5)));
    case("layer_norm_input", &d.a, |g, x, d| {
        let (gain, bias) = (c(g, &d.row), c(g, &d.row));
        g.layer_norm(x, gain, bias, 1e-5)
    });
    case("layer_norm_gain", &d.row, |g, x, d| {
        let (input, bias) = (c(g, &d.a), c(g, &d.row));
        g.layer_norm(input, x, bias, 1e-5)
    });
    case("layer_norm_bias", &d.row, |g, x, d| {
        let (input, gain) = (c(g, &d.a), c(g, &d.row));
        g.layer_norm(input, gain, x, 1e-5)
    });
    case("sum", &d.a, |g, x, _| Ok(g.sum(x)));
    case("mean_rows", &d.a, |g, x, _| Ok(g.mean_rows(x)));
    case("gather", &d.a, |g, x, _| {
        let index = (0..12)
            .map(|i| if i % 5 == 4 { None } else { Some((i * 7) % 12) })
            .collect();
        g.gather(x, index, vec![4, 3])
    });
    case("slice_cols", &d.a, |g, x, _| g.slice_cols(x, 1, 3));
    case("row", &d.a, |g, x, _| g.row(x, 2));
    case("concat_rows", &d.a, |g, x, d| {
        let o = c(g, &d.b);
        g.concat_rows(&[x, o, x])
    });
    case("concat_cols", &d.a, |g, x, d| {
        let o = c(g, &d.b);
        g.concat_cols(&[o, x])
    });
    case("reshape", &d.a, |g, x, _| g.reshape(x, &[2, 6]));
    case("l2_norm", &d.a, |g, x, _| Ok(g.l2_norm(x)));
    case("kl_divergence_target_weighted", &target_logits, |g, x, d| {
        let p = g.softmax_rows(x);
        g.kl_divergence(p, &d.target, 1e-8, KldDirection::TargetWeighted)
    });
    case("kl_divergence_pred_weighted", &target_logits, |g, x, d| {
        let p = g.softmax_rows(x);
        g.kl_divergence(p, &d.target, 1e-8, KldDirection::PredWeighted)
    });
    case("bce_with_logits", &target_logits, |g, x, d| {
        g.bce_with_logits(x, &d.bits)
    });
    case("attention_query", &d.a, |g, x, d| {
        let (k, v) = (c(g, &d.keys), c(g, &d.values));
        g.multi_head_attention(x, k, v, Some(&d.mask), 2)
    });
    case("attention_keys", &d.keys, |g, x, d| {
        let (q, v) = (c(g, &d.a), c(g, &d.values));
        g.multi_head_attention(q, x, v, Some(&d.mask), 2)
    });
    case("attention_values", &d.values, |g, x, d| {
        let (q, k) = (c(g, &d.a), c(g, &d.keys));
        g.multi_head_attention(q, k, x, None, 1)
    });

    let mut out = Vec::with_capacity(cases.len() + 1);
    for (name, x, f) in &cases {
        let coords: Vec<usize> = (0..x.len()).collect();
        out.push((*name, finite_difference_check_on(Graph::new, f, x, eps, &coords)?));
    }
    let r = readout.clone();
    let coords: Vec<usize> = (0..a.len()).collect();
    let dropout = finite_difference_check_on(
        || Graph::training(drop_seed),
        |g, x| {
            let y = g.dropout(x, 0.4);
            let y = g.mul(y, y)?;
            r(g, y)
        },
        &a,
        eps,
        &coords,
    )?;
    out.push(("dropout", dropout));
    Ok(out)
}
