use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Graph, Var};
use crate::tensor::Tensor;

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: Arc<HashMap<String, usize>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Panics on a duplicate name.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        let index = Arc::make_mut(&mut self.index);
        assert!(!index.contains_key(&name), "duplicate parameter {name}");
        index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor.with_grad()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.zero_grad());
    }

    /// Places every parameter on `g` as a tracked leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let vars = self.entries.iter().map(|(_, t)| g.param(t.clone())).collect();
        Bound {
            vars,
            index: Arc::clone(&self.index),
        }
    }

    /// Adds the leaf gradients recorded on `g` into each tensor's `grad`.
    pub fn accumulate_grads(&mut self, g: &Graph, bound: &Bound) {
        for ((_, t), v) in self.entries.iter_mut().zip(&bound.vars) {
            if let Some(grad) = g.grad(*v) {
                t.accumulate_grad(grad);
            }
        }
    }
}

/// Graph handles for a [`ParamStore`], looked up by parameter name.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    index: Arc<HashMap<String, usize>>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Var {
        match self.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("no parameter named {name}"),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Uniform on `+-sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(vec![rows, cols], data).expect("glorot shape")
}

pub fn normal<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("normal shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bind_and_collect_gradients() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::scalar(2.0));
        store.insert("b", Tensor::scalar(5.0));
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let y = g.mul(bound.get("a"), bound.get("b")).unwrap();
        g.backward(y).unwrap();
        store.accumulate_grads(&g, &bound);
        assert_eq!(store.get("a").unwrap().grad.as_deref(), Some(&[5.0][..]));
        assert_eq!(store.get("b").unwrap().grad.as_deref(), Some(&[2.0][..]));
        store.accumulate_grads(&g, &bound);
        assert_eq!(store.get("a").unwrap().grad.as_deref(), Some(&[10.0][..]));
        store.zero_grad();
        assert!(store.get("a").unwrap().grad.is_none());
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_panic() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::scalar(1.0));
        store.insert("a", Tensor::scalar(1.0));
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = glorot(&mut rng, 10, 20);
        let b = (6.0f64 / 30.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= b));
    }
}
