//! Trainable parameters, dense layers and the Adam optimizer.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_err, Result};
use crate::graph::{Gradients, Graph, NodeId, ParamId};
use crate::tensor::Tensor;

/// Named trainable tensors, addressed by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces every tensor; shapes must match the existing ones.
    pub fn load(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        if tensors.len() != self.tensors.len()
            || tensors.iter().zip(&self.tensors).any(|(a, b)| !a.same_shape(b))
        {
            return Err(shape_err("ParamStore::load", "parameter layout differs"));
        }
        self.tensors = tensors;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Selu,
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Selu => g.selu(x),
            Activation::Gelu => g.gelu(x),
            Activation::Identity => Ok(x),
        }
    }
}

/// Dense layer `y = x·W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// LeCun-normal weights when followed by SELU, scaled-uniform otherwise;
    /// zero bias.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let std = (1.0 / fan_in as f64).sqrt();
        let data: Vec<f64> = match act {
            Activation::Selu => (0..fan_in * fan_out)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    std * z
                })
                .collect(),
            _ => (0..fan_in * fan_out)
                .map(|_| std * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        };
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::matrix(fan_in, fan_out, data).expect("sized"),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, fan_out));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight, store.get(self.weight))?;
        let b = g.param(self.bias, store.get(self.bias))?;
        g.linear(x, w, b)
    }
}

/// Stack of dense layers with a shared hidden activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden_act: Activation,
    pub output_act: Activation,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`; `dims.len() - 1` layers.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        hidden_act: Activation,
        output_act: Activation,
        rng: &mut R,
    ) -> Self {
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output_act } else { hidden_act };
                Linear::new(store, &format!("{name}.{i}"), dims[i], dims[i + 1], act, rng)
            })
            .collect();
        Self {
            layers,
            hidden_act,
            output_act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h)?;
            let act = if i + 1 == n { self.output_act } else { self.hidden_act };
            h = act.apply(g, h)?;
        }
        Ok(h)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store
            .tensors
            .iter()
            .map(|t| Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]).expect("sized"))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter. Missing gradients count as zero.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(shape_err("adam_step", "optimizer state does not match parameters"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            let p = &mut store.tensors[id.0];
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let zero;
            let g = match grads.param(id) {
                Some(g) => g,
                None => {
                    zero = Tensor::new(p.shape().to_vec(), vec![0.0; p.len()])?;
                    &zero
                }
            };
            if !g.same_shape(p) {
                return Err(shape_err(
                    "adam_step",
                    format!("grad {:?} vs param {:?}", g.shape(), p.shape()),
                ));
            }
            for (((w, mi), vi), gi) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn quadratic_grad(store: &ParamStore, id: ParamId) -> Gradients {
        let mut g = Graph::new();
        let w = g.param(id, store.get(id)).unwrap();
        let sq = g.square(w).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s, &Tensor::scalar(1.0)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::row_vector(&[1.5, -2.0]));
        let mut adam = AdamState::new(&store);
        let before = store.get(id).clone();
        adam.step(&mut store, &Gradients::default(), 0.1).unwrap();
        assert_eq!(store.get(id), &before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for &w0 in &[1.0, -3.0, 0.5, 250.0] {
            let mut store = ParamStore::new();
            let id = store.add("w", Tensor::scalar(w0));
            let mut adam = AdamState::new(&store);
            let grads = quadratic_grad(&store, id);
            adam.step(&mut store, &grads, 0.01).unwrap();
            let dw = (store.get(id).item() - w0).abs();
            assert!((dw - 0.01).abs() < 1e-9, "w0={w0} dw={dw}");
        }
    }

    #[test]
    fn minimizes_one_dimensional_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(1.0));
        let mut adam = AdamState::new(&store);
        for _ in 0..500 {
            let grads = quadratic_grad(&store, id);
            adam.step(&mut store, &grads, 0.1).unwrap();
        }
        assert!(store.get(id).item().abs() < 1e-3, "w = {}", store.get(id).item());
    }

    #[test]
    fn step_counter_strictly_increases() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0));
        let mut adam = AdamState::new(&store);
        let mut last = adam.step_count();
        for _ in 0..5 {
            adam.step(&mut store, &Gradients::default(), 0.1).unwrap();
            assert!(adam.step_count() > last);
            last = adam.step_count();
        }
    }
}
