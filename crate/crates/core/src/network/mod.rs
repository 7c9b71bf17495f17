//! Feed-forward ReLU networks for vector-to-vector regression.
//!
//! Hidden layers use ReLU, the output layer is affine. Gradients are exact
//! reverse-mode derivatives with `ReLU'(0) = 0`.

mod format;
mod train;

pub(crate) use format::ByteReader;
pub use format::{MODEL_MAGIC, MODEL_VERSION};
pub use train::{train, train_from, EpochRecord, StopReason, TrainConfig, TrainLog};

use std::fmt;

use crate::error::{ensure_dim, Error, Result};
use crate::losses::{residual_gradient, residual_term, LossSpec};
use crate::numerics::{gemv, gemv_t, Matrix, SeededRng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            activation,
        }
    }

    /// ReLU hidden layers of the given widths followed by a linear output layer.
    pub fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<LayerSpec> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let last = dims.len() - 2;
        dims.windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                LayerSpec::new(w[0], w[1], act)
            })
            .collect()
    }
}

fn check_chain(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::contract("network needs at least one layer"));
    }
    for (k, l) in spec.iter().enumerate() {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(Error::contract(format!("layer {k} has a zero dimension")));
        }
    }
    for (k, w) in spec.windows(2).enumerate() {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::contract(format!(
                "layer {k} outputs {} but layer {} expects {}",
                w[0].out_dim,
                k + 1,
                w[1].in_dim
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    /// `weights` is `out_dim × in_dim`.
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        ensure_dim(weights.rows(), bias.len(), "bias")?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::contract("bias entries must be finite"));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.in_dim(), self.out_dim(), self.activation)
    }
}

/// A multilayer perceptron `f: R^d → R^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Builds a network from explicit layers. Only the chaining is checked, so
    /// hand-built networks may end in a ReLU layer.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let spec: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        check_chain(&spec)?;
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn spec(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        ensure_dim(self.input_dim(), x.len(), "network input")?;
        let out = self.forward_raw(x);
        Vector::new(out).map_err(|_| Error::contract("network produced a non-finite output"))
    }

    pub(crate) fn forward_raw(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim()];
            gemv(
                layer.weights.as_slice(),
                layer.out_dim(),
                layer.in_dim(),
                &a,
                &mut z,
            );
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi = layer.activation.apply(*zi + b);
            }
            a = z;
        }
        a
    }

    /// Forward pass keeping every pre-activation for a later reverse sweep.
    fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim()];
            gemv(
                layer.weights.as_slice(),
                layer.out_dim(),
                layer.in_dim(),
                &a,
                &mut z,
            );
            z.iter_mut().zip(&layer.bias).for_each(|(zi, b)| *zi += b);
            let next: Vec<f64> = z.iter().map(|v| layer.activation.apply(*v)).collect();
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        ForwardCache {
            inputs,
            pre,
            output: a,
        }
    }

    /// Reverse sweep from `∂L/∂output` down to `∂L/∂input`.
    fn pull_back(&self, cache: &ForwardCache, upstream: &[f64]) -> Vec<f64> {
        let mut delta = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            for (d, z) in delta.iter_mut().zip(&cache.pre[k]) {
                *d *= layer.activation.derivative(*z);
            }
            let mut prev = vec![0.0; layer.in_dim()];
            gemv_t(
                layer.weights.as_slice(),
                layer.out_dim(),
                layer.in_dim(),
                &delta,
                &mut prev,
            );
            delta = prev;
        }
        delta
    }

    /// Vector–Jacobian product `Jᵀ upstream` at `x` in one reverse sweep.
    pub fn input_gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vector> {
        ensure_dim(self.input_dim(), x.len(), "network input")?;
        ensure_dim(self.output_dim(), upstream.len(), "upstream gradient")?;
        let cache = self.forward_cached(x);
        Vector::new(self.pull_back(&cache, upstream))
    }

    /// `q × d` Jacobian of the network at `x`; row `i` is `∇f_i(x)ᵀ`.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        ensure_dim(self.input_dim(), x.len(), "network input")?;
        let cache = self.forward_cached(x);
        let q = self.output_dim();
        let mut data = Vec::with_capacity(q * self.input_dim());
        let mut e = vec![0.0; q];
        for i in 0..q {
            e[i] = 1.0;
            data.extend(self.pull_back(&cache, &e));
            e[i] = 0.0;
        }
        Matrix::new(q, self.input_dim(), data)
    }

    /// Exact parameter gradients of the batch loss.
    ///
    /// Returns the loss value alongside the gradients.
    pub fn backward(
        &self,
        inputs: &[&[f64]],
        targets: &[&[f64]],
        loss: &LossSpec,
    ) -> Result<(f64, Gradients)> {
        ensure_dim(inputs.len(), targets.len(), "batch size")?;
        if inputs.is_empty() {
            return Err(Error::contract("backward needs a nonempty batch"));
        }
        if let Some(a) = loss.alpha() {
            ensure_dim(self.output_dim(), a.dim(), "alpha")?;
        }
        for (x, y) in inputs.iter().zip(targets) {
            ensure_dim(self.input_dim(), x.len(), "network input")?;
            ensure_dim(self.output_dim(), y.len(), "target")?;
        }
        let mut grads = Gradients::zeros_like(self);
        let data_term = self.accumulate_gradients(inputs, targets, loss, &mut grads);
        Ok((
            data_term / inputs.len() as f64 + loss.constant_term(inputs.len()),
            grads,
        ))
    }

    /// Adds the batch gradient into `grads` and returns the summed residual term.
    /// Shapes must already be validated.
    pub(crate) fn accumulate_gradients(
        &self,
        inputs: &[&[f64]],
        targets: &[&[f64]],
        loss: &LossSpec,
        grads: &mut Gradients,
    ) -> f64 {
        let scale = 1.0 / inputs.len() as f64;
        let kind = loss.kind();
        let mut total = 0.0;
        let mut delta = vec![0.0; self.output_dim()];
        for (x, y) in inputs.iter().zip(targets) {
            let cache = self.forward_cached(x);
            total += residual_term(kind, &cache.output, y);
            delta.resize(self.output_dim(), 0.0);
            residual_gradient(kind, &cache.output, y, scale, &mut delta);
            for (k, layer) in self.layers.iter().enumerate().rev() {
                for (d, z) in delta.iter_mut().zip(&cache.pre[k]) {
                    *d *= layer.activation.derivative(*z);
                }
                let g = &mut grads.layers[k];
                let a_in = &cache.inputs[k];
                let n_in = layer.in_dim();
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    for (gw, a) in g.weights[o * n_in..(o + 1) * n_in].iter_mut().zip(a_in) {
                        *gw += d * a;
                    }
                }
                if k > 0 {
                    let mut prev = vec![0.0; n_in];
                    gemv_t(
                        layer.weights.as_slice(),
                        layer.out_dim(),
                        n_in,
                        &delta,
                        &mut prev,
                    );
                    delta = prev;
                }
            }
        }
        total
    }

    /// Summed residual term of the batch (no gradient).
    pub(crate) fn residual_sum(
        &self,
        inputs: &[&[f64]],
        targets: &[&[f64]],
        loss: &LossSpec,
    ) -> f64 {
        inputs
            .iter()
            .zip(targets)
            .map(|(x, y)| residual_term(loss.kind(), &self.forward_raw(x), y))
            .sum()
    }

    pub(crate) fn apply_update(&mut self, velocity: &Gradients) {
        for (layer, v) in self.layers.iter_mut().zip(&velocity.layers) {
            for (w, dv) in layer.weights.as_mut_slice().iter_mut().zip(&v.weights) {
                *w += dv;
            }
            for (b, dv) in layer.bias.iter_mut().zip(&v.bias) {
                *b += dv;
            }
        }
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights
                .as_slice()
                .iter()
                .chain(&l.bias)
                .all(|v| v.is_finite())
        })
    }

    /// Flat view of every parameter, layer by layer, weights before bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`Mlp::parameters`].
    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        ensure_dim(self.parameter_count(), params.len(), "parameter vector")?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("parameters must be finite"));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            l.weights
                .as_mut_slice()
                .copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }
}

struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.as_slice().len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|v| *v == 0.0)
    }

    pub(crate) fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// He-normal weights for ReLU layers, Glorot-normal for linear ones, zero biases.
pub fn init_mlp(spec: &[LayerSpec], seed: u64) -> Result<Mlp> {
    check_chain(spec)?;
    if spec[spec.len() - 1].activation != Activation::Linear {
        return Err(Error::contract("the output layer must be linear"));
    }
    let mut rng = SeededRng::new(seed);
    let layers = spec
        .iter()
        .map(|l| {
            let std = match l.activation {
                Activation::Relu => (2.0 / l.in_dim as f64).sqrt(),
                Activation::Linear => (2.0 / (l.in_dim + l.out_dim) as f64).sqrt(),
            };
            let w = (0..l.in_dim * l.out_dim)
                .map(|_| std * rng.standard_normal())
                .collect();
            Layer::new(
                Matrix::new(l.out_dim, l.in_dim, w)?,
                vec![0.0; l.out_dim],
                l.activation,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Mlp::from_layers(layers)
}

/// Single linear layer `x ↦ W x + b`.
pub fn linear_layer(weights: Matrix, bias: Vec<f64>) -> Result<Mlp> {
    Mlp::from_layers(vec![Layer::new(weights, bias, Activation::Linear)?])
}
