use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DenseArray;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map `y = act(W x + b)` with `W` stored as `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseArray,
    pub bias: DenseArray,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: DenseArray, bias: DenseArray, activation: Activation) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::Dimension(format!(
                "weight {:?} incompatible with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self { weight, bias, activation })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
        Self {
            weight: DenseArray::matrix(fan_out, fan_in, data).expect("positive extents"),
            bias: DenseArray::zeros(&[fan_out]),
            activation,
        }
    }

    pub fn in_width(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Accumulated gradients for one layer, same shapes as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Mutable view of one parameter tensor and its gradient, handed to the optimizer.
pub struct ParamMut<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

#[derive(Clone, Debug)]
struct Tape {
    batch: usize,
    /// Input to each layer, `batch x in`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer, `batch x out`.
    pre: Vec<Vec<f64>>,
    vector_input: bool,
}

/// A stack of affine layers with fixed nonlinearities.
///
/// [`forward`](Self::forward) records a tape that [`backward`](Self::backward)
/// consumes without clearing, so several loss heads can push gradients through
/// the same forward pass; gradients accumulate until [`zero_grad`](Self::zero_grad).
#[derive(Clone, Debug)]
pub struct BlockGraph {
    layers: Vec<Layer>,
    grads: Vec<LayerGrad>,
    tape: Option<Tape>,
}

impl PartialEq for BlockGraph {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl BlockGraph {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("a block graph needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_width(),
                    i + 1,
                    pair[1].in_width()
                )));
            }
        }
        let grads = layers
            .iter()
            .map(|l| LayerGrad { weight: vec![0.0; l.weight.len()], bias: vec![0.0; l.bias.len()] })
            .collect();
        Ok(Self { layers, grads, tape: None })
    }

    /// Multi-layer perceptron over `widths = [in, h1, ..., out]`.
    ///
    /// Hidden layers use ReLU; the last layer uses `output`.
    pub fn mlp<R: Rng>(widths: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Dimension(format!("invalid layer widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { output } else { Activation::Relu };
                Layer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Direct access for hand-set weights; invalidates any recorded tape.
    pub fn layer_mut(&mut self, i: usize) -> &mut Layer {
        self.tape = None;
        &mut self.layers[i]
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().expect("non-empty").out_width()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.in_width()).chain(self.layers.iter().map(Layer::out_width)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Forward pass that records a tape for [`backward`](Self::backward).
    pub fn forward(&mut self, x: &DenseArray) -> Result<DenseArray> {
        self.check_input(x)?;
        let batch = x.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.data().to_vec();
        for layer in &self.layers {
            let z = affine(layer, &current, batch);
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        let vector_input = x.shape().len() == 1;
        self.tape = Some(Tape { batch, inputs, pre, vector_input });
        shaped(current, batch, self.out_width(), vector_input)
    }

    /// Forward pass without recording; safe to call through a shared reference.
    pub fn infer(&self, x: &DenseArray) -> Result<DenseArray> {
        self.check_input(x)?;
        let batch = x.rows();
        let mut current = x.data().to_vec();
        for layer in &self.layers {
            current = affine(layer, &current, batch);
            current.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
        }
        shaped(current, batch, self.out_width(), x.shape().len() == 1)
    }

    /// Accumulates parameter gradients for `d loss / d output` and returns
    /// `d loss / d input`.
    pub fn backward(&mut self, upstream_grad: &DenseArray) -> Result<DenseArray> {
        let tape =
            self.tape.as_ref().ok_or_else(|| Error::State("backward called without a preceding forward".into()))?;
        if upstream_grad.rows() != tape.batch || upstream_grad.cols() != self.out_width() {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?} does not match output [{}, {}]",
                upstream_grad.shape(),
                tape.batch,
                self.out_width()
            )));
        }
        let batch = tape.batch;
        let mut delta = upstream_grad.data().to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.in_width(), layer.out_width());
            let z = &tape.pre[idx];
            delta.iter_mut().zip(z).for_each(|(d, &zv)| *d *= layer.activation.derivative(zv));
            let input = &tape.inputs[idx];
            let grad = &mut self.grads[idx];
            for b in 0..batch {
                let d_row = &delta[b * n_out..(b + 1) * n_out];
                let x_row = &input[b * n_in..(b + 1) * n_in];
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad.bias[o] += d;
                    let gw = &mut grad.weight[o * n_in..(o + 1) * n_in];
                    gw.iter_mut().zip(x_row).for_each(|(g, &xv)| *g += d * xv);
                }
            }
            let w = layer.weight.data();
            let mut next = vec![0.0; batch * n_in];
            for b in 0..batch {
                let d_row = &delta[b * n_out..(b + 1) * n_out];
                let out_row = &mut next[b * n_in..(b + 1) * n_in];
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let w_row = &w[o * n_in..(o + 1) * n_in];
                    out_row.iter_mut().zip(w_row).for_each(|(acc, &wv)| *acc += d * wv);
                }
            }
            delta = next;
        }
        shaped(delta, batch, self.in_width(), tape.vector_input)
    }

    pub fn gradients(&self) -> &[LayerGrad] {
        &self.grads
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.weight.fill(0.0);
            g.bias.fill(0.0);
        }
    }

    /// Squared L2 norm of the accumulated gradient.
    pub fn grad_norm_sq(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.weight.iter().chain(&g.bias)).map(|v| v * v).sum()
    }

    /// Parameter tensors in layer order: weight then bias.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.tape = None;
        self.layers
            .iter_mut()
            .zip(&self.grads)
            .flat_map(|(l, g)| {
                [
                    ParamMut { value: l.weight.data_mut(), grad: &g.weight },
                    ParamMut { value: l.bias.data_mut(), grad: &g.bias },
                ]
            })
            .collect()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weight.len(), l.bias.len()]).collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weight.data().iter().chain(l.bias.data()).copied()).collect()
    }

    /// Flat gradient in the same order as [`flat_params`](Self::flat_params).
    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|g| g.weight.iter().chain(&g.bias).copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", self.param_count(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.value.len();
            p.value.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_input(&self, x: &DenseArray) -> Result<()> {
        if x.shape().len() > 2 || x.cols() != self.in_width() {
            return Err(Error::Dimension(format!(
                "input {:?} does not match graph input width {}",
                x.shape(),
                self.in_width()
            )));
        }
        Ok(())
    }
}

fn affine(layer: &Layer, input: &[f64], batch: usize) -> Vec<f64> {
    let (n_in, n_out) = (layer.in_width(), layer.out_width());
    let w = layer.weight.data();
    let b = layer.bias.data();
    let mut out = Vec::with_capacity(batch * n_out);
    for r in 0..batch {
        let x = &input[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            out.push(dot + b[o]);
        }
    }
    out
}

fn shaped(data: Vec<f64>, batch: usize, width: usize, vector: bool) -> Result<DenseArray> {
    if vector {
        DenseArray::vector(data)
    } else {
        DenseArray::matrix(batch, width, data)
    }
}
