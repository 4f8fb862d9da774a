use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fields::VectorField;
use crate::state::Condition;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Silu => a / (1.0 + (-a).exp()),
        }
    }

    /// Derivative at pre-activation `a`, given `z = apply(a)`.
    fn derivative(self, a: f64, z: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - z * z,
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-a).exp());
                s * (1.0 + a * (1.0 - s))
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Silu => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Silu),
            _ => None,
        }
    }
}

/// Dense layer, weights row-major `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl Dense {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        }));
    }
}

/// MLP velocity field. Input is `[x, t, c]`, output has the state dimension;
/// hidden layers use `activation`, the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpField {
    pub(crate) state_dim: usize,
    pub(crate) cond_dim: usize,
    pub(crate) activation: Activation,
    pub(crate) layers: Vec<Dense>,
}

impl MlpField {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        cond_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if state_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidParams("layer widths must be positive".into()));
        }
        let mut sizes = vec![state_dim + 1 + cond_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                Dense {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self {
            state_dim,
            cond_dim,
            activation,
            layers,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Layer widths from input to output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.layers[0].inputs];
        v.extend(self.layers.iter().map(|l| l.outputs));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`MlpField::parameters`].
    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut offset = 0;
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
    }

    pub(crate) fn apply_update(&mut self, grad: &[f64], lr: f64) {
        let mut offset = 0;
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *p -= lr * grad[offset];
                offset += 1;
            }
        }
    }

    pub fn parameters_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn input(&self, x: &[f64], t: f64, c: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.state_dim + 1 + self.cond_dim);
        z.extend_from_slice(x);
        z.push(t);
        z.extend_from_slice(c);
        z
    }

    /// Forward pass keeping every layer's pre-activation and output.
    fn forward_trace(&self, input: Vec<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(input);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = Vec::new();
            layer.forward(post.last().expect("input present"), &mut a);
            let z = if i == last {
                a.clone()
            } else {
                a.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(a);
            post.push(z);
        }
        (pre, post)
    }

    pub fn forward(&self, x: &[f64], t: f64, c: &[f64]) -> Vec<f64> {
        let mut cur = self.input(x, t, c);
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if i != last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }
}

impl VectorField for MlpField {
    fn dim(&self) -> usize {
        self.state_dim
    }

    fn condition_dim(&self) -> Option<usize> {
        Some(self.cond_dim)
    }

    fn velocity(&self, x: &[f64], t: f64, c: &Condition) -> Vec<f64> {
        self.forward(x, t, c)
    }
}

fn interpolate(x0: &[f64], x1: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let xt = x0.iter().zip(x1).map(|(a, b)| t * b + (1.0 - t) * a).collect();
    let target = x0.iter().zip(x1).map(|(a, b)| b - a).collect();
    (xt, target)
}

/// Squared distance between the field at `x_t = t x1 + (1 - t) x0` and `x1 - x0`.
pub fn fm_loss(field: &MlpField, x0: &[f64], x1: &[f64], t: f64, c: &[f64]) -> f64 {
    let (xt, target) = interpolate(x0, x1, t);
    field
        .forward(&xt, t, c)
        .iter()
        .zip(&target)
        .map(|(o, y)| (o - y) * (o - y))
        .sum()
}

/// [`fm_loss`] and its gradient with respect to [`MlpField::parameters`],
/// by backpropagation.
pub fn fm_loss_and_gradient(field: &MlpField, x0: &[f64], x1: &[f64], t: f64, c: &[f64]) -> (f64, Vec<f64>) {
    let (xt, target) = interpolate(x0, x1, t);
    let (pre, post) = field.forward_trace(field.input(&xt, t, c));
    let out = post.last().expect("output present");
    let loss = out.iter().zip(&target).map(|(o, y)| (o - y) * (o - y)).sum();

    let mut grad = vec![0.0; field.parameter_count()];
    let offsets: Vec<usize> = field
        .layers
        .iter()
        .scan(0, |acc, l| {
            let start = *acc;
            *acc += l.weights.len() + l.bias.len();
            Some(start)
        })
        .collect();

    // delta = dL/d(pre-activation) of the current layer
    let mut delta: Vec<f64> = out.iter().zip(&target).map(|(o, y)| 2.0 * (o - y)).collect();
    for (li, layer) in field.layers.iter().enumerate().rev() {
        let input = &post[li];
        let base = offsets[li];
        let bias_base = base + layer.weights.len();
        for (o, d) in delta.iter().enumerate() {
            let row = base + o * layer.inputs;
            for (i, x) in input.iter().enumerate() {
                grad[row + i] += d * x;
            }
            grad[bias_base + o] += d;
        }
        if li == 0 {
            break;
        }
        let below_pre = &pre[li - 1];
        let below_post = &post[li];
        delta = (0..layer.inputs)
            .map(|i| {
                let back: f64 = delta
                    .iter()
                    .enumerate()
                    .map(|(o, d)| d * layer.weights[o * layer.inputs + i])
                    .sum();
                back * field.activation.derivative(below_pre[i], below_post[i])
            })
            .collect();
    }
    (loss, grad)
}
