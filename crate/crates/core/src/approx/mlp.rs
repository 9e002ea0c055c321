use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Relu,
    Linear,
    /// Independent softmax over `groups` equal-size slices of the output.
    DecoupledSoftmax {
        groups: usize,
    },
}

/// Softmax applied independently to each of `groups` consecutive blocks.
pub fn decoupled_softmax(logits: &[f64], groups: usize) -> Result<Vec<f64>> {
    if groups == 0 || !logits.len().is_multiple_of(groups) {
        return Err(Error::Contract(format!(
            "{} logits cannot be split into {groups} groups",
            logits.len()
        )));
    }
    let mut out = logits.to_vec();
    softmax_groups_in_place(&mut out, groups);
    Ok(out)
}

fn softmax_groups_in_place(values: &mut [f64], groups: usize) {
    let width = values.len() / groups;
    for chunk in values.chunks_mut(width) {
        let max = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in chunk.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in chunk.iter_mut() {
            *v /= total;
        }
    }
}

/// Vector-Jacobian product of the grouped softmax: `y * (g - <g, y>)` per group.
pub fn decoupled_softmax_vjp(output: &[f64], output_grad: &[f64], groups: usize) -> Vec<f64> {
    let width = output.len() / groups;
    let mut grad = vec![0.0; output.len()];
    for ((y, g), dz) in output
        .chunks(width)
        .zip(output_grad.chunks(width))
        .zip(grad.chunks_mut(width))
    {
        let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
        for i in 0..width {
            dz[i] = y[i] * (g[i] - dot);
        }
    }
    grad
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = 0.0;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc + self.bias[o]);
        }
    }

    fn activate(&self, pre: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::Relu => pre.iter().map(|&z| z.max(0.0)).collect(),
            Activation::Linear => pre.to_vec(),
            Activation::DecoupledSoftmax { groups } => {
                let mut v = pre.to_vec();
                softmax_groups_in_place(&mut v, groups);
                v
            }
        }
    }
}

/// Parameters of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<Layer>,
}

/// Activations retained by `forward` for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input of each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
    /// Pre-activation of the final layer (the logits for a softmax head).
    pub fn logits(&self) -> &[f64] {
        self.pre.last().map_or(&[], Vec::as_slice)
    }
}

/// Parameter-shaped accumulator of derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(net: &ParamSet) -> Self {
        Gradient {
            weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.bias)
            .flatten()
            .all(|v| v.is_finite())
    }

    /// Values in the same order as [`ParamSet::values`]: per layer, weights
    /// then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.bias.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub(crate) fn matches(&self, net: &ParamSet) -> bool {
        self.weights.len() == net.layers.len()
            && net.layers.iter().enumerate().all(|(i, l)| {
                self.weights[i].len() == l.weights.len() && self.bias[i].len() == l.bias.len()
            })
    }
}

impl ParamSet {
    /// Uniform `+-1/sqrt(fan_in)` initialization. The last layer gets
    /// `output`, every hidden layer relu.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        Self::with_side_inputs(sizes, output, 0..0, rng)
    }

    /// Like [`ParamSet::new`], but the first-layer columns in `side` start at
    /// zero, draw no random numbers and do not count towards the fan-in.
    /// With zero-valued side inputs such a network computes exactly what the
    /// network without those columns computes.
    pub fn with_side_inputs<R: Rng + ?Sized>(
        sizes: &[usize],
        output: Activation,
        side: Range<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if side.end > sizes[0] || side.len() >= sizes[0] && !side.is_empty() {
            return Err(Error::Config(
                "side inputs must leave at least one input".into(),
            ));
        }
        let depth = sizes.len() - 1;
        let mut layers = Vec::with_capacity(depth);
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let skip = if i == 0 { side.clone() } else { 0..0 };
            let active = fan_in - skip.len();
            let bound = 1.0 / (active as f64).sqrt();
            let mut weights = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_out {
                for c in 0..fan_in {
                    if skip.contains(&c) {
                        weights.push(0.0);
                    } else {
                        weights.push(rng.random_range(-bound..bound));
                    }
                }
            }
            let bias = (0..fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let activation = if i + 1 == depth {
                output
            } else {
                Activation::Relu
            };
            layers.push(Layer {
                inputs: fan_in,
                outputs: fan_out,
                weights,
                bias,
                activation,
            });
        }
        let net = ParamSet { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            check_dim(
                "layer weights",
                layer.inputs * layer.outputs,
                layer.weights.len(),
            )?;
            check_dim("layer bias", layer.outputs, layer.bias.len())?;
            if i > 0 {
                check_dim("layer chaining", self.layers[i - 1].outputs, layer.inputs)?;
            }
            if let Activation::DecoupledSoftmax { groups } = layer.activation {
                if i + 1 != self.layers.len() {
                    return Err(Error::Config(
                        "decoupled softmax only allowed on the final layer".into(),
                    ));
                }
                if groups == 0 || layer.outputs % groups != 0 {
                    return Err(Error::Config(format!(
                        "{} outputs not divisible into {groups} softmax groups",
                        layer.outputs
                    )));
                }
            }
            if layer
                .weights
                .iter()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn same_architecture(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation
            })
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_dim("network input", self.input_dim(), input.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(&x, &mut z);
            let y = layer.activate(&z);
            inputs.push(std::mem::replace(&mut x, y));
            pre.push(z);
        }
        let tape = Tape {
            inputs,
            pre,
            output: x.clone(),
        };
        Ok((x, tape))
    }

    /// Forward pass without a tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), input.len())?;
        let mut x = input.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.affine(&x, &mut z);
            x = layer.activate(&z);
        }
        Ok(x)
    }

    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<(Gradient, Vec<f64>)> {
        let mut grad = Gradient::zeros_like(self);
        let input_grad = self.backward_into(tape, output_grad, Some(&mut grad))?;
        Ok((grad, input_grad))
    }

    /// Reverse pass accumulating parameter derivatives into `grad` (skipped
    /// when `None`); returns the derivative with respect to the input.
    pub fn backward_into(
        &self,
        tape: &Tape,
        output_grad: &[f64],
        mut grad: Option<&mut Gradient>,
    ) -> Result<Vec<f64>> {
        check_dim("output gradient", self.output_dim(), output_grad.len())?;
        if tape.pre.len() != self.layers.len() {
            return Err(Error::Contract(
                "tape does not belong to this network".into(),
            ));
        }
        if let Some(g) = grad.as_deref() {
            if !g.matches(self) {
                return Err(Error::Contract(
                    "gradient shape does not match network".into(),
                ));
            }
        }
        let last = self.layers.len() - 1;
        let mut upstream = output_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            check_dim("tape activations", layer.outputs, tape.pre[i].len())?;
            let dz: Vec<f64> = match layer.activation {
                Activation::Relu => upstream
                    .iter()
                    .zip(&tape.pre[i])
                    .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                    .collect(),
                Activation::Linear => upstream,
                Activation::DecoupledSoftmax { groups } => {
                    debug_assert_eq!(i, last);
                    decoupled_softmax_vjp(&tape.output, &upstream, groups)
                }
            };
            let x = &tape.inputs[i];
            if let Some(g) = grad.as_deref_mut() {
                let gw = &mut g.weights[i];
                for o in 0..layer.outputs {
                    let d = dz[o];
                    if d != 0.0 {
                        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                        for (w, &xi) in row.iter_mut().zip(x) {
                            *w += d * xi;
                        }
                    }
                    g.bias[i][o] += d;
                }
            }
            let mut dx = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = dz[o];
                if d != 0.0 {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (acc, &w) in dx.iter_mut().zip(row) {
                        *acc += d * w;
                    }
                }
            }
            upstream = dx;
        }
        Ok(upstream)
    }

    /// `self <- tau * source + (1 - tau) * self`, elementwise.
    pub fn soft_update_from(&mut self, source: &ParamSet, tau: f64) {
        debug_assert!(self.same_architecture(source));
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            for (d, s) in dst.weights.iter_mut().zip(&src.weights) {
                *d = tau * s + (1.0 - tau) * *d;
            }
            for (d, s) in dst.bias.iter_mut().zip(&src.bias) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// SHA-256 over architecture and the exact bit patterns of every value.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for layer in &self.layers {
            hasher.update((layer.inputs as u64).to_le_bytes());
            hasher.update((layer.outputs as u64).to_le_bytes());
        }
        for v in self.values() {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}
