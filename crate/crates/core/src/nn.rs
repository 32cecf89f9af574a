//! Dense fully-connected ReLU classifiers.
//!
//! A [`ModelParams`] is a stack of affine layers with ReLU after every layer
//! except the last one, whose outputs are the class logits. Everything is
//! `f64` so the trainer and the verifier agree on the same numbers.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NnError;

/// One affine layer. `weights` is row-major with shape `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.inputs..(j + 1) * self.inputs]
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    /// `W x + b`, accumulated left to right starting from the bias.
    pub fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for j in 0..self.outputs {
            let mut acc = self.bias[j];
            for (w, xi) in self.row(j).iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }
}

/// Parameters of a fully-connected ReLU classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Layer>", into = "Vec<Layer>")]
pub struct ModelParams {
    layers: Vec<Layer>,
}

impl TryFrom<Vec<Layer>> for ModelParams {
    type Error = NnError;

    fn try_from(layers: Vec<Layer>) -> Result<Self, NnError> {
        Self::new(layers)
    }
}

impl From<ModelParams> for Vec<Layer> {
    fn from(p: ModelParams) -> Self {
        p.layers
    }
}

impl ModelParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidShape("network has no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(NnError::InvalidShape(format!("layer {k} has a zero dimension")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(NnError::InvalidShape(format!(
                    "layer {k}: expected {}x{} weights and {} biases",
                    l.outputs, l.inputs, l.outputs
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(k));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(NnError::InvalidShape(format!(
                    "layer {k} outputs {} but layer {} takes {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Weights and biases uniform in `±1 / sqrt(fan_in)`.
    /// `dims` lists every width from the input to the class count.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self, NnError> {
        if dims.len() < 2 {
            return Err(NnError::InvalidShape("need at least input and output widths".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            if inputs == 0 || outputs == 0 {
                return Err(NnError::InvalidShape("zero layer width".into()));
            }
            let limit = 1.0 / (inputs as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let mut layer = Layer::zeros(inputs, outputs);
            for v in layer.weights.iter_mut().chain(&mut layer.bias) {
                *v = dist.sample(&mut rng);
            }
            layers.push(layer);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Widths of the hidden (ReLU) layers.
    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    /// Every width from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if k != last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, NnError> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Forward pass keeping each layer's pre-activations (the last entry is the logits).
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
        self.check_input(x)?;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&cur, &mut z);
            if k != last {
                cur = z.iter().map(|v| v.max(0.0)).collect();
            }
            out.push(z);
        }
        Ok(out)
    }
}

/// Index of the largest value; the lowest index wins exact ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// A labeled input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        Self { x, y }
    }
}

/// `-log softmax(logits)[y]` with the max shifted out before exponentiation.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - m).exp()).sum();
    (m + sum.ln() - logits[y]).max(0.0)
}

/// Gradient of cross-entropy w.r.t. the logits: `softmax(logits) - onehot(y)`.
pub fn cross_entropy_grad(logits: &[f64], y: usize) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let mut g: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    g[y] -= 1.0;
    g
}

/// Same shape as [`ModelParams`]; used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Layer>,
}

impl Grads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.inputs == p.inputs && g.outputs == p.outputs)
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub(crate) fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }
}

/// Mean cross-entropy over a batch.
pub fn mean_loss(params: &ModelParams, batch: &[Sample]) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        total += cross_entropy(&params.forward(&s.x)?, s.y);
    }
    Ok(total / batch.len() as f64)
}

/// Backpropagate `dlogits` for one input and accumulate into `grads`.
///
/// `acts[k]` is the input to layer `k` (post-ReLU for hidden layers) and
/// `pre[k]` its pre-activation.
pub(crate) fn accumulate_sample(
    params: &ModelParams,
    acts: &[Vec<f64>],
    pre: &[Vec<f64>],
    dlogits: Vec<f64>,
    grads: &mut Grads,
) {
    let mut delta = dlogits;
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let g = &mut grads.layers[k];
        let input = &acts[k];
        for j in 0..layer.outputs {
            let dj = delta[j];
            if dj == 0.0 {
                continue;
            }
            g.bias[j] += dj;
            let row = &mut g.weights[j * layer.inputs..(j + 1) * layer.inputs];
            for (w, a) in row.iter_mut().zip(input) {
                *w += dj * a;
            }
        }
        if k == 0 {
            break;
        }
        let mut prev = vec![0.0; layer.inputs];
        for j in 0..layer.outputs {
            let dj = delta[j];
            if dj == 0.0 {
                continue;
            }
            for (p, w) in prev.iter_mut().zip(layer.row(j)) {
                *p += dj * w;
            }
        }
        for (p, z) in prev.iter_mut().zip(&pre[k - 1]) {
            if *z <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
}

/// Layer inputs and pre-activations for one sample.
pub(crate) fn trace(params: &ModelParams, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut acts = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut cur = x.to_vec();
    let last = params.layers.len() - 1;
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = Vec::new();
        layer.affine(&cur, &mut z);
        let next = if k != last {
            z.iter().map(|v| v.max(0.0)).collect()
        } else {
            Vec::new()
        };
        acts.push(std::mem::replace(&mut cur, next));
        pre.push(z);
    }
    (acts, pre)
}

/// Gradient of the mean cross-entropy over `batch`.
pub fn backward(params: &ModelParams, batch: &[Sample]) -> Result<Grads, NnError> {
    backward_refs(params, batch.iter())
}

pub(crate) fn backward_refs<'a>(
    params: &ModelParams,
    batch: impl ExactSizeIterator<Item = &'a Sample>,
) -> Result<Grads, NnError> {
    let n = batch.len();
    if n == 0 {
        return Err(NnError::EmptyBatch);
    }
    let mut grads = Grads::zeros_like(params);
    for s in batch {
        params.check_input(&s.x)?;
        if s.y >= params.class_count() {
            return Err(NnError::LabelOutOfRange {
                label: s.y,
                classes: params.class_count(),
            });
        }
        let (acts, pre) = trace(params, &s.x);
        let dlogits = cross_entropy_grad(pre.last().unwrap(), s.y);
        accumulate_sample(params, &acts, &pre, dlogits, &mut grads);
    }
    grads.scale(1.0 / n as f64);
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Grads,
    v: Grads,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Grads::zeros_like(params),
            v: Grads::zeros_like(params),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ModelParams, grads: &Grads, state: &mut AdamState) -> Result<(), NnError> {
    if !grads.matches(params) || !state.m.matches(params) {
        return Err(NnError::InvalidShape("gradient shape does not match parameters".into()));
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[k];
        let m = &mut state.m.layers[k];
        let v = &mut state.v.layers[k];
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        };
        update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
        update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
    }
    Ok(())
}
