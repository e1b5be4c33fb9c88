//! Dense feed-forward networks with reverse-mode differentiation, written
//! against exactly the topology the hybrid model needs: tanh hidden layers and
//! a mixed head (a few linear units followed by tanh units). Everything is
//! f64; gradients are recorded at layer granularity on a [`Tape`].

use crate::error::{Error, Result};
use crate::seed::StreamSeed;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Smoothing constant inside the logarithmic loss; keeps a perfect fit at
/// ln(1e-12) instead of −∞ and appears in the gradient denominator.
pub const LOSS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    /// First `linear` units linear, the rest tanh — the 5-unit model head is
    /// `Split { linear: 3 }` on a width-5 layer.
    Split { linear: usize },
}

impl Activation {
    fn apply(&self, pre: &[f64], out: &mut [f64]) {
        match *self {
            Activation::Linear => out.copy_from_slice(pre),
            Activation::Tanh => {
                for (o, p) in out.iter_mut().zip(pre) {
                    *o = p.tanh();
                }
            }
            Activation::Split { linear } => {
                for (i, (o, p)) in out.iter_mut().zip(pre).enumerate() {
                    *o = if i < linear { *p } else { p.tanh() };
                }
            }
        }
    }

    /// d(activation)/d(pre), computed from the stored output (tanh' = 1 − y²).
    fn derivative(&self, post: &[f64], idx: usize) -> f64 {
        match *self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - post[idx] * post[idx],
            Activation::Split { linear } => {
                if idx < linear {
                    1.0
                } else {
                    1.0 - post[idx] * post[idx]
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn tanh(width: usize) -> Self {
        LayerSpec {
            width,
            activation: Activation::Tanh,
        }
    }

    pub fn linear(width: usize) -> Self {
        LayerSpec {
            width,
            activation: Activation::Linear,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::invalid("layer width must be at least 1"));
        }
        if let Activation::Split { linear } = self.activation {
            if linear > self.width {
                return Err(Error::invalid(format!(
                    "split activation with {linear} linear units exceeds width {}",
                    self.width
                )));
            }
        }
        Ok(())
    }
}

/// One affine layer: out = act(W·in + b), weights row-major [out][in].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn affine(&self, input: &[f64], pre: &mut [f64]) {
        for o in 0..self.out_width {
            let row = &self.weights[o * self.in_width..(o + 1) * self.in_width];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            pre[o] = acc;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub input_width: usize,
    pub layers: Vec<DenseLayer>,
}

impl NetworkParams {
    /// Glorot-uniform initialization: weights ~ U(±√(6/(fan_in+fan_out))),
    /// biases zero. Deterministic given the seed.
    pub fn init(input_width: usize, specs: &[LayerSpec], seed: StreamSeed) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::invalid("network input width must be at least 1"));
        }
        if specs.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        let mut rng = seed.rng();
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_width;
        for spec in specs {
            spec.validate()?;
            let fan_out = spec.width;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(DenseLayer {
                in_width: fan_in,
                out_width: fan_out,
                activation: spec.activation,
                weights,
                biases: vec![0.0; fan_out],
            });
            fan_in = fan_out;
        }
        Ok(NetworkParams {
            input_width,
            layers,
        })
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input_width, |l| l.out_width)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec {
                width: l.out_width,
                activation: l.activation,
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Consistency check on shapes and values (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.layers.is_empty() {
            return Err(Error::invalid("empty network"));
        }
        let mut fan_in = self.input_width;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_width != fan_in {
                return Err(Error::invalid(format!(
                    "layer {i} expects input width {}, previous layer emits {fan_in}",
                    l.in_width
                )));
            }
            if l.weights.len() != l.in_width * l.out_width || l.biases.len() != l.out_width {
                return Err(Error::invalid(format!("layer {i} has mismatched buffers")));
            }
            LayerSpec {
                width: l.out_width,
                activation: l.activation,
            }
            .validate()?;
            if !l.weights.iter().chain(&l.biases).all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("layer {i} has non-finite values")));
            }
            fan_in = l.out_width;
        }
        Ok(())
    }

    /// All parameters as one vector: per layer, weights row-major then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "flat vector has {} entries, network has {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }
}

/// Forward intermediates for one pass: the input plus every layer's pre- and
/// post-activation vector, enough to replay the pass or run it backwards.
#[derive(Debug, Clone)]
pub struct Tape {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

pub fn network_forward(params: &NetworkParams, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
    if input.len() != params.input_width {
        return Err(Error::invalid(format!(
            "input has {} features, network expects {}",
            input.len(),
            params.input_width
        )));
    }
    let mut pre_all = Vec::with_capacity(params.layers.len());
    let mut post_all = Vec::with_capacity(params.layers.len());
    let mut current = input.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut pre = vec![0.0; layer.out_width];
        layer.affine(&current, &mut pre);
        let mut post = vec![0.0; layer.out_width];
        layer.activation.apply(&pre, &mut post);
        if !post.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericOverflow(format!(
                "non-finite activation in layer {i}"
            )));
        }
        current = post.clone();
        pre_all.push(pre);
        post_all.push(post);
    }
    Ok((
        current,
        Tape {
            input: input.to_vec(),
            pre: pre_all,
            post: post_all,
        },
    ))
}

/// Parameter-shaped buffer for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        GradBuffer {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for x in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *x *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }
}

/// Reverse pass: gradient of head·head_gradient with respect to every
/// parameter. The tape must come from a forward pass of `params`.
pub fn backward(params: &NetworkParams, tape: &Tape, head_gradient: &[f64]) -> Result<GradBuffer> {
    let n_layers = params.layers.len();
    if tape.post.len() != n_layers {
        return Err(Error::invalid("tape does not match network depth"));
    }
    if head_gradient.len() != params.output_width() {
        return Err(Error::invalid(format!(
            "head gradient has {} entries, head width is {}",
            head_gradient.len(),
            params.output_width()
        )));
    }
    let mut grads = GradBuffer::zeros_like(params);
    // delta = ∂objective/∂pre for the current layer
    let mut delta: Vec<f64> = (0..head_gradient.len())
        .map(|i| head_gradient[i] * params.layers[n_layers - 1].activation.derivative(&tape.post[n_layers - 1], i))
        .collect();

    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let layer_input: &[f64] = if l == 0 { &tape.input } else { &tape.post[l - 1] };
        let g = &mut grads.layers[l];
        for o in 0..layer.out_width {
            let d = delta[o];
            g.biases[o] = d;
            let row = &mut g.weights[o * layer.in_width..(o + 1) * layer.in_width];
            for (gw, x) in row.iter_mut().zip(layer_input) {
                *gw = d * x;
            }
        }
        if l > 0 {
            let prev = &params.layers[l - 1];
            let mut next_delta = vec![0.0; layer.in_width];
            for o in 0..layer.out_width {
                let d = delta[o];
                let row = &layer.weights[o * layer.in_width..(o + 1) * layer.in_width];
                for (nd, w) in next_delta.iter_mut().zip(row) {
                    *nd += d * w;
                }
            }
            for (i, nd) in next_delta.iter_mut().enumerate() {
                *nd *= prev.activation.derivative(&tape.post[l - 1], i);
            }
            delta = next_delta;
        }
    }
    Ok(grads)
}

/// Which logarithmic loss to use. The default takes the log of the batch-mean
/// squared error; the alternative averages per-example logs and is kept
/// switchable for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LogOfMeanMse,
    MeanOfLogSquared,
}

impl Default for LossKind {
    fn default() -> Self {
        LossKind::LogOfMeanMse
    }
}

/// Loss and its gradient with respect to the predictions.
pub fn loss_and_gradient(
    kind: LossKind,
    predictions: &[f64],
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if predictions.is_empty() {
        return Err(Error::invalid("loss over an empty batch"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::invalid("prediction/target length mismatch"));
    }
    let n = predictions.len() as f64;
    match kind {
        LossKind::LogOfMeanMse => {
            let mse = predictions
                .iter()
                .zip(targets)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n;
            let denom = mse + LOSS_FLOOR;
            let grad = predictions
                .iter()
                .zip(targets)
                .map(|(p, t)| 2.0 * (p - t) / (n * denom))
                .collect();
            Ok((denom.ln(), grad))
        }
        LossKind::MeanOfLogSquared => {
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(predictions.len());
            for (p, t) in predictions.iter().zip(targets) {
                let r = p - t;
                let denom = r * r + LOSS_FLOOR;
                loss += denom.ln() / n;
                grad.push(2.0 * r / (n * denom));
            }
            Ok((loss, grad))
        }
    }
}

/// ln(mean squared error + floor) and its prediction gradient.
pub fn log_mse_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    loss_and_gradient(LossKind::LogOfMeanMse, predictions, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in (0,1), got {b}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Bias-corrected Adam moments, shaped like the network.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: GradBuffer,
    v: GradBuffer,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        AdamState {
            m: GradBuffer::zeros_like(params),
            v: GradBuffer::zeros_like(params),
            step: 0,
        }
    }
}

/// One Adam update in place. A non-finite gradient rejects the step and
/// leaves parameters and moments untouched.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &GradBuffer,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    cfg.validate()?;
    if !grads.is_finite() {
        return Err(Error::NumericOverflow(
            "non-finite gradient; optimizer step rejected".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (li, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        let m = &mut state.m.layers[li];
        let v = &mut state.v.layers[li];
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        };
        for i in 0..layer.weights.len() {
            update(&mut layer.weights[i], g.weights[i], &mut m.weights[i], &mut v.weights[i]);
        }
        for i in 0..layer.biases.len() {
            update(&mut layer.biases[i], g.biases[i], &mut m.biases[i], &mut v.biases[i]);
        }
    }
    Ok(())
}
