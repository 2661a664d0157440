//! Small feed-forward networks with explicit forward and backward passes.
//!
//! The forward pass stores the input activation of every parameterized layer
//! in a [`ForwardTrace`]. Callers may prune those activations before calling
//! [`Model::backward`]; pruned activations only enter the weight-gradient
//! products, while ReLU derivatives and the error signal propagated to lower
//! layers come from the dense forward pass. Gradients are always dense.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reparam::Reparam;
use crate::sparsity::topk_per_layer;
use crate::tensor::Tensor;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Valid (unpadded) stride-1 convolution over a `channels × height × width`
    /// input stored channel-major in each row.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        height: usize,
        width: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
    pub has_bias: bool,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense { inputs, outputs },
            activation,
            has_bias: true,
        }
    }

    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        height: usize,
        width: usize,
        activation: Activation,
    ) -> Self {
        Self {
            kind: LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                height,
                width,
            },
            activation,
            has_bias: true,
        }
    }

    pub fn input_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d {
                in_channels,
                height,
                width,
                ..
            } => in_channels * height * width,
        }
    }

    pub fn output_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d {
                out_channels,
                kernel,
                height,
                width,
                ..
            } => out_channels * (height + 1 - kernel) * (width + 1 - kernel),
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => vec![inputs, outputs],
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![out_channels, in_channels, kernel, kernel],
        }
    }

    fn bias_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d { out_channels, .. } => out_channels,
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::config("dense layer dims must be positive"));
                }
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                height,
                width,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 {
                    return Err(Error::config("conv layer dims must be positive"));
                }
                if kernel > height || kernel > width {
                    return Err(Error::config(format!(
                        "kernel {kernel} larger than input {height}x{width}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Architecture presets standing in for large vision backbones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Architecture {
    /// ReLU MLP with the given hidden widths.
    Mlp { hidden: Vec<usize> },
    /// Two ReLU conv layers followed by one dense classifier.
    Cnn {
        in_channels: usize,
        height: usize,
        width: usize,
        channels: [usize; 2],
        kernel: usize,
    },
}

impl Architecture {
    pub fn layers(&self, input_dim: usize, classes: usize) -> Result<Vec<LayerSpec>> {
        match self {
            Architecture::Mlp { hidden } => {
                let mut layers = Vec::with_capacity(hidden.len() + 1);
                let mut prev = input_dim;
                for &h in hidden {
                    layers.push(LayerSpec::dense(prev, h, Activation::Relu));
                    prev = h;
                }
                layers.push(LayerSpec::dense(prev, classes, Activation::None));
                Ok(layers)
            }
            Architecture::Cnn {
                in_channels,
                height,
                width,
                channels,
                kernel,
            } => {
                if in_channels * height * width != input_dim {
                    return Err(Error::config(format!(
                        "cnn input {in_channels}x{height}x{width} does not match feature dim {input_dim}"
                    )));
                }
                let c1 = LayerSpec::conv2d(*in_channels, channels[0], *kernel, *height, *width, Activation::Relu);
                let (h1, w1) = (height + 1 - kernel, width + 1 - kernel);
                if *kernel > h1 || *kernel > w1 {
                    return Err(Error::config("cnn input too small for two conv layers"));
                }
                let c2 = LayerSpec::conv2d(channels[0], channels[1], *kernel, h1, w1, Activation::Relu);
                let head = LayerSpec::dense(c2.output_len(), classes, Activation::None);
                Ok(vec![c1, c2, head])
            }
        }
    }
}

/// Gradients with respect to raw weights and biases, layer by layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input activation of each parameterized layer, `[batch × input_len]`.
    pub activations: Vec<Tensor>,
    pub logits: Tensor,
    pre_activations: Vec<Tensor>,
    probs: Tensor,
    effective: Vec<Tensor>,
    version: u64,
}

impl ForwardTrace {
    /// Effective weights `θ` used by this forward pass.
    pub fn effective_weights(&self) -> &[Tensor] {
        &self.effective
    }

    /// Top-K prune each stored activation at its own sparsity level.
    pub fn prune_activations(&mut self, per_layer: &[f64]) -> Result<()> {
        if per_layer.len() != self.activations.len() {
            return Err(Error::shape(format!(
                "{} sparsity levels for {} layers",
                per_layer.len(),
                self.activations.len()
            )));
        }
        for (a, &s) in self.activations.iter_mut().zip(per_layer) {
            if s > 0.0 {
                *a = topk_per_layer(a, s)?;
            }
        }
        Ok(())
    }
}

/// An ordered stack of parameterized layers holding raw weights `ω`.
#[derive(Clone, Debug)]
pub struct Model {
    layers: Vec<LayerSpec>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    version: u64,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.weights == other.weights && self.biases == other.biases
    }
}

impl Model {
    /// He-normal weights and zero biases, deterministic under `seed`.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate_layers(&layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = layers
            .iter()
            .map(|l| {
                let std = (2.0 / l.fan_in() as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let shape = l.weight_shape();
                let n = shape.iter().product();
                Tensor::new(shape, (0..n).map(|_| normal.sample(&mut rng)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let biases = layers.iter().map(|l| Tensor::zeros(&[l.bias_len()])).collect();
        Ok(Self {
            layers,
            weights,
            biases,
            version: fresh_version(),
        })
    }

    pub fn from_parts(layers: Vec<LayerSpec>, weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        validate_layers(&layers)?;
        if weights.len() != layers.len() || biases.len() != layers.len() {
            return Err(Error::shape("one weight and one bias tensor per layer"));
        }
        for (l, (w, b)) in layers.iter().zip(weights.iter().zip(&biases)) {
            if w.shape() != l.weight_shape().as_slice() || b.len() != l.bias_len() {
                return Err(Error::shape(format!(
                    "layer expects weights {:?} and {} biases, got {:?} and {}",
                    l.weight_shape(),
                    l.bias_len(),
                    w.shape(),
                    b.len()
                )));
            }
        }
        Ok(Self {
            layers,
            weights,
            biases,
            version: fresh_version(),
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(LayerSpec::output_len).unwrap_or(0)
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map(LayerSpec::input_len).unwrap_or(0)
    }

    /// Number of prunable parameters (weights only).
    pub fn num_weights(&self) -> usize {
        self.weights.iter().map(Tensor::len).sum()
    }

    pub fn set_weights(&mut self, weights: Vec<Tensor>) -> Result<()> {
        check_aligned(&self.weights, &weights)?;
        self.weights = weights;
        self.version = fresh_version();
        Ok(())
    }

    pub fn set_biases(&mut self, biases: Vec<Tensor>) -> Result<()> {
        check_aligned(&self.biases, &biases)?;
        self.biases = biases;
        self.version = fresh_version();
        Ok(())
    }

    /// Re-parametrize, then run the forward pass and the mean cross-entropy.
    pub fn forward(&self, reparam: &mut Reparam, inputs: &Tensor, labels: &[usize]) -> Result<(ForwardTrace, f64)> {
        let effective = reparam.apply_all(&self.weights);
        self.forward_with(effective, inputs, labels)
    }

    /// Forward pass with caller-supplied effective weights.
    pub fn forward_with(
        &self,
        effective: Vec<Tensor>,
        inputs: &Tensor,
        labels: &[usize],
    ) -> Result<(ForwardTrace, f64)> {
        check_aligned(&self.weights, &effective)?;
        let batch = self.check_batch(inputs)?;
        if labels.len() != batch {
            return Err(Error::shape(format!("{} labels for batch of {batch}", labels.len())));
        }
        let classes = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::shape(format!("label {bad} out of range for {classes} classes")));
        }

        let mut activations = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = inputs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer_forward(layer, &current, &effective[l], &self.biases[l], batch);
            let out = match layer.activation {
                Activation::Relu => z.map(|v| v.max(0.0)),
                Activation::None => z.clone(),
            };
            activations.push(std::mem::replace(&mut current, out));
            pre_activations.push(z);
        }
        let logits = current;
        let (probs, loss) = softmax_cross_entropy(&logits, labels, classes);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss = {loss}")));
        }
        Ok((
            ForwardTrace {
                activations,
                logits,
                pre_activations,
                probs,
                effective,
                version: self.version,
            },
            loss,
        ))
    }

    /// Logits only; used for evaluation.
    pub fn predict(&self, reparam: &mut Reparam, inputs: &Tensor) -> Result<Tensor> {
        let effective = reparam.apply_all(&self.weights);
        let batch = self.check_batch(inputs)?;
        let mut current = inputs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer_forward(layer, &current, &effective[l], &self.biases[l], batch);
            current = match layer.activation {
                Activation::Relu => z.map(|v| v.max(0.0)),
                Activation::None => z,
            };
        }
        Ok(current)
    }

    /// Dense gradients of the loss with respect to the raw weights and biases.
    pub fn backward(&self, reparam: &Reparam, trace: &ForwardTrace, labels: &[usize]) -> Result<Gradients> {
        if trace.version != self.version {
            return Err(Error::usage("trace was produced before the model was last modified"));
        }
        let batch = trace.logits.shape()[0];
        if labels.len() != batch {
            return Err(Error::shape(format!("{} labels for batch of {batch}", labels.len())));
        }
        let classes = self.num_classes();
        let scale = 1.0 / batch as f64;
        let mut delta = trace.probs.clone();
        for (b, &y) in labels.iter().enumerate() {
            delta.data_mut()[b * classes + y] -= 1.0;
        }
        for v in delta.data_mut() {
            *v *= scale;
        }

        let n = self.layers.len();
        let mut weight_grads = vec![None; n];
        let mut bias_grads = vec![None; n];
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let theta = &trace.effective[l];
            let (g_theta, g_bias) = layer_param_grads(layer, &trace.activations[l], &delta, batch);
            let factor = reparam.grad_factor(l, &self.weights[l])?;
            weight_grads[l] = Some(g_theta.zip_map(&factor, |g, f| g * f)?);
            bias_grads[l] = Some(if layer.has_bias { g_bias } else { g_bias.map(|_| 0.0) });
            if l > 0 {
                let mut upstream = layer_input_grad(layer, theta, &delta, batch);
                if self.layers[l - 1].activation == Activation::Relu {
                    for (g, z) in upstream.data_mut().iter_mut().zip(trace.pre_activations[l - 1].data()) {
                        if *z <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                delta = upstream;
            }
        }
        Ok(Gradients {
            weights: weight_grads.into_iter().map(Option::unwrap).collect(),
            biases: bias_grads.into_iter().map(Option::unwrap).collect(),
        })
    }

    /// `ω ← ω − η·g` for weights and biases.
    pub fn sgd_step(&mut self, grads: &Gradients, eta: f64) -> Result<()> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::usage(format!(
                "learning rate must be finite and >= 0, got {eta}"
            )));
        }
        check_aligned(&self.weights, &grads.weights)?;
        check_aligned(&self.biases, &grads.biases)?;
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (a, b) in w.data_mut().iter_mut().zip(g.data()) {
                *a -= eta * b;
            }
        }
        for (w, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (a, b) in w.data_mut().iter_mut().zip(g.data()) {
                *a -= eta * b;
            }
        }
        self.version = fresh_version();
        Ok(())
    }

    fn check_batch(&self, inputs: &Tensor) -> Result<usize> {
        let shape = inputs.shape();
        if shape.len() != 2 || shape[1] != self.input_len() {
            return Err(Error::shape(format!(
                "inputs {shape:?} do not match model input length {}",
                self.input_len()
            )));
        }
        Ok(shape[0])
    }
}

fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::config("model needs at least one layer"));
    }
    for l in layers {
        l.validate()?;
    }
    for pair in layers.windows(2) {
        if pair[0].output_len() != pair[1].input_len() {
            return Err(Error::config(format!(
                "layer output {} does not feed next input {}",
                pair[0].output_len(),
                pair[1].input_len()
            )));
        }
    }
    if layers.last().map(|l| l.activation) != Some(Activation::None) {
        return Err(Error::config("final layer must emit raw logits (activation none)"));
    }
    Ok(())
}

fn check_aligned(a: &[Tensor], b: &[Tensor]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} tensors vs {}", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        x.check_same_shape(y)?;
    }
    Ok(())
}

fn softmax_cross_entropy(logits: &Tensor, labels: &[usize], classes: usize) -> (Tensor, f64) {
    let mut probs = logits.clone();
    let mut total = 0.0;
    for (row, &y) in probs.data_mut().chunks_mut(classes).zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let log_sum = sum.ln() + max;
        let z_y = row[y].ln() + max;
        for v in row.iter_mut() {
            *v /= sum;
        }
        total += log_sum - z_y;
    }
    (probs, total / labels.len() as f64)
}

fn layer_forward(layer: &LayerSpec, input: &Tensor, theta: &Tensor, bias: &Tensor, batch: usize) -> Tensor {
    let mut out = vec![0.0; batch * layer.output_len()];
    let x = input.data();
    let w = theta.data();
    let bias = bias.data();
    match layer.kind {
        LayerKind::Dense { inputs, outputs } => {
            for b in 0..batch {
                let row = &mut out[b * outputs..(b + 1) * outputs];
                if layer.has_bias {
                    row.copy_from_slice(bias);
                }
                for i in 0..inputs {
                    let a = x[b * inputs + i];
                    if a == 0.0 {
                        continue;
                    }
                    let wrow = &w[i * outputs..(i + 1) * outputs];
                    for (r, wv) in row.iter_mut().zip(wrow) {
                        *r += a * wv;
                    }
                }
            }
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            height,
            width,
        } => {
            let (oh, ow) = (height + 1 - kernel, width + 1 - kernel);
            let in_len = in_channels * height * width;
            let out_len = out_channels * oh * ow;
            for b in 0..batch {
                let xb = &x[b * in_len..(b + 1) * in_len];
                let ob = &mut out[b * out_len..(b + 1) * out_len];
                for o in 0..out_channels {
                    let base = if layer.has_bias { bias[o] } else { 0.0 };
                    for y in 0..oh {
                        for xo in 0..ow {
                            let mut acc = base;
                            for c in 0..in_channels {
                                for ki in 0..kernel {
                                    let xrow = c * height * width + (y + ki) * width + xo;
                                    let wrow = ((o * in_channels + c) * kernel + ki) * kernel;
                                    for kj in 0..kernel {
                                        acc += xb[xrow + kj] * w[wrow + kj];
                                    }
                                }
                            }
                            ob[(o * oh + y) * ow + xo] = acc;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![batch, layer.output_len()], out).expect("layer output shape")
}

/// Gradients of the effective weights and the bias given the layer input and
/// the error signal at the layer output.
fn layer_param_grads(layer: &LayerSpec, input: &Tensor, delta: &Tensor, batch: usize) -> (Tensor, Tensor) {
    let x = input.data();
    let d = delta.data();
    let mut gw = vec![0.0; layer.weight_shape().iter().product()];
    let mut gb = vec![0.0; layer.bias_len()];
    match layer.kind {
        LayerKind::Dense { inputs, outputs } => {
            for b in 0..batch {
                let drow = &d[b * outputs..(b + 1) * outputs];
                for (g, dv) in gb.iter_mut().zip(drow) {
                    *g += dv;
                }
                for i in 0..inputs {
                    let a = x[b * inputs + i];
                    if a == 0.0 {
                        continue;
                    }
                    for (g, dv) in gw[i * outputs..(i + 1) * outputs].iter_mut().zip(drow) {
                        *g += a * dv;
                    }
                }
            }
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            height,
            width,
        } => {
            let (oh, ow) = (height + 1 - kernel, width + 1 - kernel);
            let in_len = in_channels * height * width;
            let out_len = out_channels * oh * ow;
            for b in 0..batch {
                let xb = &x[b * in_len..(b + 1) * in_len];
                let db = &d[b * out_len..(b + 1) * out_len];
                for o in 0..out_channels {
                    for y in 0..oh {
                        for xo in 0..ow {
                            let dv = db[(o * oh + y) * ow + xo];
                            if dv == 0.0 {
                                continue;
                            }
                            gb[o] += dv;
                            for c in 0..in_channels {
                                for ki in 0..kernel {
                                    let xrow = c * height * width + (y + ki) * width + xo;
                                    let wrow = ((o * in_channels + c) * kernel + ki) * kernel;
                                    for kj in 0..kernel {
                                        gw[wrow + kj] += xb[xrow + kj] * dv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::new(layer.weight_shape(), gw).expect("weight grad shape"),
        Tensor::from_vec(gb),
    )
}

/// Error signal at the layer input.
fn layer_input_grad(layer: &LayerSpec, theta: &Tensor, delta: &Tensor, batch: usize) -> Tensor {
    let w = theta.data();
    let d = delta.data();
    let mut out = vec![0.0; batch * layer.input_len()];
    match layer.kind {
        LayerKind::Dense { inputs, outputs } => {
            for b in 0..batch {
                let drow = &d[b * outputs..(b + 1) * outputs];
                for i in 0..inputs {
                    let wrow = &w[i * outputs..(i + 1) * outputs];
                    out[b * inputs + i] = wrow.iter().zip(drow).map(|(a, b)| a * b).sum();
                }
            }
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            height,
            width,
        } => {
            let (oh, ow) = (height + 1 - kernel, width + 1 - kernel);
            let in_len = in_channels * height * width;
            let out_len = out_channels * oh * ow;
            for b in 0..batch {
                let db = &d[b * out_len..(b + 1) * out_len];
                let gb = &mut out[b * in_len..(b + 1) * in_len];
                for o in 0..out_channels {
                    for y in 0..oh {
                        for xo in 0..ow {
                            let dv = db[(o * oh + y) * ow + xo];
                            if dv == 0.0 {
                                continue;
                            }
                            for c in 0..in_channels {
                                for ki in 0..kernel {
                                    let xrow = c * height * width + (y + ki) * width + xo;
                                    let wrow = ((o * in_channels + c) * kernel + ki) * kernel;
                                    for kj in 0..kernel {
                                        gb[xrow + kj] += w[wrow + kj] * dv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![batch, layer.input_len()], out).expect("input grad shape")
}

/// `η_t = η_start · exp((t/T) · ln(η_end/η_start))`, indexed by round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub eta_start: f64,
    pub eta_end: f64,
    pub total_rounds: usize,
}

impl LrSchedule {
    pub fn new(eta_start: f64, eta_end: f64, total_rounds: usize) -> Result<Self> {
        let s = Self {
            eta_start,
            eta_end,
            total_rounds,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_start > 0.0 && self.eta_end > 0.0) || !self.eta_start.is_finite() || !self.eta_end.is_finite() {
            return Err(Error::config("learning rates must be positive and finite"));
        }
        if self.total_rounds == 0 {
            return Err(Error::config("schedule needs at least one round"));
        }
        Ok(())
    }

    pub fn lr_at(&self, t: usize) -> Result<f64> {
        if t > self.total_rounds {
            return Err(Error::usage(format!(
                "round {t} beyond schedule length {}",
                self.total_rounds
            )));
        }
        if t == self.total_rounds {
            return Ok(self.eta_end);
        }
        let frac = t as f64 / self.total_rounds as f64;
        Ok(self.eta_start * (frac * (self.eta_end / self.eta_start).ln()).exp())
    }
}
