//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's numerics: networks are evaluated
//! scalar by scalar, Top-K by full sorting and aggregation coordinate by
//! coordinate.

#![allow(dead_code)]

use sparsyfed::data::{lda_partition, make_synthetic, ClientPartition, LabeledDataset};
use sparsyfed::federation::{run_federation, Algorithm, FedConfig, FederationOutcome, SparsityTarget};
use sparsyfed::nn::{Activation, Architecture, LayerKind, LayerSpec, Model};
use sparsyfed::reparam::ReparamKind;

/// Keep count `ceil(n·(den−num)/den)` for sparsity `num/den`, at least 1.
pub fn oracle_keep(n: usize, num: usize, den: usize) -> usize {
    ((n * (den - num)).div_ceil(den)).max(1).min(n)
}

/// Indices kept by Top-K: sort by magnitude descending, index ascending.
pub fn oracle_topk_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().partial_cmp(&values[a].abs()).unwrap().then(a.cmp(&b)));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    kept
}

pub fn oracle_topk(values: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for i in oracle_topk_indices(values, k) {
        out[i] = values[i];
    }
    out
}

/// Rounding-residue threshold the aggregators use to report exact cancellation.
fn settle(value: f64, base: f64, column: &[f64]) -> f64 {
    if value == base {
        return value;
    }
    let mut scale = base.abs();
    for d in column {
        if d.abs() > scale {
            scale = d.abs();
        }
    }
    if value.abs() <= 4.0 * column.len() as f64 * f64::EPSILON * scale {
        0.0
    } else {
        value
    }
}

/// `ω + Σ_i Δ_i / m` coordinate by coordinate.
pub fn oracle_fedavg(omega: &[f64], deltas: &[Vec<f64>]) -> Vec<f64> {
    let m = deltas.len() as f64;
    (0..omega.len())
        .map(|j| {
            let column: Vec<f64> = deltas.iter().map(|d| d[j]).collect();
            let mut sum = 0.0;
            for d in &column {
                sum += d;
            }
            settle(omega[j] + sum / m, omega[j], &column)
        })
        .collect()
}

/// `ω + Σ_i Δ_i / max(1, #nonzero)` coordinate by coordinate.
pub fn oracle_nonzero_avg(omega: &[f64], deltas: &[Vec<f64>]) -> Vec<f64> {
    (0..omega.len())
        .map(|j| {
            let column: Vec<f64> = deltas.iter().map(|d| d[j]).collect();
            let mut sum = 0.0;
            let mut count = 0usize;
            for d in &column {
                sum += d;
                if *d != 0.0 {
                    count += 1;
                }
            }
            settle(omega[j] + sum / count.max(1) as f64, omega[j], &column)
        })
        .collect()
}

pub fn oracle_tv(a: &[usize], b: &[usize]) -> f64 {
    let sa: usize = a.iter().sum();
    let sb: usize = b.iter().sum();
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += (*x as f64 / sa as f64 - *y as f64 / sb as f64).abs();
    }
    acc / 2.0
}

pub fn oracle_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Effective-weight map evaluated scalar by scalar. The spectral exponent is
/// frozen at the value computed from `base`, mirroring a training session
/// that cached it on its first forward pass.
#[derive(Clone, Debug)]
pub enum OracleReparam {
    Identity,
    Power(f64),
    Rescale,
}

impl OracleReparam {
    pub fn for_layer(kind: ReparamKind, base: &[f64]) -> Self {
        match kind {
            ReparamKind::Identity => OracleReparam::Identity,
            ReparamKind::Powerprop { beta } => OracleReparam::Power(beta),
            ReparamKind::SpectralExponent => {
                let peak = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let mut sum = 0.0;
                for v in base {
                    sum += 1.0 + v.abs() / peak;
                }
                OracleReparam::Power(sum / base.len() as f64)
            }
            ReparamKind::SpectralRescale => OracleReparam::Rescale,
        }
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        match self {
            OracleReparam::Identity => w.to_vec(),
            OracleReparam::Power(e) => w
                .iter()
                .map(|&v| if v == 0.0 { 0.0 } else { v.signum() * v.abs().powf(*e) })
                .collect(),
            OracleReparam::Rescale => {
                let sigma = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                w.iter().map(|&v| v * v.abs() / sigma).collect()
            }
        }
    }
}

/// Pre-activation of one layer for one example.
fn oracle_layer(layer: &LayerSpec, x: &[f64], theta: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    match layer.kind {
        LayerKind::Dense { inputs, outputs } => (0..outputs)
            .map(|o| {
                let mut acc = bias.map_or(0.0, |b| b[o]);
                for i in 0..inputs {
                    acc += x[i] * theta[i * outputs + o];
                }
                acc
            })
            .collect(),
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            height,
            width,
        } => {
            let oh = height - kernel + 1;
            let ow = width - kernel + 1;
            let mut out = Vec::with_capacity(out_channels * oh * ow);
            for o in 0..out_channels {
                for r in 0..oh {
                    for c in 0..ow {
                        let mut acc = bias.map_or(0.0, |b| b[o]);
                        for ch in 0..in_channels {
                            for i in 0..kernel {
                                for j in 0..kernel {
                                    let xv = x[ch * height * width + (r + i) * width + (c + j)];
                                    let wv = theta[((o * in_channels + ch) * kernel + i) * kernel + j];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
            out
        }
    }
}

/// Scalar network evaluation.
///
/// With `base_thetas` and `act_levels`, every layer computes
/// `lin(a, θ₀) + lin(prune(a), θ − θ₀) + b`, where `prune` keeps the
/// largest-magnitude entries of the batch's input activation at the given
/// level. Its derivative at `θ = θ₀` is the gradient the activation-pruned
/// backward pass claims to compute.
pub struct OracleNet<'a> {
    pub layers: &'a [LayerSpec],
    pub biases: &'a [Vec<f64>],
    pub inputs: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

pub struct OracleEval {
    pub loss: f64,
    /// Sign of every ReLU pre-activation, to detect kink crossings.
    pub relu_pattern: Vec<bool>,
}

impl OracleNet<'_> {
    pub fn eval(
        &self,
        thetas: &[Vec<f64>],
        base_thetas: Option<&[Vec<f64>]>,
        act_levels: Option<&[f64]>,
    ) -> OracleEval {
        let batch = self.inputs.len();
        let mut acts: Vec<Vec<f64>> = self.inputs.to_vec();
        let mut pattern = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let bias = layer.has_bias.then_some(self.biases[l].as_slice());
            let mut z: Vec<Vec<f64>> = match (base_thetas, act_levels) {
                (Some(base), Some(levels)) => {
                    let diff: Vec<f64> = thetas[l].iter().zip(&base[l]).map(|(a, b)| a - b).collect();
                    let pruned = prune_batch(&acts, levels[l]);
                    (0..batch)
                        .map(|b| {
                            let dense = oracle_layer(layer, &acts[b], &base[l], bias);
                            let delta = oracle_layer(layer, &pruned[b], &diff, None);
                            dense.iter().zip(&delta).map(|(x, y)| x + y).collect()
                        })
                        .collect()
                }
                _ => (0..batch)
                    .map(|b| oracle_layer(layer, &acts[b], &thetas[l], bias))
                    .collect(),
            };
            if layer.activation == Activation::Relu {
                for row in &mut z {
                    for v in row.iter_mut() {
                        pattern.push(*v > 0.0);
                        *v = v.max(0.0);
                    }
                }
            }
            acts = z;
        }
        let mut loss = 0.0;
        for (row, &y) in acts.iter().zip(self.labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
        }
        OracleEval {
            loss: loss / batch as f64,
            relu_pattern: pattern,
        }
    }
}

/// Keep the largest-magnitude entries of a `[batch × len]` activation,
/// ranked jointly over the whole batch.
fn prune_batch(acts: &[Vec<f64>], level: f64) -> Vec<Vec<f64>> {
    if level <= 0.0 {
        return acts.to_vec();
    }
    let len = acts[0].len();
    let flat: Vec<f64> = acts.iter().flatten().copied().collect();
    let n = flat.len();
    let k = ((1.0 - level) * n as f64 - 1e-9 * n as f64).ceil().max(1.0) as usize;
    let kept = oracle_topk(&flat, k.min(n));
    kept.chunks(len).map(<[f64]>::to_vec).collect()
}

/// Shared synthetic federation setup.
pub struct Setup {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub partition: ClientPartition,
    pub layers: Vec<LayerSpec>,
}

pub const GLOBAL_SEED: u64 = 1337;
pub const SEEDS: [u64; 3] = [5378, 9421, 2035];

impl Setup {
    pub fn new(per_class: usize, margin: f64, alpha: f64, clients: usize) -> Self {
        let (train, test) = make_synthetic(10, 32, per_class, margin, GLOBAL_SEED).unwrap();
        let partition = lda_partition(train.labels(), clients, alpha, GLOBAL_SEED).unwrap();
        let layers = Architecture::Mlp { hidden: vec![64, 64] }.layers(32, 10).unwrap();
        Self {
            train,
            test,
            partition,
            layers,
        }
    }

    pub fn run(&self, cfg: &FedConfig) -> FederationOutcome {
        let initial = Model::new(self.layers.clone(), GLOBAL_SEED).unwrap();
        run_federation(cfg, initial, &self.train, &self.test, &self.partition).unwrap()
    }
}

pub fn config(algorithm: Algorithm, sparsity: f64, rounds: usize, seed: u64) -> FedConfig {
    let reparam = match algorithm {
        Algorithm::SparsyFed | Algorithm::NaivePowerprop => ReparamKind::Powerprop { beta: 1.25 },
        _ => ReparamKind::Identity,
    };
    FedConfig {
        rounds,
        algorithm,
        reparam,
        sparsity: SparsityTarget::Uniform(sparsity),
        sampling_seed: seed,
        global_seed: GLOBAL_SEED,
        ..FedConfig::default()
    }
}
