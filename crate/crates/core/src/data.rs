//! Synthetic datasets, LDA client partitioning and mini-batching.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAX_PARTITION_ATTEMPTS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    inputs: Tensor,
    labels: Vec<usize>,
    classes: usize,
    split: Split,
}

impl LabeledDataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        let shape = inputs.shape();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::shape(format!(
                "inputs {shape:?} do not match {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Data(format!("label {bad} not below class count {classes}")));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
            split,
        })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.shape()[1]
    }

    /// Rows `indices` as a `[len × d]` tensor plus their labels.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let d = self.dim();
        let mut x = Vec::with_capacity(indices.len() * d);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::shape(format!(
                    "index {i} out of range for {} samples",
                    self.len()
                )));
            }
            x.extend_from_slice(&self.inputs.data()[i * d..(i + 1) * d]);
            y.push(self.labels[i]);
        }
        Ok((Tensor::new(vec![indices.len(), d], x)?, y))
    }

    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &i in indices {
            h[self.labels[i]] += 1;
        }
        h
    }
}

/// Gaussian class clusters with unit noise; class means are `margin` times a
/// random unit vector. Returns a stratified 80/20 train/test split.
pub fn make_synthetic(
    classes: usize,
    dim: usize,
    per_class: usize,
    margin: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if classes < 2 || per_class < 2 || dim == 0 {
        return Err(Error::config(
            "need at least 2 classes, 2 samples per class and 1 feature",
        ));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::config(format!("margin must be positive, got {margin}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| margin * x / norm).collect()
        })
        .collect();
    let n_train = ((0.8 * per_class as f64).round() as usize).clamp(1, per_class - 1);

    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for (c, mean) in means.iter().enumerate() {
        for j in 0..per_class {
            let target = if j < n_train { &mut train } else { &mut test };
            target
                .0
                .extend(mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
            target.1.push(c);
        }
    }
    let build = |(x, y): (Vec<f64>, Vec<usize>), split| {
        let n = y.len();
        LabeledDataset::new(Tensor::new(vec![n, dim], x)?, y, classes, split)
    };
    Ok((build(train, Split::Train)?, build(test, Split::Test)?))
}

/// Load a CSV with a header row, float feature columns and an integer label
/// in the last column. The class count is `max label + 1`.
pub fn load_csv(path: &Path, split: Split) -> Result<LabeledDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut dim = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Data(format!("row {row}: need features and a label")));
        }
        let d = record.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(Error::Data(format!(
                "row {row}: expected {} features, got {d}",
                dim.unwrap()
            )));
        }
        for field in record.iter().take(d) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("row {row}: bad feature {field:?}")))?;
            x.push(v);
        }
        let label = &record[d];
        y.push(
            label
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Data(format!("row {row}: bad label {label:?}")))?,
        );
    }
    let dim = dim.ok_or_else(|| Error::Data(format!("{} has no data rows", path.display())))?;
    let classes = y.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(Tensor::new(vec![y.len(), dim], x)?, y, classes, split)
}

/// Per-client index lists into a training set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientPartition {
    pub clients: Vec<Vec<usize>>,
}

impl ClientPartition {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn total(&self) -> usize {
        self.clients.iter().map(Vec::len).sum()
    }
}

/// Class-wise Dirichlet partition: each class's samples are spread over the
/// clients by categorical draws from a Dirichlet(α) proportion vector. Draws
/// leaving any client empty are retried with derived seeds.
pub fn lda_partition(labels: &[usize], num_clients: usize, alpha: f64, seed: u64) -> Result<ClientPartition> {
    if num_clients == 0 {
        return Err(Error::config("need at least one client"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    if labels.len() < num_clients {
        return Err(Error::Data(format!(
            "{} samples cannot cover {num_clients} clients",
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::config(e.to_string()))?;

    for attempt in 0..MAX_PARTITION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let mut clients = vec![Vec::new(); num_clients];
        for members in by_class.iter().filter(|m| !m.is_empty()) {
            let weights = dirichlet(&gamma, num_clients, &mut rng);
            let pick = WeightedIndex::new(&weights).map_err(|e| Error::Data(e.to_string()))?;
            for &i in members {
                clients[pick.sample(&mut rng)].push(i);
            }
        }
        if clients.iter().all(|c| !c.is_empty()) {
            return Ok(ClientPartition { clients });
        }
        log::debug!("partition attempt {attempt} left a client empty, redrawing");
    }
    Err(Error::Data(format!(
        "no partition without empty clients after {MAX_PARTITION_ATTEMPTS} attempts"
    )))
}

fn dirichlet(gamma: &Gamma<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|g| g / sum).collect();
        }
    }
}

/// One epoch of shuffled mini-batches over `indices`; the last batch may be
/// short.
pub fn batches(indices: &[usize], batch_size: usize, seed: u64, step: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut order = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Total-variation distance between two histograms after normalization.
pub fn total_variation(a: &[usize], b: &[usize]) -> f64 {
    let sa: usize = a.iter().sum();
    let sb: usize = b.iter().sum();
    if sa == 0 || sb == 0 {
        return if sa == sb { 0.0 } else { 1.0 };
    }
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / sa as f64 - y as f64 / sb as f64).abs())
        .sum::<f64>()
}

/// Mean total-variation distance over all client pairs.
pub fn mean_pairwise_tv(histograms: &[Vec<usize>]) -> f64 {
    let n = histograms.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += total_variation(&histograms[i], &histograms[j]);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}
