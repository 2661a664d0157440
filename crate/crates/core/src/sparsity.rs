//! Unstructured magnitude Top-K pruning, binary masks and sparsity statistics.
//!
//! Pruned entries are encoded as exact `0.0`; a mask is always derived from
//! the values rather than stored next to them. Biases never enter any of the
//! pools handled here.

use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{flatten, unflatten, Tensor};

/// Number of entries kept by Top-K at sparsity `s`: `ceil((1 - s) * n)`.
///
/// The product is snapped to the nearest integer when it lies within
/// floating-point noise of it, so `(1 - 0.95) * 1000` keeps 50 entries and
/// not 51.
pub fn keep_count(n: usize, sparsity: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let exact = (1.0 - sparsity) * n as f64;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() <= 1e-9 * (n as f64).max(1.0) {
        nearest
    } else {
        exact.ceil()
    };
    (k as usize).clamp(1, n)
}

pub fn check_sparsity(s: f64) -> Result<()> {
    if !(0.0..1.0).contains(&s) || s.is_nan() {
        return Err(Error::config(format!("target sparsity {s} outside [0, 1)")));
    }
    Ok(())
}

/// Magnitude order with ties broken towards the lower index.
fn rank(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b].abs().total_cmp(&values[a].abs()).then_with(|| a.cmp(&b))
}

/// Indices of the `k` largest-magnitude entries, ascending.
pub fn topk_indices(values: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(values.len());
    if k == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank(values, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// Zero all but the `keep_count(len, s)` largest-magnitude entries.
pub fn topk_flat(values: &[f64], sparsity: f64) -> Result<Vec<f64>> {
    check_sparsity(sparsity)?;
    let k = keep_count(values.len(), sparsity);
    let mut out = vec![0.0; values.len()];
    for i in topk_indices(values, k) {
        out[i] = values[i];
    }
    Ok(out)
}

/// Global unstructured Top-K over all tensors as one flattened pool.
pub fn topk_global(params: &[Tensor], sparsity: f64) -> Result<Vec<Tensor>> {
    let pruned = topk_flat(&flatten(params), sparsity)?;
    unflatten(&pruned, params)
}

/// Unstructured Top-K within a single tensor.
pub fn topk_per_layer(t: &Tensor, sparsity: f64) -> Result<Tensor> {
    if sparsity == 0.0 {
        return Ok(t.clone());
    }
    t.with_data(topk_flat(t.data(), sparsity)?)
}

/// Fraction of entries equal to exact `0.0`.
pub fn layer_sparsity(t: &Tensor) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    (t.len() - t.nnz()) as f64 / t.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub global_sparsity: f64,
    pub per_layer_sparsity: Vec<f64>,
}

impl SparsityReport {
    pub fn of(tensors: &[Tensor]) -> Self {
        let total: usize = tensors.iter().map(Tensor::len).sum();
        let zeros: usize = tensors.iter().map(|t| t.len() - t.nnz()).sum();
        Self {
            global_sparsity: if total == 0 { 0.0 } else { zeros as f64 / total as f64 },
            per_layer_sparsity: tensors.iter().map(layer_sparsity).collect(),
        }
    }
}

/// Binary support indicator aligned to the flattened weight layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseMask {
    bits: Vec<bool>,
    layer_offsets: Vec<Range<usize>>,
}

impl SparseMask {
    /// Bit `i` is set iff flattened parameter `i` is nonzero.
    pub fn of(tensors: &[Tensor]) -> Self {
        let mut bits = Vec::new();
        let mut layer_offsets = Vec::with_capacity(tensors.len());
        for t in tensors {
            let start = bits.len();
            bits.extend(t.data().iter().map(|v| *v != 0.0));
            layer_offsets.push(start..bits.len());
        }
        Self { bits, layer_offsets }
    }

    pub fn from_bits(bits: Vec<bool>, layer_sizes: &[usize]) -> Result<Self> {
        let total: usize = layer_sizes.iter().sum();
        if total != bits.len() {
            return Err(Error::shape(format!("{} mask bits for {total} parameters", bits.len())));
        }
        let mut start = 0;
        let layer_offsets = layer_sizes
            .iter()
            .map(|n| {
                let r = start..start + n;
                start += n;
                r
            })
            .collect();
        Ok(Self { bits, layer_offsets })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn layer_offsets(&self) -> &[Range<usize>] {
        &self.layer_offsets
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.popcount() as f64 / self.bits.len() as f64
    }

    /// Zero every entry whose bit is clear.
    pub fn apply(&self, tensors: &mut [Tensor]) -> Result<()> {
        let total: usize = tensors.iter().map(Tensor::len).sum();
        if total != self.bits.len() {
            return Err(Error::shape(format!(
                "mask of {} bits applied to {total} parameters",
                self.bits.len()
            )));
        }
        let mut offset = 0;
        for t in tensors.iter_mut() {
            let n = t.len();
            for (v, keep) in t.data_mut().iter_mut().zip(&self.bits[offset..offset + n]) {
                if !keep {
                    *v = 0.0;
                }
            }
            offset += n;
        }
        Ok(())
    }

    fn check_len(&self, other: &SparseMask) -> Result<()> {
        if self.bits.len() != other.bits.len() {
            return Err(Error::shape(format!(
                "mask lengths differ: {} vs {}",
                self.bits.len(),
                other.bits.len()
            )));
        }
        Ok(())
    }
}

/// `|a ∧ b| / |a ∨ b|`, with two empty masks counted as identical.
pub fn mask_iou(a: &SparseMask, b: &SparseMask) -> Result<f64> {
    a.check_len(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Positions that were zero in `before` and are nonzero in `after`.
pub fn regrowth_count(before: &SparseMask, after: &SparseMask) -> Result<usize> {
    before.check_len(after)?;
    Ok(before.bits.iter().zip(&after.bits).filter(|(b, a)| !**b && **a).count())
}
