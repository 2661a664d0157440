//! Sensitivity-driven fixed mask for the FLASH baseline.

use crate::error::{Error, Result};
use crate::sparsity::{keep_count, topk_indices, SparseMask};
use crate::tensor::Tensor;

const BISECTION_TOL: f64 = 1e-9;

/// Per-layer keep counts: `k_l = clamp(r·(1 − d_l), 0, 1)` with `r` chosen so
/// the counts sum to the global budget. Fractional counts are rounded by
/// largest remainder so the total is exact.
pub fn flash_layer_budgets(layer_sizes: &[usize], mean_sparsity: &[f64], target: f64) -> Result<Vec<usize>> {
    if layer_sizes.len() != mean_sparsity.len() {
        return Err(Error::shape(format!(
            "{} layers but {} sparsity values",
            layer_sizes.len(),
            mean_sparsity.len()
        )));
    }
    crate::sparsity::check_sparsity(target)?;
    let total: usize = layer_sizes.iter().sum();
    let budget = keep_count(total, target);
    let density: Vec<f64> = mean_sparsity.iter().map(|d| (1.0 - d).clamp(0.0, 1.0)).collect();
    let available: usize = layer_sizes
        .iter()
        .zip(&density)
        .filter(|(_, k)| **k > 0.0)
        .map(|(n, _)| n)
        .sum();
    if available < budget {
        return Err(Error::config(format!(
            "sensitivity mask cannot keep {budget} weights: only {available} lie in layers with nonzero density"
        )));
    }

    let kept = |r: f64| -> f64 {
        layer_sizes
            .iter()
            .zip(&density)
            .map(|(&n, &k)| (r * k).clamp(0.0, 1.0) * n as f64)
            .sum()
    };
    let min_density = density.iter().copied().filter(|k| *k > 0.0).fold(1.0, f64::min);
    let (mut lo, mut hi) = (0.0, 1.0 / min_density);
    let goal = budget as f64;
    while (kept(hi) - kept(lo)) > BISECTION_TOL && hi - lo > f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if kept(mid) < goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = hi;

    let exact: Vec<f64> = layer_sizes
        .iter()
        .zip(&density)
        .map(|(&n, &k)| (r * k).clamp(0.0, 1.0) * n as f64)
        .collect();
    let mut counts: Vec<usize> = exact
        .iter()
        .zip(layer_sizes)
        .map(|(c, &n)| (c.floor() as usize).min(n))
        .collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    while assigned < budget {
        let before = assigned;
        for &l in &order {
            if assigned == budget {
                break;
            }
            if counts[l] < layer_sizes[l] && density[l] > 0.0 {
                counts[l] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    while assigned > budget {
        let before = assigned;
        for &l in order.iter().rev() {
            if assigned == budget {
                break;
            }
            if counts[l] > 0 {
                counts[l] -= 1;
                assigned -= 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    Ok(counts)
}

/// Build the fixed mask by per-layer Top-K on the aggregated weights, using
/// the mean per-layer sparsity the clients reached after global Top-K.
pub fn flash_sensitivity_mask(
    aggregated: &[Tensor],
    client_layer_sparsities: &[Vec<f64>],
    target: f64,
) -> Result<SparseMask> {
    if client_layer_sparsities.is_empty() {
        return Err(Error::usage("sensitivity mask needs at least one client"));
    }
    let layers = aggregated.len();
    let mut mean = vec![0.0; layers];
    for s in client_layer_sparsities {
        if s.len() != layers {
            return Err(Error::shape(format!(
                "client reports {} layers, model has {layers}",
                s.len()
            )));
        }
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= client_layer_sparsities.len() as f64;
    }
    let sizes: Vec<usize> = aggregated.iter().map(Tensor::len).collect();
    let counts = flash_layer_budgets(&sizes, &mean, target)?;
    let mut bits = Vec::with_capacity(sizes.iter().sum());
    for (w, &k) in aggregated.iter().zip(&counts) {
        let mut layer = vec![false; w.len()];
        for i in topk_indices(w.data(), k) {
            layer[i] = true;
        }
        bits.extend(layer);
    }
    SparseMask::from_bits(bits, &sizes)
}
