//! Server-side aggregation of client pseudo-gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Coordinates whose aggregate lands within this many ULP-scale units of the
/// inputs are treated as exact cancellation and set to zero. Without it a
/// coordinate pruned by every client keeps rounding residue of `ω_t`.
const FLUSH_ULPS: f64 = 4.0;

fn check_inputs(omega: &[Tensor], deltas: &[Vec<Tensor>]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::usage("no client updates to aggregate"));
    }
    for d in deltas {
        if d.len() != omega.len() {
            return Err(Error::shape(format!(
                "update has {} tensors, model {}",
                d.len(),
                omega.len()
            )));
        }
        for (a, b) in d.iter().zip(omega) {
            a.check_same_shape(b)?;
        }
    }
    Ok(())
}

fn flush(value: f64, omega: f64, deltas: impl Iterator<Item = f64>, m: usize) -> f64 {
    let scale = deltas.fold(omega.abs(), |acc, d| acc.max(d.abs()));
    if value.abs() <= FLUSH_ULPS * m as f64 * f64::EPSILON * scale {
        0.0
    } else {
        value
    }
}

fn combine(
    omega: &[Tensor],
    deltas: &[Vec<Tensor>],
    coordinate: impl Fn(f64, &mut dyn Iterator<Item = f64>) -> f64,
) -> Result<Vec<Tensor>> {
    check_inputs(omega, deltas)?;
    let m = deltas.len();
    omega
        .iter()
        .enumerate()
        .map(|(l, w)| {
            let data = (0..w.len())
                .map(|j| {
                    let base = w.data()[j];
                    let mut column = deltas.iter().map(|d| d[l].data()[j]);
                    let value = coordinate(base, &mut column);
                    if value == base {
                        value
                    } else {
                        flush(value, base, deltas.iter().map(|d| d[l].data()[j]), m)
                    }
                })
                .collect();
            w.with_data(data)
        })
        .collect()
}

/// `ω + (Σ_i Δ_i) / m`, summing in client order.
pub fn aggregate_fedavg(omega: &[Tensor], deltas: &[Vec<Tensor>]) -> Result<Vec<Tensor>> {
    let m = deltas.len() as f64;
    combine(omega, deltas, |w, col| w + col.sum::<f64>() / m)
}

/// `ω + (Σ_i c_i Δ_i) / Σ_i c_i`, e.g. with `c_i` the client sample counts.
pub fn aggregate_fedavg_weighted(omega: &[Tensor], deltas: &[Vec<Tensor>], weights: &[f64]) -> Result<Vec<Tensor>> {
    if weights.len() != deltas.len() {
        return Err(Error::shape(format!(
            "{} weights for {} updates",
            weights.len(),
            deltas.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) || weights.iter().any(|c| c.is_nan() || *c < 0.0) {
        return Err(Error::usage(
            "aggregation weights must be non-negative with a positive sum",
        ));
    }
    combine(omega, deltas, |w, col| {
        w + col.zip(weights).map(|(d, c)| c * d).sum::<f64>() / total
    })
}

/// Per coordinate, average only over the clients whose update is nonzero there.
pub fn aggregate_nonzero_avg(omega: &[Tensor], deltas: &[Vec<Tensor>]) -> Result<Vec<Tensor>> {
    combine(omega, deltas, |w, col| {
        let (sum, count) = col.fold((0.0, 0usize), |(s, c), d| (s + d, c + (d != 0.0) as usize));
        w + sum / count.max(1) as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec())
    }

    #[test]
    fn fedavg_examples() {
        let w = vec![t(&[0.0, 0.0])];
        let out = aggregate_fedavg(&w, &[vec![t(&[1.0, 0.0])], vec![t(&[0.0, 1.0])]]).unwrap();
        assert_eq!(out[0].data(), &[0.5, 0.5]);
        let w = vec![t(&[2.0, -1.0])];
        let single = aggregate_fedavg(&w, &[vec![t(&[0.5, 0.25])]]).unwrap();
        assert_eq!(single[0].data(), &[2.5, -0.75]);
        let zero = aggregate_fedavg(&w, &[vec![t(&[0.0, 0.0])], vec![t(&[0.0, 0.0])]]).unwrap();
        assert_eq!(zero, w);
    }

    #[test]
    fn nonzero_avg_examples() {
        let w = vec![t(&[0.0, 0.0, 3.0])];
        let out = aggregate_nonzero_avg(&w, &[vec![t(&[1.0, 0.0, 0.0])], vec![t(&[0.0, 1.0, 0.0])]]).unwrap();
        assert_eq!(out[0].data(), &[1.0, 1.0, 3.0]);
        let one = [vec![t(&[0.3, -0.1, 0.0])]];
        assert_eq!(
            aggregate_nonzero_avg(&w, &one).unwrap(),
            aggregate_fedavg(&w, &one).unwrap()
        );
    }

    #[test]
    fn unanimous_pruning_yields_exact_zero() {
        let w = vec![t(&[0.1 + 0.2, 1.0 / 3.0])];
        let deltas: Vec<Vec<Tensor>> = (0..7).map(|_| vec![t(&[-(0.1 + 0.2), -1.0 / 3.0])]).collect();
        assert_eq!(aggregate_fedavg(&w, &deltas).unwrap()[0].data(), &[0.0, 0.0]);
        assert_eq!(aggregate_nonzero_avg(&w, &deltas).unwrap()[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn weighted_by_counts() {
        let w = vec![t(&[0.0])];
        let out = aggregate_fedavg_weighted(&w, &[vec![t(&[1.0])], vec![t(&[4.0])]], &[3.0, 1.0]).unwrap();
        assert_eq!(out[0].data(), &[7.0 / 4.0]);
        assert!(aggregate_fedavg_weighted(&w, &[vec![t(&[1.0])]], &[0.0]).is_err());
    }

    #[test]
    fn mismatched_updates_error() {
        let w = vec![t(&[0.0, 0.0])];
        assert!(aggregate_fedavg(&w, &[vec![t(&[1.0])]]).is_err());
        assert!(aggregate_fedavg(&w, &[]).is_err());
    }
}
