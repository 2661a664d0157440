//! Point-wise weight re-parametrizations applied before the forward pass.
//!
//! Each variant maps raw weights `w` to effective weights `θ` with
//! `sign(θ) = sign(w)` and `0 ↦ 0`, and exposes the element-wise chain factor
//! `dθ/dw` used to pull gradients back onto the raw weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which re-parametrization to use; the serialisable half of [`Reparam`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ReparamKind {
    Identity,
    Powerprop {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    SpectralExponent,
    SpectralRescale,
}

fn default_beta() -> f64 {
    1.25
}

impl Default for ReparamKind {
    fn default() -> Self {
        ReparamKind::Powerprop { beta: default_beta() }
    }
}

impl ReparamKind {
    pub fn validate(&self) -> Result<()> {
        if let ReparamKind::Powerprop { beta } = self {
            if !(beta.is_finite() && *beta >= 1.0) {
                return Err(Error::config(format!("powerprop beta must be >= 1, got {beta}")));
            }
        }
        Ok(())
    }
}

/// `sign(w)·|w|^beta`.
pub fn apply_powerprop(w: &Tensor, beta: f64) -> Tensor {
    w.map(|v| signed_pow(v, beta))
}

/// `beta·|w|^(beta-1)`, the chain factor of [`apply_powerprop`].
pub fn powerprop_grad_factor(w: &Tensor, beta: f64) -> Tensor {
    w.map(|v| beta * v.abs().powf(beta - 1.0))
}

fn signed_pow(v: f64, exponent: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().powf(exponent)
    }
}

/// Mean of `1 + |w_i| / max_j |w_j|` over the layer; `1` for an all-zero layer.
pub fn spectral_exponent_of(w: &Tensor) -> f64 {
    let peak = w.max_abs();
    if peak == 0.0 {
        log::warn!("all-zero layer, spectral exponent falls back to identity");
        return 1.0;
    }
    let sum: f64 = w.data().iter().map(|v| 1.0 + v.abs() / peak).sum();
    sum / w.len() as f64
}

/// Raise `w` to the layer's cached exponent, computing the cache on first use.
pub fn apply_spectral_exponent(w: &Tensor, cache: Option<f64>) -> (Tensor, f64) {
    let e = cache.unwrap_or_else(|| spectral_exponent_of(w));
    (w.map(|v| signed_pow(v, e)), e)
}

/// `w·|w|/σ` with `σ = max |w|` of the layer.
pub fn apply_spectral_rescale(w: &Tensor) -> Tensor {
    let sigma = w.max_abs();
    if sigma == 0.0 {
        return w.clone();
    }
    w.map(|v| v * v.abs() / sigma)
}

/// `2|w|/σ`; σ is treated as a constant.
pub fn spectral_rescale_grad_factor(w: &Tensor) -> Tensor {
    let sigma = w.max_abs();
    if sigma == 0.0 {
        return w.map(|_| 1.0);
    }
    w.map(|v| 2.0 * v.abs() / sigma)
}

/// A re-parametrization bound to one local training session.
///
/// The spectral-exponent variant caches one scalar per layer on its first
/// forward pass and reuses it for the rest of the session.
#[derive(Clone, Debug)]
pub struct Reparam {
    kind: ReparamKind,
    exponents: Vec<Option<f64>>,
}

impl Reparam {
    pub fn new(kind: ReparamKind) -> Self {
        Self {
            kind,
            exponents: Vec::new(),
        }
    }

    pub fn identity() -> Self {
        Self::new(ReparamKind::Identity)
    }

    pub fn kind(&self) -> ReparamKind {
        self.kind
    }

    /// Cached spectral exponents, `None` for layers not seen yet.
    pub fn cached_exponents(&self) -> &[Option<f64>] {
        &self.exponents
    }

    pub fn apply(&mut self, layer: usize, w: &Tensor) -> Tensor {
        match self.kind {
            ReparamKind::Identity => w.clone(),
            ReparamKind::Powerprop { beta } => apply_powerprop(w, beta),
            ReparamKind::SpectralRescale => apply_spectral_rescale(w),
            ReparamKind::SpectralExponent => {
                if self.exponents.len() <= layer {
                    self.exponents.resize(layer + 1, None);
                }
                let (theta, e) = apply_spectral_exponent(w, self.exponents[layer]);
                self.exponents[layer] = Some(e);
                theta
            }
        }
    }

    pub fn apply_all(&mut self, weights: &[Tensor]) -> Vec<Tensor> {
        weights.iter().enumerate().map(|(l, w)| self.apply(l, w)).collect()
    }

    pub fn grad_factor(&self, layer: usize, w: &Tensor) -> Result<Tensor> {
        Ok(match self.kind {
            ReparamKind::Identity => w.map(|_| 1.0),
            ReparamKind::Powerprop { beta } => powerprop_grad_factor(w, beta),
            ReparamKind::SpectralRescale => spectral_rescale_grad_factor(w),
            ReparamKind::SpectralExponent => {
                let e = self
                    .exponents
                    .get(layer)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::usage(format!("no cached spectral exponent for layer {layer}")))?;
                powerprop_grad_factor(w, e)
            }
        })
    }
}
