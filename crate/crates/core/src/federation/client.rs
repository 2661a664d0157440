//! Local training for each client algorithm.

use crate::data::{batches, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::reparam::{Reparam, ReparamKind};
use crate::sparsity::{layer_sparsity, regrowth_count, topk_global, topk_per_layer, SparseMask};
use crate::tensor::{total_nnz, Tensor};

use super::{Algorithm, FedConfig};

/// What one sampled client sends back after local training.
#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub target_sparsity: f64,
    /// Transmitted weights `ω̃_i`.
    pub payload: Vec<Tensor>,
    /// `ω̃_i` minus the model the client received; the server aggregates this.
    pub pseudo_gradient: Vec<Tensor>,
    pub bias_delta: Vec<Tensor>,
    /// Nonzero transmitted weights.
    pub nnz: usize,
    /// Nonzero weights of the model the client received.
    pub downlink_nnz: usize,
    /// Weights that were zero in the received model and nonzero after training.
    pub regrowth: usize,
    pub num_samples: usize,
}

/// Per-client knobs that vary from round to round.
#[derive(Clone, Copy, Debug)]
pub struct ClientContext<'a> {
    pub round: usize,
    pub client_id: usize,
    pub target: f64,
    pub eta: f64,
    pub seed: u64,
    pub fixed_mask: Option<&'a SparseMask>,
    /// Prune the broadcast model to this sparsity before local training.
    pub downlink_target: Option<f64>,
}

pub(crate) fn reparam_kind(cfg: &FedConfig) -> ReparamKind {
    match cfg.algorithm {
        Algorithm::SparsyFed | Algorithm::NaivePowerprop => cfg.reparam,
        _ => ReparamKind::Identity,
    }
}

pub fn train_client(
    cfg: &FedConfig,
    global: &Model,
    train: &LabeledDataset,
    indices: &[usize],
    ctx: &ClientContext<'_>,
) -> Result<ClientUpdate> {
    let diverged = |detail: String| Error::Divergence {
        round: ctx.round,
        client: ctx.client_id,
        detail,
    };
    let mut received = global.clone();
    if let Some(s) = ctx.downlink_target {
        received.set_weights(topk_global(global.weights(), s)?)?;
    }
    let grad_mask = match (ctx.fixed_mask, ctx.downlink_target) {
        (Some(_), Some(_)) => Some(SparseMask::of(received.weights())),
        (Some(mask), None) => Some(mask.clone()),
        (None, _) => None,
    };
    let mut model = received.clone();
    let mut reparam = Reparam::new(reparam_kind(cfg));
    let layers = model.layers().len();

    for epoch in 0..cfg.local_epochs {
        for batch in batches(indices, cfg.batch_size, ctx.seed, epoch as u64)? {
            let (x, y) = train.gather(&batch)?;
            let effective = match cfg.algorithm {
                Algorithm::ZeroFl => model
                    .weights()
                    .iter()
                    .map(|w| topk_per_layer(w, ctx.target))
                    .collect::<Result<Vec<_>>>()?,
                _ => reparam.apply_all(model.weights()),
            };
            let (mut trace, _) = model.forward_with(effective, &x, &y).map_err(|e| match e {
                Error::NonFinite(d) => diverged(d),
                other => other,
            })?;
            match cfg.algorithm {
                Algorithm::SparsyFed if cfg.activation_pruning => {
                    let levels: Vec<f64> = trace.effective_weights().iter().map(layer_sparsity).collect();
                    trace.prune_activations(&levels)?;
                }
                Algorithm::ZeroFl => trace.prune_activations(&vec![ctx.target; layers])?,
                _ => {}
            }
            let mut grads = model.backward(&reparam, &trace, &y)?;
            if let Some(mask) = &grad_mask {
                mask.apply(&mut grads.weights)?;
            }
            model.sgd_step(&grads, ctx.eta)?;
        }
    }
    if !model.weights().iter().chain(model.biases()).all(Tensor::all_finite) {
        return Err(diverged("non-finite parameters after local training".into()));
    }

    let trained = model.weights();
    let regrowth = regrowth_count(&SparseMask::of(received.weights()), &SparseMask::of(trained))?;
    let payload = match cfg.algorithm {
        Algorithm::Dense | Algorithm::NaivePowerprop | Algorithm::Flash => trained.to_vec(),
        Algorithm::SparsyFed | Algorithm::TopK | Algorithm::ZeroFl => topk_global(trained, ctx.target)?,
    };
    let pseudo_gradient = payload
        .iter()
        .zip(received.weights())
        .map(|(p, w)| p.zip_map(w, |a, b| a - b))
        .collect::<Result<Vec<_>>>()?;
    let bias_delta = model
        .biases()
        .iter()
        .zip(received.biases())
        .map(|(p, w)| p.zip_map(w, |a, b| a - b))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClientUpdate {
        client_id: ctx.client_id,
        target_sparsity: ctx.target,
        nnz: total_nnz(&payload),
        downlink_nnz: total_nnz(received.weights()),
        payload,
        pseudo_gradient,
        bias_delta,
        regrowth,
        num_samples: indices.len(),
    })
}
