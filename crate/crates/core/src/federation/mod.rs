//! The federated round loop: sample, train locally, aggregate, measure.
//!
//! Sparse algorithms prune each client's trained model to its target before
//! upload, so the payload `ω̃_i` carries at most `keep_count(n, ŝ_i)` nonzero
//! weights and the server aggregates the pseudo-gradients `ω̃_i − ω_t`.
//! With sparsity groups, clients after the first round receive `ω_t` pruned
//! to their own target and the pseudo-gradient is taken against that copy.

mod aggregate;
mod client;
mod flash;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClientPartition, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::{comm_cost, evaluate, weight_movement, ClientRecord, RoundReport};
use crate::nn::{LrSchedule, Model};
use crate::reparam::ReparamKind;
use crate::sparsity::{check_sparsity, layer_sparsity, topk_global, SparseMask, SparsityReport};
use crate::tensor::Tensor;

pub use aggregate::{aggregate_fedavg, aggregate_fedavg_weighted, aggregate_nonzero_avg};
pub use client::{train_client, ClientContext, ClientUpdate};
pub use flash::{flash_layer_budgets, flash_sensitivity_mask};

pub const DEFAULT_SAMPLING_SEEDS: [u64; 3] = [5378, 9421, 2035];
pub const DEFAULT_GLOBAL_SEED: u64 = 1337;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    SparsyFed,
    TopK,
    ZeroFl,
    Flash,
    NaivePowerprop,
    Dense,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SparsyFed => "sparsy_fed",
            Algorithm::TopK => "top_k",
            Algorithm::ZeroFl => "zero_fl",
            Algorithm::Flash => "flash",
            Algorithm::NaivePowerprop => "naive_powerprop",
            Algorithm::Dense => "dense",
        }
    }

    fn uses_nonzero_average(self) -> bool {
        matches!(self, Algorithm::ZeroFl | Algorithm::Flash)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    SampleCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityGroup {
    pub size: usize,
    pub target: f64,
}

/// One target for everyone, or contiguous client-id ranges with their own
/// targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityTarget {
    Uniform(f64),
    Groups(Vec<SparsityGroup>),
}

impl SparsityTarget {
    pub fn target_for(&self, client: usize) -> f64 {
        match self {
            SparsityTarget::Uniform(s) => *s,
            SparsityTarget::Groups(groups) => {
                let mut start = 0;
                for g in groups {
                    if client < start + g.size {
                        return g.target;
                    }
                    start += g.size;
                }
                groups.last().map_or(0.0, |g| g.target)
            }
        }
    }

    /// The target the server uses for model-level decisions (FLASH mask,
    /// terminal pruning): the uniform value or the lowest group target.
    pub fn server_target(&self) -> f64 {
        match self {
            SparsityTarget::Uniform(s) => *s,
            SparsityTarget::Groups(groups) => groups.iter().map(|g| g.target).fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub rounds: usize,
    pub clients_total: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub sparsity: SparsityTarget,
    pub algorithm: Algorithm,
    pub reparam: ReparamKind,
    pub activation_pruning: bool,
    pub lr_start: f64,
    pub lr_end: f64,
    pub sampling_seed: u64,
    pub global_seed: u64,
    pub weighting: Weighting,
    /// Keep the global mask every `iou_every` rounds for the IoU matrix.
    pub iou_every: usize,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            clients_total: 100,
            clients_per_round: 10,
            local_epochs: 1,
            batch_size: 16,
            sparsity: SparsityTarget::Uniform(0.9),
            algorithm: Algorithm::SparsyFed,
            reparam: ReparamKind::Powerprop { beta: 1.25 },
            activation_pruning: true,
            lr_start: 0.5,
            lr_end: 0.01,
            sampling_seed: DEFAULT_SAMPLING_SEEDS[0],
            global_seed: DEFAULT_GLOBAL_SEED,
            weighting: Weighting::Uniform,
            iou_every: 1,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients_total == 0 || self.clients_per_round == 0 {
            return Err(Error::config("client counts must be positive"));
        }
        if self.clients_per_round > self.clients_total {
            return Err(Error::config(format!(
                "clients_per_round {} exceeds clients_total {}",
                self.clients_per_round, self.clients_total
            )));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("local_epochs and batch_size must be at least 1"));
        }
        if self.iou_every == 0 {
            return Err(Error::config("iou_every must be at least 1"));
        }
        self.reparam.validate()?;
        LrSchedule::new(self.lr_start, self.lr_end, self.rounds.max(1))?;
        match &self.sparsity {
            SparsityTarget::Uniform(s) => check_sparsity(*s)?,
            SparsityTarget::Groups(groups) => {
                if groups.is_empty() {
                    return Err(Error::config("sparsity groups must not be empty"));
                }
                for g in groups {
                    check_sparsity(g.target)?;
                }
                let total: usize = groups.iter().map(|g| g.size).sum();
                if total != self.clients_total {
                    return Err(Error::config(format!(
                        "group sizes sum to {total}, expected clients_total {}",
                        self.clients_total
                    )));
                }
                if self.algorithm == Algorithm::NaivePowerprop {
                    return Err(Error::config(
                        "naive powerprop prunes once on the server and cannot use groups",
                    ));
                }
            }
        }
        Ok(())
    }

    fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(self.lr_start, self.lr_end, self.rounds.max(1))
    }

    /// Clients in sparsity groups receive the global model pruned to their
    /// own target, except in the first round where everyone starts dense.
    fn downlink_target(&self, client: usize, round: usize) -> Option<f64> {
        match (&self.sparsity, self.algorithm) {
            (_, Algorithm::Dense | Algorithm::NaivePowerprop) => None,
            (SparsityTarget::Groups(_), _) if round > 0 => Some(self.client_target(client)),
            _ => None,
        }
    }

    fn client_target(&self, client: usize) -> f64 {
        match self.algorithm {
            Algorithm::Dense | Algorithm::NaivePowerprop => 0.0,
            _ => self.sparsity.target_for(client),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive mix of several seed components into one.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// `count` distinct clients out of `population`, sorted, deterministic in
/// `(seed, round)`.
pub fn sample_clients(population: usize, count: usize, round: usize, seed: u64) -> Result<Vec<usize>> {
    if count > population {
        return Err(Error::config(format!("cannot sample {count} of {population} clients")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, round as u64]));
    let mut picked = rand::seq::index::sample(&mut rng, population, count).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Clone, Debug)]
pub struct FederationOutcome {
    pub initial: Model,
    pub final_model: Model,
    pub reports: Vec<RoundReport>,
    /// The fixed mask chosen after the first FLASH round.
    pub flash_mask: Option<SparseMask>,
}

pub fn run_federation(
    cfg: &FedConfig,
    initial: Model,
    train: &LabeledDataset,
    test: &LabeledDataset,
    partition: &ClientPartition,
) -> Result<FederationOutcome> {
    cfg.validate()?;
    if partition.num_clients() != cfg.clients_total {
        return Err(Error::config(format!(
            "partition has {} clients, config expects {}",
            partition.num_clients(),
            cfg.clients_total
        )));
    }
    let schedule = cfg.schedule()?;
    let eval_reparam = client::reparam_kind(cfg);
    let mut global = initial.clone();
    let mut reports = Vec::with_capacity(cfg.rounds);
    let mut flash_mask: Option<SparseMask> = None;
    let mut cumulative = 0.0;

    for t in 0..cfg.rounds {
        let eta = schedule.lr_at(t)?;
        let sampled = sample_clients(cfg.clients_total, cfg.clients_per_round, t, cfg.sampling_seed)?;
        let updates = sampled
            .par_iter()
            .map(|&c| {
                let ctx = ClientContext {
                    round: t + 1,
                    client_id: c,
                    target: cfg.client_target(c),
                    eta,
                    seed: derive_seed(&[cfg.global_seed, cfg.sampling_seed, t as u64, c as u64]),
                    fixed_mask: flash_mask.as_ref(),
                    downlink_target: cfg.downlink_target(c, t),
                };
                train_client(cfg, &global, train, &partition.clients[c], &ctx)
            })
            .collect::<Result<Vec<_>>>()?;

        let deltas: Vec<Vec<Tensor>> = updates.iter().map(|u| u.pseudo_gradient.clone()).collect();
        let bias_deltas: Vec<Vec<Tensor>> = updates.iter().map(|u| u.bias_delta.clone()).collect();
        let sample_weights: Vec<f64> = updates.iter().map(|u| u.num_samples as f64).collect();
        let mut weights = if cfg.algorithm.uses_nonzero_average() {
            aggregate_nonzero_avg(global.weights(), &deltas)?
        } else {
            match cfg.weighting {
                Weighting::Uniform => aggregate_fedavg(global.weights(), &deltas)?,
                Weighting::SampleCount => aggregate_fedavg_weighted(global.weights(), &deltas, &sample_weights)?,
            }
        };
        let biases = match cfg.weighting {
            Weighting::Uniform => aggregate_fedavg(global.biases(), &bias_deltas)?,
            Weighting::SampleCount => aggregate_fedavg_weighted(global.biases(), &bias_deltas, &sample_weights)?,
        };

        if cfg.algorithm == Algorithm::Flash && flash_mask.is_none() {
            let target = cfg.sparsity.server_target();
            let client_levels = updates
                .iter()
                .map(|u| Ok(topk_global(&u.payload, target)?.iter().map(layer_sparsity).collect()))
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let mask = flash_sensitivity_mask(&weights, &client_levels, target)?;
            mask.apply(&mut weights)?;
            flash_mask = Some(mask);
        }
        if cfg.algorithm == Algorithm::NaivePowerprop && t + 1 == cfg.rounds {
            weights = topk_global(&weights, cfg.sparsity.server_target())?;
        }

        let payloads: Vec<&[Tensor]> = updates.iter().map(|u| u.payload.as_slice()).collect();
        let received: Vec<usize> = updates.iter().map(|u| u.downlink_nnz).collect();
        let (downlink, uplink) = comm_cost(&received, &payloads);
        cumulative += downlink + uplink;
        let delta_refs: Vec<&[Tensor]> = deltas.iter().map(Vec::as_slice).collect();
        let movement = weight_movement(initial.weights(), global.weights(), &weights, &delta_refs)?;

        let mut next = global.clone();
        next.set_weights(weights)?;
        next.set_biases(biases)?;
        global = next;

        let sparsity = SparsityReport::of(global.weights());
        let accuracy = evaluate(&global, eval_reparam, test)?;
        let regrowth_mean = updates.iter().map(|u| u.regrowth as f64).sum::<f64>() / updates.len() as f64;
        reports.push(RoundReport {
            round: t + 1,
            test_accuracy: accuracy,
            global_sparsity: sparsity.global_sparsity,
            per_layer_sparsity: sparsity.per_layer_sparsity,
            downlink_nnz: downlink,
            uplink_nnz_mean: uplink,
            cumulative_comm_nnz: cumulative,
            mean_client_regrowth: regrowth_mean,
            mask: (t % cfg.iou_every == 0).then(|| SparseMask::of(global.weights())),
            global_l2_from_init: movement.global_l2,
            round_l2: movement.round_l2,
            round_cosine: movement.round_cos,
            client_cosine_mean: movement.client_cos_mean,
            clients: updates
                .iter()
                .map(|u| ClientRecord {
                    client_id: u.client_id,
                    target_sparsity: u.target_sparsity,
                    uplink_nnz: u.nnz,
                    regrowth: u.regrowth,
                })
                .collect(),
        });
        log::debug!(
            "{} round {}: acc {:.4} sparsity {:.4}",
            cfg.algorithm.name(),
            t + 1,
            accuracy,
            sparsity.global_sparsity
        );
    }
    Ok(FederationOutcome {
        initial,
        final_model: global,
        reports,
        flash_mask,
    })
}
