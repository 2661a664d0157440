//! TOML experiment configuration.
//!
//! Only `federation.rounds` and `federation.algorithm` are required; every
//! other key has a default. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{
    Algorithm, FedConfig, SparsityGroup, SparsityTarget, Weighting, DEFAULT_GLOBAL_SEED, DEFAULT_SAMPLING_SEEDS,
};
use crate::nn::Architecture;
use crate::reparam::ReparamKind;
use crate::sparsity::check_sparsity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub federation: FederationSection,
    #[serde(default)]
    pub model: Architecture,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    pub rounds: usize,
    pub algorithm: Algorithm,
    #[serde(default = "defaults::clients_total")]
    pub clients_total: usize,
    #[serde(default = "defaults::clients_per_round")]
    pub clients_per_round: usize,
    #[serde(default = "defaults::one")]
    pub local_epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::yes")]
    pub activation_pruning: bool,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default = "defaults::global_seed")]
    pub global_seed: u64,
    #[serde(default = "defaults::one")]
    pub iou_every: usize,
    #[serde(default)]
    pub reparam: ReparamKind,
    #[serde(default)]
    pub lr: LrSection,
    #[serde(default)]
    pub sparsity: SparsitySection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSection {
    pub start: f64,
    pub end: f64,
}

impl Default for LrSection {
    fn default() -> Self {
        Self { start: 0.5, end: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<SparsityGroup>>,
}

impl Default for SparsitySection {
    fn default() -> Self {
        Self {
            target: Some(0.9),
            groups: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DataSpec {
    Synthetic {
        #[serde(default = "defaults::classes")]
        classes: usize,
        #[serde(default = "defaults::dim")]
        dim: usize,
        #[serde(default = "defaults::per_class")]
        per_class: usize,
        #[serde(default = "defaults::margin")]
        margin: f64,
        /// Defaults to the federation's global seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
    },
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Synthetic {
            classes: defaults::classes(),
            dim: defaults::dim(),
            per_class: defaults::per_class(),
            margin: defaults::margin(),
            seed: None,
        }
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Mlp { hidden: vec![64, 64] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub alpha: f64,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

/// Optional sweep axes; an absent axis takes its single value from the base
/// configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<Algorithm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_pruning: Option<Vec<bool>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            sparsity: None,
            alpha: None,
            seeds: defaults::seeds(),
            algorithms: None,
            activation_pruning: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
        }
    }
}

mod defaults {
    use super::*;

    pub fn clients_total() -> usize {
        100
    }
    pub fn clients_per_round() -> usize {
        10
    }
    pub fn one() -> usize {
        1
    }
    pub fn batch_size() -> usize {
        16
    }
    pub fn yes() -> bool {
        true
    }
    pub fn global_seed() -> u64 {
        DEFAULT_GLOBAL_SEED
    }
    pub fn classes() -> usize {
        10
    }
    pub fn dim() -> usize {
        32
    }
    pub fn per_class() -> usize {
        500
    }
    pub fn margin() -> f64 {
        3.0
    }
    pub fn seeds() -> Vec<u64> {
        DEFAULT_SAMPLING_SEEDS.to_vec()
    }
}

/// One point of the sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCell {
    pub algorithm: Algorithm,
    /// `None` when the run uses per-group targets.
    pub sparsity: Option<f64>,
    pub alpha: f64,
    pub activation_pruning: bool,
    pub seed: u64,
}

impl RunCell {
    /// Directory name built from the axis values.
    pub fn dir_name(&self) -> String {
        let sparsity = self.sparsity.map_or_else(|| "groups".to_string(), |s| s.to_string());
        format!(
            "{}_s{}_a{}_act-{}_seed{}",
            self.algorithm.name(),
            sparsity,
            self.alpha,
            if self.activation_pruning { "on" } else { "off" },
            self.seed
        )
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_str(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

fn nonempty<T>(axis: &Option<Vec<T>>, key: &str) -> Result<()> {
    if axis.as_ref().is_some_and(Vec::is_empty) {
        return Err(Error::config(format!("sweep.{key} must not be empty")));
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        nonempty(&s.sparsity, "sparsity")?;
        nonempty(&s.alpha, "alpha")?;
        nonempty(&s.algorithms, "algorithms")?;
        nonempty(&s.activation_pruning, "activation_pruning")?;
        if s.seeds.is_empty() {
            return Err(Error::config("sweep.seeds must not be empty"));
        }
        let sp = &self.federation.sparsity;
        match (&sp.target, &sp.groups) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "federation.sparsity: set either target or groups, not both",
                ))
            }
            (None, None) => return Err(Error::config("federation.sparsity: target or groups is required")),
            (Some(t), None) => {
                check_sparsity(*t).map_err(|e| Error::config(format!("federation.sparsity.target: {e}")))?
            }
            (None, Some(_)) => {
                if s.sparsity.is_some() {
                    return Err(Error::config(
                        "sweep.sparsity cannot be combined with federation.sparsity.groups",
                    ));
                }
            }
        }
        for v in s.sparsity.iter().flatten() {
            check_sparsity(*v).map_err(|e| Error::config(format!("sweep.sparsity: {e}")))?;
        }
        for a in std::iter::once(&self.partition.alpha).chain(s.alpha.iter().flatten()) {
            if !(*a > 0.0 && a.is_finite()) {
                return Err(Error::config(format!("partition.alpha must be positive, got {a}")));
            }
        }
        if let DataSpec::Synthetic {
            classes,
            per_class,
            margin,
            dim,
            ..
        } = &self.data
        {
            if *classes < 2 || *per_class < 2 || *dim == 0 || !(*margin > 0.0 && margin.is_finite()) {
                return Err(Error::config(
                    "data: synthetic data needs classes >= 2, per_class >= 2, dim >= 1 and margin > 0",
                ));
            }
        }
        if let Architecture::Mlp { hidden } = &self.model {
            if hidden.contains(&0) {
                return Err(Error::config("model.hidden widths must be positive"));
            }
        }
        for cell in self.cells() {
            self.fed_config(&cell)
                .validate()
                .map_err(|e| Error::config(format!("run {}: {e}", cell.dir_name())))?;
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes, in a fixed order.
    pub fn cells(&self) -> Vec<RunCell> {
        let f = &self.federation;
        let algorithms = self.sweep.algorithms.clone().unwrap_or_else(|| vec![f.algorithm]);
        let sparsities: Vec<Option<f64>> = match &self.sweep.sparsity {
            Some(list) => list.iter().map(|s| Some(*s)).collect(),
            None => vec![f.sparsity.target],
        };
        let alphas = self.sweep.alpha.clone().unwrap_or_else(|| vec![self.partition.alpha]);
        let act = self
            .sweep
            .activation_pruning
            .clone()
            .unwrap_or_else(|| vec![f.activation_pruning]);
        let mut cells = Vec::new();
        for &algorithm in &algorithms {
            for &sparsity in &sparsities {
                for &alpha in &alphas {
                    for &activation_pruning in &act {
                        for &seed in &self.sweep.seeds {
                            cells.push(RunCell {
                                algorithm,
                                sparsity,
                                alpha,
                                activation_pruning,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn fed_config(&self, cell: &RunCell) -> FedConfig {
        let f = &self.federation;
        let sparsity = match (cell.sparsity, &f.sparsity.groups) {
            (Some(s), _) => SparsityTarget::Uniform(s),
            (None, Some(groups)) => SparsityTarget::Groups(groups.clone()),
            (None, None) => SparsityTarget::Uniform(0.0),
        };
        FedConfig {
            rounds: f.rounds,
            clients_total: f.clients_total,
            clients_per_round: f.clients_per_round,
            local_epochs: f.local_epochs,
            batch_size: f.batch_size,
            sparsity,
            algorithm: cell.algorithm,
            reparam: f.reparam,
            activation_pruning: cell.activation_pruning,
            lr_start: f.lr.start,
            lr_end: f.lr.end,
            sampling_seed: cell.seed,
            global_seed: f.global_seed,
            weighting: f.weighting,
            iou_every: f.iou_every,
        }
    }
}
