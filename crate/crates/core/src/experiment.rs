//! Sweep execution and result files.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DataSpec, ExperimentSpec, RunCell};
use crate::data::{lda_partition, load_csv, make_synthetic, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::federation::{run_federation, FedConfig, FederationOutcome};
use crate::metrics::{write_iou_csv, write_layer_sparsity_csv, write_rounds_csv};
use crate::nn::Model;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedProvenance {
    pub sampling: u64,
    pub global: u64,
    pub data: u64,
    pub partition: u64,
    pub model_init: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinalMetrics {
    pub round: usize,
    pub test_accuracy: f64,
    pub global_sparsity: f64,
    pub cumulative_comm_nnz: f64,
    pub mean_client_regrowth: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary<'a> {
    pub config: &'a ExperimentSpec,
    pub run: &'a RunCell,
    pub resolved: &'a FedConfig,
    pub seeds: SeedProvenance,
    #[serde(rename = "final")]
    pub final_metrics: Option<FinalMetrics>,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub cell: RunCell,
    pub result: std::result::Result<Option<FinalMetrics>, String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunRecord>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }
}

fn data_seed(spec: &ExperimentSpec) -> u64 {
    match &spec.data {
        DataSpec::Synthetic { seed, .. } => seed.unwrap_or(spec.federation.global_seed),
        DataSpec::Csv { .. } => spec.federation.global_seed,
    }
}

/// Train and test splits for the experiment's data section.
pub fn load_data(spec: &ExperimentSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    match &spec.data {
        DataSpec::Synthetic {
            classes,
            dim,
            per_class,
            margin,
            ..
        } => make_synthetic(*classes, *dim, *per_class, *margin, data_seed(spec)),
        DataSpec::Csv { train, test } => {
            let tr = load_csv(train, Split::Train)?;
            let te = load_csv(test, Split::Test)?;
            if tr.dim() != te.dim() {
                return Err(Error::Data(format!(
                    "train has {} features, test has {}",
                    tr.dim(),
                    te.dim()
                )));
            }
            let classes = tr.classes().max(te.classes());
            Ok((
                LabeledDataset::new(tr.inputs().clone(), tr.labels().to_vec(), classes, Split::Train)?,
                LabeledDataset::new(te.inputs().clone(), te.labels().to_vec(), classes, Split::Test)?,
            ))
        }
    }
}

/// Execute one sweep cell.
pub fn run_cell(
    spec: &ExperimentSpec,
    cell: &RunCell,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<FederationOutcome> {
    let cfg = spec.fed_config(cell);
    let seed = spec.federation.global_seed;
    let partition = lda_partition(train.labels(), cfg.clients_total, cell.alpha, seed)?;
    let layers = spec.model.layers(train.dim(), train.classes())?;
    let initial = Model::new(layers, seed)?;
    run_federation(&cfg, initial, train, test, &partition)
}

fn final_metrics(outcome: &FederationOutcome) -> Option<FinalMetrics> {
    outcome.reports.last().map(|r| FinalMetrics {
        round: r.round,
        test_accuracy: r.test_accuracy,
        global_sparsity: r.global_sparsity,
        cumulative_comm_nnz: r.cumulative_comm_nnz,
        mean_client_regrowth: r.mean_client_regrowth,
    })
}

fn write_run(
    dir: &Path,
    spec: &ExperimentSpec,
    cell: &RunCell,
    outcome: &FederationOutcome,
) -> Result<Option<FinalMetrics>> {
    fs::create_dir_all(dir)?;
    write_rounds_csv(&dir.join("rounds.csv"), &outcome.reports)?;
    write_iou_csv(&dir.join("iou_matrix.csv"), &outcome.reports)?;
    write_layer_sparsity_csv(&dir.join("layer_sparsity.csv"), &outcome.reports)?;
    let resolved = spec.fed_config(cell);
    let global = spec.federation.global_seed;
    let summary = RunSummary {
        config: spec,
        run: cell,
        resolved: &resolved,
        seeds: SeedProvenance {
            sampling: cell.seed,
            global,
            data: data_seed(spec),
            partition: global,
            model_init: global,
        },
        final_metrics: final_metrics(outcome),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    Ok(summary.final_metrics)
}

/// Run every cell, write per-run outputs under `out`, then `summary.csv`.
/// `jobs` caps the worker threads shared by runs and clients.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path, jobs: Option<usize>) -> Result<ExperimentOutcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::usage(e.to_string()))?;
    let (train, test) = load_data(spec)?;
    fs::create_dir_all(out)?;
    let cells = spec.cells();
    let runs = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let dir = out.join(cell.dir_name());
                let result = run_cell(spec, cell, &train, &test)
                    .and_then(|outcome| write_run(&dir, spec, cell, &outcome))
                    .map_err(|e| {
                        log::error!("run {} failed: {e}", cell.dir_name());
                        let _ =
                            fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("error.txt"), format!("{e}\n")));
                        e.to_string()
                    });
                RunRecord {
                    cell: cell.clone(),
                    result,
                }
            })
            .collect::<Vec<_>>()
    });
    let outcome = ExperimentOutcome { runs };
    write_summary_csv(&out.join("summary.csv"), &outcome)?;
    Ok(outcome)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Final accuracy mean ± sample std across seeds, one row per cell.
pub fn write_summary_csv(path: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    type Key = (String, String, String, bool);
    let mut groups: Vec<(Key, Vec<&RunRecord>)> = Vec::new();
    for run in &outcome.runs {
        let c = &run.cell;
        let key = (
            c.algorithm.name().to_string(),
            c.sparsity.map_or_else(|| "groups".into(), |s| s.to_string()),
            c.alpha.to_string(),
            c.activation_pruning,
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(run),
            None => groups.push((key, vec![run])),
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm",
        "sparsity",
        "alpha",
        "activation_pruning",
        "runs",
        "failed",
        "accuracy_mean",
        "accuracy_std",
        "global_sparsity_mean",
    ])?;
    for ((alg, sparsity, alpha, act), members) in groups {
        let finals: Vec<&FinalMetrics> = members
            .iter()
            .filter_map(|r| r.result.as_ref().ok().and_then(Option::as_ref))
            .collect();
        let failed = members.iter().filter(|r| r.result.is_err()).count();
        let acc: Vec<f64> = finals.iter().map(|f| f.test_accuracy).collect();
        let sp: Vec<f64> = finals.iter().map(|f| f.global_sparsity).collect();
        let (acc_mean, acc_std) = mean_std(&acc);
        let (sp_mean, _) = mean_std(&sp);
        w.write_record([
            alg,
            sparsity,
            alpha,
            act.to_string(),
            members.len().to_string(),
            failed.to_string(),
            acc_mean.to_string(),
            acc_std.to_string(),
            sp_mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2.0_f64.sqrt()).abs() < 1e-15);
    }
}
