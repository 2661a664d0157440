//! Per-round measurements and their CSV serialization.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::reparam::{Reparam, ReparamKind};
use crate::sparsity::{mask_iou, SparseMask};
use crate::tensor::{flatten, total_nnz, Tensor};

const EVAL_CHUNK: usize = 512;

pub const ROUNDS_HEADER: [&str; 11] = [
    "round",
    "test_accuracy",
    "global_sparsity",
    "downlink_nnz",
    "uplink_nnz_mean",
    "cumulative_comm_nnz",
    "mean_client_regrowth",
    "global_l2_from_init",
    "round_l2",
    "round_cosine",
    "client_cosine_mean",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub client_id: usize,
    pub target_sparsity: f64,
    pub uplink_nnz: usize,
    pub regrowth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    /// 1-based round index.
    pub round: usize,
    pub test_accuracy: f64,
    pub global_sparsity: f64,
    pub per_layer_sparsity: Vec<f64>,
    /// Mean nonzeros of the models the sampled clients received.
    pub downlink_nnz: f64,
    pub uplink_nnz_mean: f64,
    pub cumulative_comm_nnz: f64,
    pub mean_client_regrowth: f64,
    /// Support of the global model after this round; kept every few rounds.
    pub mask: Option<SparseMask>,
    pub global_l2_from_init: f64,
    pub round_l2: f64,
    pub round_cosine: f64,
    pub client_cosine_mean: f64,
    pub clients: Vec<ClientRecord>,
}

/// `(downlink, uplink)`: mean nonzeros of the models the clients received
/// and mean nonzeros of the payloads they sent back.
pub fn comm_cost(received_nnz: &[usize], payloads: &[&[Tensor]]) -> (f64, f64) {
    if payloads.is_empty() || received_nnz.is_empty() {
        return (0.0, 0.0);
    }
    let down: usize = received_nnz.iter().sum();
    let up: usize = payloads.iter().map(|p| total_nnz(p)).sum();
    (
        down as f64 / received_nnz.len() as f64,
        up as f64 / payloads.len() as f64,
    )
}

pub fn iou_matrix(masks: &[SparseMask]) -> Result<Vec<Vec<f64>>> {
    let n = masks.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = mask_iou(&masks[i], &masks[j])?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Cosine similarity; zero when either vector is all-zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        log::warn!("cosine with a zero vector, reporting 0");
        return 0.0;
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightMovement {
    pub global_l2: f64,
    pub round_l2: f64,
    pub round_cos: f64,
    pub client_cos_mean: f64,
}

/// Distances and cosines over the flattened weights (biases excluded).
pub fn weight_movement(
    initial: &[Tensor],
    current: &[Tensor],
    next: &[Tensor],
    client_updates: &[&[Tensor]],
) -> Result<WeightMovement> {
    let (w0, wt, wt1) = (flatten(initial), flatten(current), flatten(next));
    if w0.len() != wt.len() || wt.len() != wt1.len() {
        return Err(Error::shape("weight sets differ in size"));
    }
    let updates: Vec<Vec<f64>> = client_updates.iter().map(|u| flatten(u)).collect();
    if updates.iter().any(|u| u.len() != wt.len()) {
        return Err(Error::shape("client update size differs from the model"));
    }
    let mut pair_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..updates.len() {
        for j in i + 1..updates.len() {
            pair_sum += cosine(&updates[i], &updates[j]);
            pairs += 1;
        }
    }
    Ok(WeightMovement {
        global_l2: l2_distance(&wt1, &w0),
        round_l2: l2_distance(&wt1, &wt),
        round_cos: cosine(&wt, &wt1),
        client_cos_mean: if pairs == 0 { 0.0 } else { pair_sum / pairs as f64 },
    })
}

/// Argmax accuracy; ties go to the lowest class index.
pub fn evaluate(model: &Model, reparam: ReparamKind, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    let mut reparam = Reparam::new(reparam);
    let classes = model.num_classes();
    let all: Vec<usize> = (0..test.len()).collect();
    let mut correct = 0usize;
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, y) = test.gather(chunk)?;
        let logits = model.predict(&mut reparam, &x)?;
        for (row, &label) in logits.data().chunks(classes).zip(&y) {
            let mut best = 0;
            for (c, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = c;
                }
            }
            correct += (best == label) as usize;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

pub fn write_rounds_csv(path: &Path, reports: &[RoundReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ROUNDS_HEADER)?;
    for r in reports {
        w.write_record([
            r.round.to_string(),
            r.test_accuracy.to_string(),
            r.global_sparsity.to_string(),
            r.downlink_nnz.to_string(),
            r.uplink_nnz_mean.to_string(),
            r.cumulative_comm_nnz.to_string(),
            r.mean_client_regrowth.to_string(),
            r.global_l2_from_init.to_string(),
            r.round_l2.to_string(),
            r.round_cosine.to_string(),
            r.client_cosine_mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pairwise IoU of the retained masks, no header.
pub fn write_iou_csv(path: &Path, reports: &[RoundReport]) -> Result<()> {
    let masks: Vec<SparseMask> = reports.iter().filter_map(|r| r.mask.clone()).collect();
    let matrix = iou_matrix(&masks)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in matrix {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_layer_sparsity_csv(path: &Path, reports: &[RoundReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let layers = reports.first().map_or(0, |r| r.per_layer_sparsity.len());
    let mut header = vec!["round".to_string()];
    header.extend((0..layers).map(|l| format!("layer_{l}")));
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.round.to_string()];
        row.extend(r.per_layer_sparsity.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec())
    }

    #[test]
    fn comm_cost_arithmetic() {
        let dense = vec![t(&vec![1.0; 1000])];
        let mut sparse = vec![0.0; 1000];
        sparse[..50].fill(2.0);
        let sparse = vec![t(&sparse)];
        let n = total_nnz(&dense);
        assert_eq!(comm_cost(&[n, n], &[&sparse, &sparse]), (1000.0, 50.0));
        assert_eq!(comm_cost(&[50, 50], &[&sparse, &sparse]), (50.0, 50.0));
        let zero = vec![t(&[0.0; 1000])];
        assert_eq!(comm_cost(&[n], &[&zero]).1, 0.0);
    }

    #[test]
    fn iou_matrix_properties() {
        let a = SparseMask::of(&[t(&[1.0, 0.0, 1.0])]);
        let b = SparseMask::of(&[t(&[1.0, 1.0, 0.0])]);
        let m = iou_matrix(&[a.clone(), b, a.clone()]).unwrap();
        assert_eq!(m[0][0], 1.0);
        assert_eq!(m[0][1], 1.0 / 3.0);
        assert_eq!(m[0][1], m[1][0]);
        assert_eq!(m[0][2], 1.0);
    }

    #[test]
    fn movement_examples() {
        let w = vec![t(&[1.0, 2.0])];
        let mv = weight_movement(&w, &w, &w, &[&[t(&[1.0, 0.0])], &[t(&[0.0, 3.0])]]).unwrap();
        assert_eq!(mv.round_l2, 0.0);
        assert_eq!(mv.round_cos, 1.0);
        assert_eq!(mv.client_cos_mean, 0.0);
        let same = [t(&[0.5, -1.0])];
        let mv = weight_movement(&w, &w, &w, &[&same, &same]).unwrap();
        assert!((mv.client_cos_mean - 1.0).abs() < 1e-15);
        let zero = [t(&[0.0, 0.0])];
        assert_eq!(
            weight_movement(&w, &w, &w, &[&same, &zero]).unwrap().client_cos_mean,
            0.0
        );
    }

    #[test]
    fn evaluate_ties_go_to_class_zero() {
        let layers = vec![LayerSpec::dense(2, 3, Activation::None)];
        let m = Model::from_parts(layers, vec![Tensor::zeros(&[2, 3])], vec![Tensor::zeros(&[3])]).unwrap();
        let x = Tensor::new(vec![4, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let test = LabeledDataset::new(x, vec![0, 0, 1, 2], 3, crate::data::Split::Test).unwrap();
        assert_eq!(evaluate(&m, ReparamKind::Identity, &test).unwrap(), 0.5);
    }
}
