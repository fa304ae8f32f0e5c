//! Evaluation protocol: repeated-holdout location error in meters,
//! population dispersion, per-iteration log-loss learning curves, and
//! paired comparison of augmenter variants on identical splits.

use serde::{Deserialize, Serialize};

use crate::ann::cross_entropy_row;
use crate::boost::{self, BoostConfig, BoostLoss};
use crate::dataset::{split, FingerprintDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::grid::GridMap;
use crate::scalar::Scalar;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean Euclidean error in meters, one entry per repetition.
    pub per_rep_errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// FNV-1a over the split indices; equal hashes mean identical splits.
    pub split_hash: u64,
    /// Most frequent (true, predicted) misclassified cell pairs.
    pub top_confusions: Vec<(String, String, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearningCurve {
    /// log10 of the mean cross-entropy over repetitions, per iteration.
    pub mean_logloss: Vec<f64>,
    /// Std across repetitions of the per-repetition log10 loss.
    pub std_logloss: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub report: EvalReport,
}

/// Per-sample Euclidean distance between predicted and true cell centers.
pub fn location_error(
    pred: &[String],
    truth: &[String],
    grid: &GridMap,
) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::Data("label lists differ in length".into()));
    }
    pred.iter()
        .zip(truth)
        .map(|(p, t)| {
            let (px, py) = grid.cell_center(p)?;
            let (tx, ty) = grid.cell_center(t)?;
            Ok((px - tx).hypot(py - ty))
        })
        .collect()
}

/// Mean and population standard deviation, σ = sqrt(Σ(x_i−μ)²/n).
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Data("mean_std of an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

fn fnv1a(bytes: impl Iterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn split_hash(parts: &[(Vec<usize>, Vec<usize>)]) -> u64 {
    fnv1a(
        parts
            .iter()
            .flat_map(|(tr, te)| tr.iter().chain(te.iter()))
            .flat_map(|&i| (i as u64).to_le_bytes()),
    )
}

/// Train one model per repetition and report held-out location error.
pub fn evaluate<S: Scalar>(
    ds: &FingerprintDataset<S>,
    grid: &GridMap,
    cfg: &BoostConfig,
    plan: &SplitPlan,
) -> Result<EvalReport> {
    let parts = split(ds.n_samples(), plan)?;
    let hash = split_hash(&parts);
    let mut per_rep = Vec::with_capacity(parts.len());
    let mut confusions: std::collections::HashMap<(String, String), usize> =
        std::collections::HashMap::new();
    for (train_idx, test_idx) in &parts {
        let train = ds.subset(train_idx);
        let test = ds.subset(test_idx);
        let model = boost::fit(&train, cfg)?;
        let pred = model.predict_label(&test.rssi)?;
        let errors = location_error(&pred, &test.labels, grid)?;
        per_rep.push(mean_std(&errors)?.0);
        for (p, t) in pred.iter().zip(&test.labels) {
            if p != t {
                *confusions.entry((t.clone(), p.clone())).or_insert(0) += 1;
            }
        }
    }
    let (mean, std) = mean_std(&per_rep)?;
    let mut top: Vec<(String, String, usize)> = confusions
        .into_iter()
        .map(|((t, p), c)| (t, p, c))
        .collect();
    top.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| (&a.0, &a.1).cmp(&(&b.0, &b.1))));
    top.truncate(5);
    Ok(EvalReport {
        per_rep_errors: per_rep,
        mean,
        std,
        split_hash: hash,
        top_confusions: top,
    })
}

/// Held-out cross-entropy after each boosting iteration, aggregated over
/// repetitions on the log10 scale.
pub fn learning_curve<S: Scalar>(
    ds: &FingerprintDataset<S>,
    cfg: &BoostConfig,
    plan: &SplitPlan,
) -> Result<LearningCurve> {
    if cfg.loss != BoostLoss::MulticlassLogLoss {
        return Err(Error::Config(
            "learning curves require the multiclass-log-loss".into(),
        ));
    }
    let parts = split(ds.n_samples(), plan)?;
    // rep_losses[rep][iteration] = mean test cross-entropy
    let mut rep_losses: Vec<Vec<f64>> = Vec::with_capacity(parts.len());
    for (train_idx, test_idx) in &parts {
        let train = ds.subset(train_idx);
        let test = ds.subset(test_idx);
        let model = boost::fit(&train, cfg)?;
        let classes: Vec<Option<usize>> = test
            .labels
            .iter()
            .map(|l| model.labels.binary_search(l).ok())
            .collect();
        let matched = classes.iter().flatten().count();
        if matched == 0 {
            return Err(Error::Data(
                "no test label appears in the training classes".into(),
            ));
        }
        let staged = model.staged_predict(&test.rssi)?;
        let losses = staged
            .iter()
            .map(|scores| {
                let total: f64 = classes
                    .iter()
                    .enumerate()
                    .filter_map(|(r, c)| c.map(|c| cross_entropy_row(scores.row(r), c)))
                    .sum();
                total / matched as f64
            })
            .collect();
        rep_losses.push(losses);
    }
    let t = cfg.n_stages;
    let reps = rep_losses.len() as f64;
    let mut mean_logloss = Vec::with_capacity(t);
    let mut std_logloss = Vec::with_capacity(t);
    for it in 0..t {
        let mean_loss: f64 = rep_losses.iter().map(|r| r[it]).sum::<f64>() / reps;
        mean_logloss.push(mean_loss.log10());
        let logs: Vec<f64> = rep_losses.iter().map(|r| r[it].log10()).collect();
        std_logloss.push(mean_std(&logs)?.1);
    }
    Ok(LearningCurve {
        mean_logloss,
        std_logloss,
    })
}

/// Evaluate several configurations on identical splits, ranked by mean
/// error (ascending).
pub fn compare<S: Scalar>(
    ds: &FingerprintDataset<S>,
    grid: &GridMap,
    configs: &[(String, BoostConfig)],
    plan: &SplitPlan,
) -> Result<Vec<ComparisonRow>> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configs".into()));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (name, cfg) in configs {
        rows.push(ComparisonRow {
            name: name.clone(),
            report: evaluate(ds, grid, cfg, plan)?,
        });
    }
    let hash = rows[0].report.split_hash;
    debug_assert!(rows.iter().all(|r| r.report.split_hash == hash));
    rows.sort_by(|a, b| {
        a.report
            .mean
            .partial_cmp(&b.report.mean)
            .unwrap()
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(rows)
}
