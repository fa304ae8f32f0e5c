//! Stage-wise additive boosting with scheduled feature-augmenter refreshes.
//! Every `refresh_period` stages the augmenter is refitted (the ANN variant
//! warm-starts from its previous weights); each stage fits one regression
//! tree per class to the negative loss gradient and applies a shared,
//! line-searched stage weight.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ann::{cross_entropy_row, softmax_rows};
use crate::augment::{
    fit_augmenter, AnnAugmentConfig, AugTargets, Augmenter, AugmenterKind,
};
use crate::dataset::FingerprintDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tree::{RegressionTree, TreeConfig};

pub const MODEL_VERSION: &str = "augboost-model/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoostLoss {
    MulticlassLogLoss,
    Mse,
}

/// Which targets the ANN augmenter trains against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnTargetMode {
    /// Softmax cross-entropy against the true cell labels (default).
    Labels,
    /// Linear MSE against the current pseudo-residual vectors.
    Residuals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchConfig {
    pub enabled: bool,
    pub rho_max: f64,
    pub iterations: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            enabled: true,
            rho_max: 10.0,
            iterations: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    /// T, the number of boosting stages.
    pub n_stages: usize,
    /// c_BA, the augmenter refresh period in stages.
    pub refresh_period: usize,
    /// J, the number of random feature subsets.
    pub n_subsets: usize,
    pub augmenter: AugmenterKind,
    /// Concatenate original features with the augmented block.
    pub concat_original: bool,
    pub tree: TreeConfig,
    pub loss: BoostLoss,
    /// Shrinkage ν applied to every line-searched stage weight.
    pub shrinkage: f64,
    pub line_search: LineSearchConfig,
    pub ann: AnnAugmentConfig,
    pub ann_target_mode: AnnTargetMode,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_stages: 150,
            refresh_period: 15,
            n_subsets: 3,
            augmenter: AugmenterKind::Ann,
            concat_original: true,
            tree: TreeConfig::default(),
            loss: BoostLoss::MulticlassLogLoss,
            shrinkage: 1.0,
            line_search: LineSearchConfig::default(),
            ann: AnnAugmentConfig::default(),
            ann_target_mode: AnnTargetMode::Labels,
            seed: 42,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 || self.refresh_period == 0 || self.n_subsets == 0 {
            return Err(Error::Config(
                "n_stages, refresh_period, and n_subsets must be positive".into(),
            ));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config("shrinkage must lie in (0, 1]".into()));
        }
        self.tree.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage<S> {
    pub augmenter_index: usize,
    pub trees: Vec<RegressionTree<S>>,
    pub rho: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostModel<S> {
    pub version: String,
    pub config: BoostConfig,
    /// Sorted class labels; scores column k belongs to labels[k].
    pub labels: Vec<String>,
    pub init_scores: Vec<S>,
    pub n_features: usize,
    pub augmenters: Vec<Augmenter<S>>,
    pub stages: Vec<Stage<S>>,
    /// Mean training loss after each stage.
    pub training_loss: Vec<f64>,
}

/// Augmenter index used by each stage: stage t (1-based) refreshes iff
/// t−1 is divisible by the period, so it uses augmenter ⌊(t−1)/period⌋.
pub fn augmenter_schedule(n_stages: usize, refresh_period: usize) -> Vec<usize> {
    (0..n_stages).map(|t0| t0 / refresh_period).collect()
}

/// F_0 under multiclass log-loss: log of the empirical class priors.
pub fn init_scores_logloss<S: Scalar>(classes: &[usize], k: usize) -> Result<Vec<S>> {
    if classes.is_empty() {
        return Err(Error::Data("cannot initialize scores on empty data".into()));
    }
    let mut counts = vec![0usize; k];
    for &c in classes {
        counts[c] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Data("every class needs at least one sample".into()));
    }
    let n = classes.len() as f64;
    Ok(counts
        .iter()
        .map(|&c| S::from_f64((c as f64 / n).ln()))
        .collect())
}

/// Negative gradient of the total multiclass log-loss: onehot − softmax.
pub fn negative_gradient_logloss<S: Scalar>(scores: &Matrix<S>, classes: &[usize]) -> Matrix<S> {
    let mut grad = softmax_rows(scores);
    for v in grad.data_mut() {
        *v = -*v;
    }
    for (r, &c) in classes.iter().enumerate() {
        let v = grad.get(r, c);
        grad.set(r, c, v + S::one());
    }
    grad
}

/// Sum of per-sample cross-entropies.
pub fn total_logloss<S: Scalar>(scores: &Matrix<S>, classes: &[usize]) -> f64 {
    classes
        .iter()
        .enumerate()
        .map(|(r, &c)| cross_entropy_row(scores.row(r), c))
        .sum()
}

/// Bracketed golden-section minimization on [lo, hi]; returns the best
/// evaluated point (endpoints included).
pub fn golden_section_min<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    iterations: usize,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut best = (a, f(a));
    let fb = f(b);
    if fb < best.1 {
        best = (b, fb);
    }
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iterations {
        if fc < best.1 {
            best = (c, fc);
        }
        if fd < best.1 {
            best = (d, fd);
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < best.1 {
        best = (c, fc);
    }
    if fd < best.1 {
        best = (d, fd);
    }
    best
}

/// One-dimensional stage-weight search. The returned ρ never makes the
/// total loss worse than ρ = 0.
pub fn line_search_rho<F: Fn(f64) -> f64>(total_loss_at: F, cfg: &LineSearchConfig) -> Result<f64> {
    if !cfg.enabled {
        return Ok(1.0);
    }
    let at_zero = total_loss_at(0.0);
    if !at_zero.is_finite() {
        return Err(Error::Training("non-finite loss at rho = 0".into()));
    }
    let (rho, at_rho) = golden_section_min(&total_loss_at, 0.0, cfg.rho_max, cfg.iterations);
    if !at_rho.is_finite() {
        return Err(Error::Training("non-finite loss during line search".into()));
    }
    Ok(if at_rho < at_zero { rho } else { 0.0 })
}

/// F_0 under MSE: the target mean.
pub fn init_score_mse<S: Scalar>(targets: &[S]) -> Result<S> {
    if targets.is_empty() {
        return Err(Error::Data("cannot initialize scores on empty data".into()));
    }
    let sum: f64 = targets.iter().map(|t| (*t).to_f64()).sum();
    Ok(S::from_f64(sum / targets.len() as f64))
}

/// Negative gradient of the total squared error (up to the constant 2):
/// the plain residual t_i − F(R_i).
pub fn negative_gradient_mse<S: Scalar>(predictions: &[S], targets: &[S]) -> Vec<S> {
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| t - p)
        .collect()
}

pub fn total_mse<S: Scalar>(predictions: &[S], targets: &[S]) -> f64 {
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let d = (t - p).to_f64();
            d * d
        })
        .sum()
}

/// Squared-error boosting on continuous targets; one tree per stage. The
/// returned model has an empty label list and a single score column.
pub fn fit_regression<S: Scalar>(
    x: &Matrix<S>,
    targets: &[S],
    cfg: &BoostConfig,
) -> Result<BoostModel<S>> {
    cfg.validate()?;
    if cfg.loss != BoostLoss::Mse {
        return Err(Error::Config("fit_regression requires the mse loss".into()));
    }
    if x.rows() != targets.len() {
        return Err(Error::Data("targets length mismatch".into()));
    }
    let init = init_score_mse(targets)?;
    let mut preds = vec![init; x.rows()];
    let schedule = augmenter_schedule(cfg.n_stages, cfg.refresh_period);
    let mut augmenters: Vec<Augmenter<S>> = Vec::new();
    let mut x_aug: Option<Matrix<S>> = None;
    let mut stages = Vec::with_capacity(cfg.n_stages);
    let mut training_loss = Vec::with_capacity(cfg.n_stages);
    let nu = cfg.shrinkage;

    for t0 in 0..cfg.n_stages {
        let grad = negative_gradient_mse(&preds, targets);
        if schedule[t0] == augmenters.len() {
            let refresh_idx = augmenters.len();
            let grad_matrix = Matrix::from_vec(grad.len(), 1, grad.clone());
            let mut rng = aug_rng(cfg.seed, refresh_idx);
            // residual targets regardless of mode: there are no class labels
            let aug = fit_augmenter(
                cfg.augmenter,
                x,
                AugTargets::Residuals(&grad_matrix),
                cfg.n_subsets,
                t0 + 1,
                cfg.concat_original,
                &cfg.ann,
                augmenters.last(),
                &mut rng,
            )
            .map_err(|e| Error::Training(format!("stage {}: {e}", t0 + 1)))?;
            x_aug = Some(aug.transform(x)?);
            augmenters.push(aug);
        }
        let xa = x_aug.as_ref().unwrap();
        let tree = RegressionTree::fit(xa, &grad, &cfg.tree)
            .map_err(|e| Error::Training(format!("stage {}: {e}", t0 + 1)))?;
        let d = tree.predict(xa)?;
        let rho = line_search_rho(
            |rho| {
                let step = S::from_f64(nu * rho);
                let trial: Vec<S> = preds
                    .iter()
                    .zip(&d)
                    .map(|(&p, &dv)| p + step * dv)
                    .collect();
                total_mse(&trial, targets)
            },
            &cfg.line_search,
        )
        .map_err(|e| Error::Training(format!("stage {}: {e}", t0 + 1)))?;
        let step = S::from_f64(nu * rho);
        for (p, &dv) in preds.iter_mut().zip(&d) {
            *p = *p + step * dv;
        }
        training_loss.push(total_mse(&preds, targets) / x.rows() as f64);
        stages.push(Stage {
            augmenter_index: schedule[t0],
            trees: vec![tree],
            rho: S::from_f64(rho),
        });
    }

    Ok(BoostModel {
        version: MODEL_VERSION.to_string(),
        config: cfg.clone(),
        labels: Vec::new(),
        init_scores: vec![init],
        n_features: x.cols(),
        augmenters,
        stages,
        training_loss,
    })
}

fn aug_rng(seed: u64, refresh_idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 + refresh_idx as u64);
    rng
}

fn class_indices<S: Scalar>(ds: &FingerprintDataset<S>) -> (Vec<String>, Vec<usize>) {
    let labels = ds.distinct_labels();
    let classes = ds
        .labels
        .iter()
        .map(|l| labels.binary_search(l).expect("label present"))
        .collect();
    (labels, classes)
}

fn stage_tree_predictions<S: Scalar>(
    trees: &[RegressionTree<S>],
    x: &Matrix<S>,
) -> Result<Matrix<S>> {
    let mut out = Matrix::zeros(x.rows(), trees.len());
    for (k, tree) in trees.iter().enumerate() {
        for (r, v) in tree.predict(x)?.into_iter().enumerate() {
            out.set(r, k, v);
        }
    }
    Ok(out)
}

/// The full training loop with scheduled augmentation.
pub fn fit<S: Scalar>(ds: &FingerprintDataset<S>, cfg: &BoostConfig) -> Result<BoostModel<S>> {
    cfg.validate()?;
    if cfg.loss != BoostLoss::MulticlassLogLoss {
        return Err(Error::Config(
            "fit on a fingerprint dataset requires multiclass-log-loss".into(),
        ));
    }
    if ds.missing_mask.iter().any(|&b| b) {
        return Err(Error::Data("dataset has unimputed missing readings".into()));
    }
    let (labels, classes) = class_indices(ds);
    let k = labels.len();
    if k < 2 {
        return Err(Error::Data("need at least two classes".into()));
    }
    let x = &ds.rssi;
    let n = x.rows();
    let m = x.cols();
    let init = init_scores_logloss::<S>(&classes, k)?;
    let mut scores = Matrix::zeros(n, k);
    for r in 0..n {
        scores.row_mut(r).copy_from_slice(&init);
    }

    let schedule = augmenter_schedule(cfg.n_stages, cfg.refresh_period);
    let mut augmenters: Vec<Augmenter<S>> = Vec::new();
    let mut x_aug: Option<Matrix<S>> = None;
    let mut stages = Vec::with_capacity(cfg.n_stages);
    let mut training_loss = Vec::with_capacity(cfg.n_stages);
    let nu = cfg.shrinkage;

    for t0 in 0..cfg.n_stages {
        let grad = negative_gradient_logloss(&scores, &classes);
        if schedule[t0] == augmenters.len() {
            let refresh_idx = augmenters.len();
            let targets = match cfg.ann_target_mode {
                AnnTargetMode::Labels => AugTargets::Labels(&classes, k),
                AnnTargetMode::Residuals => AugTargets::Residuals(&grad),
            };
            let mut rng = aug_rng(cfg.seed, refresh_idx);
            let aug = fit_augmenter(
                cfg.augmenter,
                x,
                targets,
                cfg.n_subsets,
                t0 + 1,
                cfg.concat_original,
                &cfg.ann,
                augmenters.last(),
                &mut rng,
            )
            .map_err(|e| Error::Training(format!("stage {}: {e}", t0 + 1)))?;
            x_aug = Some(aug.transform(x)?);
            augmenters.push(aug);
        }
        let xa = x_aug.as_ref().unwrap();

        let mut trees = Vec::with_capacity(k);
        for class in 0..k {
            let targets = grad.column(class);
            trees.push(
                RegressionTree::fit(xa, &targets, &cfg.tree)
                    .map_err(|e| Error::Training(format!("stage {} class {class}: {e}", t0 + 1)))?,
            );
        }
        let d = stage_tree_predictions(&trees, xa)?;

        let rho = line_search_rho(
            |rho| {
                let mut trial = scores.clone();
                let step = S::from_f64(nu * rho);
                for (tv, &dv) in trial.data_mut().iter_mut().zip(d.data()) {
                    *tv = *tv + step * dv;
                }
                total_logloss(&trial, &classes)
            },
            &cfg.line_search,
        )
        .map_err(|e| Error::Training(format!("stage {}: {e}", t0 + 1)))?;

        let step = S::from_f64(nu * rho);
        for (sv, &dv) in scores.data_mut().iter_mut().zip(d.data()) {
            *sv = *sv + step * dv;
        }
        training_loss.push(total_logloss(&scores, &classes) / n as f64);
        stages.push(Stage {
            augmenter_index: schedule[t0],
            trees,
            rho: S::from_f64(rho),
        });
    }

    Ok(BoostModel {
        version: MODEL_VERSION.to_string(),
        config: cfg.clone(),
        labels,
        init_scores: init,
        n_features: m,
        augmenters,
        stages,
        training_loss,
    })
}

/// Reference gradient-boosting path with no augmentation layer: trees are
/// fitted on the raw features directly. Kept deliberately separate from
/// `fit` as an independent route; with the identity augmenter and ν = 1 the
/// two produce identical models.
pub fn fit_plain_gbdt<S: Scalar>(
    ds: &FingerprintDataset<S>,
    cfg: &BoostConfig,
) -> Result<BoostModel<S>> {
    cfg.validate()?;
    if ds.missing_mask.iter().any(|&b| b) {
        return Err(Error::Data("dataset has unimputed missing readings".into()));
    }
    let (labels, classes) = class_indices(ds);
    let k = labels.len();
    if k < 2 {
        return Err(Error::Data("need at least two classes".into()));
    }
    let x = &ds.rssi;
    let n = x.rows();
    let init = init_scores_logloss::<S>(&classes, k)?;
    let mut scores = Matrix::zeros(n, k);
    for r in 0..n {
        scores.row_mut(r).copy_from_slice(&init);
    }

    let schedule = augmenter_schedule(cfg.n_stages, cfg.refresh_period);
    let mut augmenters: Vec<Augmenter<S>> = Vec::new();
    let mut stages = Vec::with_capacity(cfg.n_stages);
    let mut training_loss = Vec::with_capacity(cfg.n_stages);

    for t0 in 0..cfg.n_stages {
        if schedule[t0] == augmenters.len() {
            // record the schedule's identity augmenters so the serialized
            // model is comparable with the augmented path
            let refresh_idx = augmenters.len();
            let mut rng = aug_rng(cfg.seed, refresh_idx);
            let aug = fit_augmenter(
                AugmenterKind::Identity,
                x,
                AugTargets::Labels(&classes, k),
                cfg.n_subsets,
                t0 + 1,
                cfg.concat_original,
                &cfg.ann,
                None,
                &mut rng,
            )?;
            augmenters.push(aug);
        }
        let grad = negative_gradient_logloss(&scores, &classes);
        let mut trees = Vec::with_capacity(k);
        for class in 0..k {
            let targets = grad.column(class);
            trees.push(RegressionTree::fit(x, &targets, &cfg.tree)?);
        }
        let d = stage_tree_predictions(&trees, x)?;
        let rho = line_search_rho(
            |rho| {
                let mut trial = scores.clone();
                let step = S::from_f64(rho);
                for (tv, &dv) in trial.data_mut().iter_mut().zip(d.data()) {
                    *tv = *tv + step * dv;
                }
                total_logloss(&trial, &classes)
            },
            &cfg.line_search,
        )?;
        let step = S::from_f64(rho);
        for (sv, &dv) in scores.data_mut().iter_mut().zip(d.data()) {
            *sv = *sv + step * dv;
        }
        training_loss.push(total_logloss(&scores, &classes) / n as f64);
        stages.push(Stage {
            augmenter_index: schedule[t0],
            trees,
            rho: S::from_f64(rho),
        });
    }

    Ok(BoostModel {
        version: MODEL_VERSION.to_string(),
        config: cfg.clone(),
        labels,
        init_scores: init,
        n_features: x.cols(),
        augmenters,
        stages,
        training_loss,
    })
}

impl<S: Scalar> BoostModel<S> {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    fn check_width(&self, x: &Matrix<S>) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::Data(format!(
                "model expects {} features, input has {}",
                self.n_features,
                x.cols()
            )));
        }
        Ok(())
    }

    fn transforms(&self, x: &Matrix<S>) -> Result<Vec<Matrix<S>>> {
        self.augmenters.iter().map(|a| a.transform(x)).collect()
    }

    /// Number of score columns: K for classification, 1 for regression.
    pub fn score_width(&self) -> usize {
        self.init_scores.len()
    }

    pub fn predict_scores(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        self.check_width(x)?;
        let transformed = self.transforms(x)?;
        let mut scores = Matrix::zeros(x.rows(), self.score_width());
        for r in 0..x.rows() {
            scores.row_mut(r).copy_from_slice(&self.init_scores);
        }
        for stage in &self.stages {
            self.apply_stage(stage, &transformed, &mut scores)?;
        }
        Ok(scores)
    }

    fn apply_stage(
        &self,
        stage: &Stage<S>,
        transformed: &[Matrix<S>],
        scores: &mut Matrix<S>,
    ) -> Result<()> {
        let xa = &transformed[stage.augmenter_index];
        let step = S::from_f64(self.config.shrinkage) * stage.rho;
        for (k, tree) in stage.trees.iter().enumerate() {
            for (r, v) in tree.predict(xa)?.into_iter().enumerate() {
                let s = scores.get(r, k);
                scores.set(r, k, s + step * v);
            }
        }
        Ok(())
    }

    /// Score matrices after each stage prefix; the last equals
    /// `predict_scores` bitwise.
    pub fn staged_predict(&self, x: &Matrix<S>) -> Result<Vec<Matrix<S>>> {
        self.check_width(x)?;
        let transformed = self.transforms(x)?;
        let mut scores = Matrix::zeros(x.rows(), self.score_width());
        for r in 0..x.rows() {
            scores.row_mut(r).copy_from_slice(&self.init_scores);
        }
        let mut out = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            self.apply_stage(stage, &transformed, &mut scores)?;
            out.push(scores.clone());
        }
        Ok(out)
    }

    pub fn predict_label(&self, x: &Matrix<S>) -> Result<Vec<String>> {
        if self.labels.is_empty() {
            return Err(Error::Data("model has no class labels".into()));
        }
        let scores = self.predict_scores(x)?;
        Ok((0..scores.rows())
            .map(|r| self.labels[argmax(scores.row(r))].clone())
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<BoostModel<S>> {
        let model: BoostModel<S> = serde_json::from_str(text)
            .map_err(|e| Error::Data(format!("bad model file: {e}")))?;
        if model.version != MODEL_VERSION {
            return Err(Error::Data(format!(
                "unsupported model version '{}', expected '{MODEL_VERSION}'",
                model.version
            )));
        }
        Ok(model)
    }
}

pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
