//! Step-wise feature augmentation: features are partitioned into J random
//! subsets, one augmenter is fitted per subset, and the transform
//! concatenates the original features with each subset's extracted features.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ann::{Mlp, MlpConfig, OutputMode, Targets};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmenterKind {
    Ann,
    RandomProjection,
    Identity,
}

/// J disjoint feature-index subsets covering 0..m-1, sizes within one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetPartition {
    pub subsets: Vec<Vec<usize>>,
}

/// Uniformly random permutation of 0..m chopped into J near-equal parts.
pub fn partition_features(m: usize, j: usize, rng: &mut ChaCha8Rng) -> Result<SubsetPartition> {
    if j == 0 || j > m {
        return Err(Error::Config(format!(
            "subset count J={j} must satisfy 1 <= J <= m={m}"
        )));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    let base = m / j;
    let extra = m % j;
    let mut subsets = Vec::with_capacity(j);
    let mut at = 0;
    for s in 0..j {
        let len = base + usize::from(s < extra);
        subsets.push(perm[at..at + len].to_vec());
        at += len;
    }
    Ok(SubsetPartition { subsets })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubsetState<S> {
    Ann { net: Mlp<S> },
    Projection { matrix: Matrix<S> },
    Identity,
}

/// A fitted feature transform tied to one partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmenter<S> {
    pub kind: AugmenterKind,
    pub partition: SubsetPartition,
    pub states: Vec<SubsetState<S>>,
    pub fitted_at_stage: usize,
    /// When false, the transform emits only the augmented block.
    pub concat_original: bool,
}

/// Per-subset training targets for the ANN augmenter.
#[derive(Clone, Copy)]
pub enum AugTargets<'a, S> {
    /// Class indices plus the class count.
    Labels(&'a [usize], usize),
    /// Current pseudo-residual matrix, n×K.
    Residuals(&'a Matrix<S>),
}

/// ANN augmenter hyperparameters carried by the boosting config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnAugmentConfig {
    pub adam: crate::ann::AdamParams,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for AnnAugmentConfig {
    fn default() -> Self {
        AnnAugmentConfig {
            adam: crate::ann::AdamParams::default(),
            max_epochs: 30,
            patience: 3,
        }
    }
}

pub fn fit_augmenter<S: Scalar>(
    kind: AugmenterKind,
    x: &Matrix<S>,
    targets: AugTargets<S>,
    j: usize,
    fitted_at_stage: usize,
    concat_original: bool,
    ann_cfg: &AnnAugmentConfig,
    previous: Option<&Augmenter<S>>,
    rng: &mut ChaCha8Rng,
) -> Result<Augmenter<S>> {
    let partition = partition_features(x.cols(), j, rng)?;
    let mut states = Vec::with_capacity(j);
    for (s, subset) in partition.subsets.iter().enumerate() {
        let state = match kind {
            AugmenterKind::Identity => SubsetState::Identity,
            AugmenterKind::RandomProjection => {
                let k = subset.len();
                let std = (1.0 / k as f64).sqrt();
                let mut matrix = Matrix::zeros(k, k);
                for v in matrix.data_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = S::from_f64(std * z);
                }
                SubsetState::Projection { matrix }
            }
            AugmenterKind::Ann => {
                let sub_x = x.select_cols(subset);
                let (mode, out_width) = match targets {
                    AugTargets::Labels(_, k) => (OutputMode::SoftmaxCrossEntropy, k),
                    AugTargets::Residuals(r) => (OutputMode::LinearMse, r.cols()),
                };
                let cfg = MlpConfig {
                    input_width: subset.len(),
                    output_width: out_width,
                    output_mode: mode,
                    adam: ann_cfg.adam.clone(),
                    max_epochs: ann_cfg.max_epochs,
                    patience: ann_cfg.patience,
                    seed: rng.gen(),
                };
                let warm = previous.and_then(|p| match &p.states[s] {
                    SubsetState::Ann { net }
                        if net.input_width() == subset.len()
                            && net.output_width() == out_width
                            && net.output_mode() == mode =>
                    {
                        Some(net.clone())
                    }
                    _ => None,
                });
                let net_targets = match targets {
                    AugTargets::Labels(classes, _) => Targets::Classes(classes),
                    AugTargets::Residuals(r) => Targets::Values(r),
                };
                let net = match warm {
                    // transfer learning: warm-start with the early layers frozen
                    Some(mut net) => {
                        net.retrain_transfer(&sub_x, net_targets, &cfg)?;
                        net
                    }
                    None => {
                        let mut net = Mlp::init(&cfg);
                        net.train(&sub_x, net_targets, &cfg)?;
                        net
                    }
                };
                SubsetState::Ann { net }
            }
        };
        states.push(state);
    }
    Ok(Augmenter {
        kind,
        partition,
        states,
        fitted_at_stage,
        concat_original,
    })
}

impl<S: Scalar> Augmenter<S> {
    /// Output width of `transform` for an m-column input.
    pub fn output_width(&self, m: usize) -> usize {
        match self.kind {
            AugmenterKind::Identity => m,
            _ => {
                if self.concat_original {
                    2 * m
                } else {
                    m
                }
            }
        }
    }

    /// [X | g_1(X_s1) | ... | g_J(X_sJ)]: original columns first, then the
    /// per-subset extractions in partition order.
    pub fn transform(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        let m: usize = self.partition.subsets.iter().map(Vec::len).sum();
        if x.cols() != m {
            return Err(Error::Data(format!(
                "augmenter fitted on {m} features, input has {}",
                x.cols()
            )));
        }
        if self.kind == AugmenterKind::Identity {
            return Ok(x.clone());
        }
        let mut blocks: Vec<Matrix<S>> = Vec::with_capacity(self.states.len());
        for (subset, state) in self.partition.subsets.iter().zip(&self.states) {
            let sub_x = x.select_cols(subset);
            let block = match state {
                SubsetState::Identity => sub_x,
                SubsetState::Projection { matrix } => sub_x.matmul(matrix),
                SubsetState::Ann { net } => net.extract_features(&sub_x)?,
            };
            blocks.push(block);
        }
        let mut refs: Vec<&Matrix<S>> = Vec::with_capacity(blocks.len() + 1);
        if self.concat_original {
            refs.push(x);
        }
        refs.extend(blocks.iter());
        Ok(Matrix::hcat(&refs))
    }
}
