//! CART-style regression tree, the weak learner of the boosting loop.
//! Exact greedy splitting on the squared-error criterion; thresholds at
//! midpoints of consecutive distinct values, ties routed left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 3,
            min_samples_leaf: 5,
            min_samples_split: 10,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config("tree limits must be positive".into()));
        }
        if self.min_samples_split < 2 * self.min_samples_leaf {
            return Err(Error::Config(
                "min_samples_split must be >= 2 * min_samples_leaf".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node<S> {
    Internal {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
    },
    Leaf {
        value: S,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<S> {
    nodes: Vec<Node<S>>,
    n_features: usize,
}

struct BestSplit<S> {
    feature: usize,
    threshold: S,
    gain: f64,
}

impl<S: Scalar> RegressionTree<S> {
    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Greedy recursive fit. Deterministic: ties in split gain are broken by
    /// the lowest feature index, then the lowest threshold.
    pub fn fit(x: &Matrix<S>, targets: &[S], cfg: &TreeConfig) -> Result<RegressionTree<S>> {
        cfg.validate()?;
        if x.rows() == 0 {
            return Err(Error::Training("cannot fit a tree on empty input".into()));
        }
        if x.rows() != targets.len() {
            return Err(Error::Training("targets length mismatch".into()));
        }
        if x.data().iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite value in tree input".into()));
        }
        let mut tree = RegressionTree {
            nodes: Vec::new(),
            n_features: x.cols(),
        };
        let idx: Vec<usize> = (0..x.rows()).collect();
        tree.grow(x, targets, idx, 0, cfg);
        Ok(tree)
    }

    fn grow(
        &mut self,
        x: &Matrix<S>,
        targets: &[S],
        idx: Vec<usize>,
        depth: usize,
        cfg: &TreeConfig,
    ) -> usize {
        let n = idx.len();
        let mean = {
            let sum: f64 = idx.iter().map(|&i| targets[i].to_f64()).sum();
            sum / n as f64
        };
        let stop = depth >= cfg.max_depth || n < cfg.min_samples_split;
        let split = if stop { None } else { best_split(x, targets, &idx, cfg) };
        match split {
            None => {
                self.nodes.push(Node::Leaf {
                    value: S::from_f64(mean),
                });
                self.nodes.len() - 1
            }
            Some(s) => {
                let (li, ri): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| x.get(i, s.feature) <= s.threshold);
                let here = self.nodes.len();
                self.nodes.push(Node::Internal {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: 0,
                    right: 0,
                });
                let left = self.grow(x, targets, li, depth + 1, cfg);
                let right = self.grow(x, targets, ri, depth + 1, cfg);
                if let Node::Internal { left: l, right: r, .. } = &mut self.nodes[here] {
                    *l = left;
                    *r = right;
                }
                here
            }
        }
    }

    pub fn predict_row(&self, row: &[S]) -> S {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    // tie rule: value exactly at the threshold goes left
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix<S>) -> Result<Vec<S>> {
        if x.cols() != self.n_features {
            return Err(Error::Data(format!(
                "tree fitted on {} features, input has {}",
                self.n_features,
                x.cols()
            )));
        }
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }
}

/// Scan every feature for the split maximizing n_L·n_R/n·(mean_L − mean_R)².
fn best_split<S: Scalar>(
    x: &Matrix<S>,
    targets: &[S],
    idx: &[usize],
    cfg: &TreeConfig,
) -> Option<BestSplit<S>> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| targets[i].to_f64()).sum();
    let mut best: Option<BestSplit<S>> = None;
    let mut pairs: Vec<(S, f64)> = Vec::with_capacity(n);
    for feature in 0..x.cols() {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (x.get(i, feature), targets[i].to_f64())));
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left_sum = 0.0;
        let mut left_n = 0usize;
        for w in 0..n - 1 {
            left_sum += pairs[w].1;
            left_n += 1;
            if pairs[w].0 == pairs[w + 1].0 {
                continue; // no boundary between equal values
            }
            let right_n = n - left_n;
            if left_n < cfg.min_samples_leaf || right_n < cfg.min_samples_leaf {
                continue;
            }
            let mean_l = left_sum / left_n as f64;
            let mean_r = (total - left_sum) / right_n as f64;
            let diff = mean_l - mean_r;
            let gain = (left_n as f64) * (right_n as f64) / (n as f64) * diff * diff;
            if gain <= 0.0 {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => gain > b.gain,
            };
            if better {
                let half = S::from_f64(0.5);
                best = Some(BestSplit {
                    feature,
                    threshold: (pairs[w].0 + pairs[w + 1].0) * half,
                    gain,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sse(tree: &RegressionTree<f64>, x: &Matrix<f64>, t: &[f64]) -> f64 {
        tree.predict(x)
            .unwrap()
            .iter()
            .zip(t)
            .map(|(p, y)| (p - y) * (p - y))
            .sum()
    }

    #[test]
    fn forced_split() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        let cfg = TreeConfig {
            max_depth: 1,
            min_samples_leaf: 1,
            min_samples_split: 2,
        };
        let tree = RegressionTree::fit(&x, &[0.0, 1.0], &cfg).unwrap();
        match tree.nodes()[0] {
            Node::Internal { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.5);
            }
            _ => panic!("expected a root split"),
        }
        assert_eq!(tree.predict(&x).unwrap(), vec![0.0, 1.0]);
        // exact threshold routes left
        let at = Matrix::from_rows(&[vec![0.5]]);
        assert_eq!(tree.predict(&at).unwrap(), vec![0.0]);
    }

    #[test]
    fn constant_targets_single_leaf() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let cfg = TreeConfig {
            max_depth: 3,
            min_samples_leaf: 1,
            min_samples_split: 2,
        };
        let tree = RegressionTree::fit(&x, &[3.5, 3.5, 3.5], &cfg).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.predict(&x).unwrap(), vec![3.5; 3]);
    }

    #[test]
    fn deeper_never_worse() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..5).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let x = Matrix::from_rows(&rows);
        let t: Vec<f64> = (0..80).map(|_| rng.gen::<f64>()).collect();
        let mut prev = f64::INFINITY;
        for depth in 1..=5 {
            let cfg = TreeConfig {
                max_depth: depth,
                min_samples_leaf: 1,
                min_samples_split: 2,
            };
            let tree = RegressionTree::fit(&x, &t, &cfg).unwrap();
            let loss = sse(&tree, &x, &t);
            assert!(loss <= prev + 1e-12, "depth {depth}: {loss} > {prev}");
            prev = loss;
        }
        // training MSE never exceeds the target variance (depth-0 bound)
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        let var_sse: f64 = t.iter().map(|y| (y - mean) * (y - mean)).sum();
        assert!(prev <= var_sse);
    }

    #[test]
    fn deterministic_fit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let x = Matrix::from_rows(&rows);
        let t: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let cfg = TreeConfig::default();
        let a = RegressionTree::fit(&x, &t, &cfg).unwrap();
        let b = RegressionTree::fit(&x, &t, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn width_mismatch_rejected() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        let cfg = TreeConfig {
            max_depth: 1,
            min_samples_leaf: 1,
            min_samples_split: 2,
        };
        let tree = RegressionTree::fit(&x, &[0.0, 1.0], &cfg).unwrap();
        let wide = Matrix::from_rows(&[vec![0.0, 1.0]]);
        assert!(tree.predict(&wide).is_err());
    }
}
