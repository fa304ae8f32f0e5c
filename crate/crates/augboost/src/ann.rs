//! Small fully connected network trained with mini-batch Adam. Three ReLU
//! hidden layers, each as wide as the input; the third hidden layer doubles
//! as the feature extractor for augmentation, and transfer retraining keeps
//! the first two layers frozen.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const HIDDEN_LAYERS: usize = 3;
const IMPROVEMENT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    SoftmaxCrossEntropy,
    LinearMse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_width: usize,
    pub output_width: usize,
    pub output_mode: OutputMode,
    pub adam: AdamParams,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_width: usize, output_width: usize, output_mode: OutputMode, seed: u64) -> Self {
        MlpConfig {
            input_width,
            output_width,
            output_mode,
            adam: AdamParams::default(),
            max_epochs: 30,
            patience: 3,
            seed,
        }
    }

    /// Hidden widths all equal the input width.
    pub fn layer_widths(&self) -> Vec<usize> {
        vec![
            self.input_width,
            self.input_width,
            self.input_width,
            self.input_width,
            self.output_width,
        ]
    }
}

/// Mini-batch size rule: min(300, ⌊n/15⌋), at least 1.
pub fn batch_size(n: usize) -> usize {
    (n / 15).clamp(1, 300)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer<S> {
    /// in×out weight matrix.
    pub weights: Matrix<S>,
    pub bias: Vec<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<S> {
    layers: Vec<Layer<S>>,
    frozen: Vec<bool>,
    output_mode: OutputMode,
    /// Monitored loss per epoch of the most recent training run.
    history: Vec<f64>,
}

pub struct Activations<S> {
    /// Post-ReLU hidden activations h1..h3.
    pub hidden: Vec<Matrix<S>>,
    /// Linear output layer values.
    pub output: Matrix<S>,
    /// Softmax of the output; only in softmax-cross-entropy mode.
    pub probs: Option<Matrix<S>>,
}

#[derive(Clone, Copy)]
pub enum Targets<'a, S> {
    Classes(&'a [usize]),
    Values(&'a Matrix<S>),
}

impl<S: Scalar> Mlp<S> {
    pub fn init(cfg: &MlpConfig) -> Mlp<S> {
        Self::init_with_widths(&cfg.layer_widths(), cfg.output_mode, cfg.seed)
    }

    /// Fan-in scaled normal weights (std = sqrt(2/fan_in)), zero biases.
    pub fn init_with_widths(widths: &[usize], output_mode: OutputMode, seed: u64) -> Mlp<S> {
        assert!(widths.len() >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let mut weights = Matrix::zeros(fan_in, fan_out);
            for v in weights.data_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = S::from_f64(std * z);
            }
            layers.push(Layer {
                weights,
                bias: vec![S::zero(); fan_out],
            });
        }
        let n = layers.len();
        Mlp {
            layers,
            frozen: vec![false; n],
            output_mode,
            history: Vec::new(),
        }
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    /// Direct parameter access, e.g. for external optimizers or
    /// finite-difference checks.
    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output_mode
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weights.cols()
    }

    fn check_width(&self, x: &Matrix<S>) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::Data(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix<S>) -> Result<Activations<S>> {
        self.check_width(x)?;
        let n_hidden = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(n_hidden);
        let mut h = x.clone();
        for layer in &self.layers[..n_hidden] {
            let mut z = h.matmul(&layer.weights);
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    // ReLU(x) = max(0, x)
                    *v = (*v + *b).max(S::zero());
                }
            }
            hidden.push(z.clone());
            h = z;
        }
        let out_layer = self.layers.last().unwrap();
        let mut output = h.matmul(&out_layer.weights);
        for r in 0..output.rows() {
            for (v, b) in output.row_mut(r).iter_mut().zip(&out_layer.bias) {
                *v = *v + *b;
            }
        }
        let probs = match self.output_mode {
            OutputMode::SoftmaxCrossEntropy => Some(softmax_rows(&output)),
            OutputMode::LinearMse => None,
        };
        Ok(Activations {
            hidden,
            output,
            probs,
        })
    }

    /// Third hidden layer activations, the augmented features.
    pub fn extract_features(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        let acts = self.forward(x)?;
        Ok(acts.hidden.into_iter().nth(HIDDEN_LAYERS - 1).unwrap())
    }

    /// Mean loss per sample over the whole input.
    pub fn loss(&self, x: &Matrix<S>, targets: Targets<S>) -> Result<f64> {
        let acts = self.forward(x)?;
        self.loss_from_acts(&acts, targets)
    }

    fn loss_from_acts(&self, acts: &Activations<S>, targets: Targets<S>) -> Result<f64> {
        let n = acts.output.rows();
        match (self.output_mode, targets) {
            (OutputMode::SoftmaxCrossEntropy, Targets::Classes(classes)) => {
                if classes.len() != n {
                    return Err(Error::Training("target length mismatch".into()));
                }
                let mut total = 0.0;
                for (r, &c) in classes.iter().enumerate() {
                    total += cross_entropy_row(acts.output.row(r), c);
                }
                Ok(total / n as f64)
            }
            (OutputMode::LinearMse, Targets::Values(values)) => {
                if values.rows() != n || values.cols() != acts.output.cols() {
                    return Err(Error::Training("target shape mismatch".into()));
                }
                let mut total = 0.0;
                for r in 0..n {
                    for (o, t) in acts.output.row(r).iter().zip(values.row(r)) {
                        let d = (*o - *t).to_f64();
                        total += d * d;
                    }
                }
                Ok(total / n as f64)
            }
            _ => Err(Error::Training(
                "target kind does not match the network's output mode".into(),
            )),
        }
    }

    /// Analytic gradients of the mean loss with respect to every parameter.
    pub fn gradients(&self, x: &Matrix<S>, targets: Targets<S>) -> Result<Vec<Layer<S>>> {
        let acts = self.forward(x)?;
        Ok(self.gradients_from_acts(x, &acts, targets))
    }

    fn gradients_from_acts(
        &self,
        x: &Matrix<S>,
        acts: &Activations<S>,
        targets: Targets<S>,
    ) -> Vec<Layer<S>> {
        let n = x.rows();
        let inv_n = S::from_f64(1.0 / n as f64);
        // delta at the linear output
        let mut delta = match (self.output_mode, targets) {
            (OutputMode::SoftmaxCrossEntropy, Targets::Classes(classes)) => {
                let mut d = acts.probs.clone().unwrap();
                for (r, &c) in classes.iter().enumerate() {
                    let v = d.get(r, c);
                    d.set(r, c, v - S::one());
                }
                for v in d.data_mut() {
                    *v = *v * inv_n;
                }
                d
            }
            (OutputMode::LinearMse, Targets::Values(values)) => {
                let two = S::from_f64(2.0);
                let mut d = acts.output.clone();
                for r in 0..n {
                    for (dv, t) in d.row_mut(r).iter_mut().zip(values.row(r)) {
                        *dv = two * (*dv - *t) * inv_n;
                    }
                }
                d
            }
            _ => unreachable!("checked by loss"),
        };
        let mut grads: Vec<Layer<S>> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x } else { &acts.hidden[l - 1] };
            let g_w = input.transpose().matmul(&delta);
            let g_b: Vec<S> = (0..delta.cols())
                .map(|c| (0..delta.rows()).map(|r| delta.get(r, c)).sum())
                .collect();
            grads.push(Layer {
                weights: g_w,
                bias: g_b,
            });
            if l > 0 {
                let mut back = delta.matmul(&self.layers[l].weights.transpose());
                let h = &acts.hidden[l - 1];
                for r in 0..back.rows() {
                    for c in 0..back.cols() {
                        if h.get(r, c) <= S::zero() {
                            back.set(r, c, S::zero());
                        }
                    }
                }
                delta = back;
            }
        }
        grads.reverse();
        grads
    }

    /// Mini-batch Adam until `max_epochs` or the monitored training loss
    /// stalls for `patience` epochs; parameters from the best epoch are kept.
    /// Frozen layers are never updated.
    pub fn train(&mut self, x: &Matrix<S>, targets: Targets<S>, cfg: &MlpConfig) -> Result<()> {
        self.check_width(x)?;
        let n = x.rows();
        if n == 0 {
            return Err(Error::Training("cannot train on empty input".into()));
        }
        let batch = batch_size(n);
        let mut adam = AdamState::new(&self.layers);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);

        self.history.clear();
        let mut best_loss = self.loss(x, targets)?;
        let mut best_params = self.layers.clone();
        let mut stall = 0usize;

        let mut order: Vec<usize> = (0..n).collect();
        for _epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let bx = x.select_rows(chunk);
                let owned_classes;
                let owned_values;
                let bt = match targets {
                    Targets::Classes(c) => {
                        owned_classes = chunk.iter().map(|&i| c[i]).collect::<Vec<_>>();
                        Targets::Classes(owned_classes.as_slice())
                    }
                    Targets::Values(v) => {
                        owned_values = v.select_rows(chunk);
                        Targets::Values(&owned_values)
                    }
                };
                let acts = self.forward(&bx)?;
                let grads = self.gradients_from_acts(&bx, &acts, bt);
                adam.step(&mut self.layers, &self.frozen, &grads, &cfg.adam);
            }
            let epoch_loss = self.loss(x, targets)?;
            if !epoch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite training loss {epoch_loss}"
                )));
            }
            self.history.push(epoch_loss);
            if best_loss - epoch_loss > IMPROVEMENT_EPS {
                stall = 0;
            } else {
                stall += 1;
            }
            if epoch_loss < best_loss {
                best_loss = epoch_loss;
                best_params = self.layers.clone();
            }
            if stall >= cfg.patience {
                break;
            }
        }
        self.layers = best_params;
        Ok(())
    }

    /// Transfer retraining: the first two hidden layers stay frozen, the
    /// third hidden layer and the output layer continue from their current
    /// values.
    pub fn retrain_transfer(
        &mut self,
        x: &Matrix<S>,
        targets: Targets<S>,
        cfg: &MlpConfig,
    ) -> Result<()> {
        for (l, f) in self.frozen.iter_mut().enumerate() {
            *f = l < 2;
        }
        self.train(x, targets, cfg)
    }
}

struct AdamState<S> {
    m: Vec<Layer<S>>,
    v: Vec<Layer<S>>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    fn new(layers: &[Layer<S>]) -> Self {
        let zero = |l: &Layer<S>| Layer {
            weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
            bias: vec![S::zero(); l.bias.len()],
        };
        AdamState {
            m: layers.iter().map(zero).collect(),
            v: layers.iter().map(zero).collect(),
            t: 0,
        }
    }

    fn step(&mut self, layers: &mut [Layer<S>], frozen: &[bool], grads: &[Layer<S>], p: &AdamParams) {
        self.t += 1;
        let b1 = S::from_f64(p.beta1);
        let b2 = S::from_f64(p.beta2);
        let one = S::one();
        let bc1 = S::from_f64(1.0 - p.beta1.powi(self.t as i32));
        let bc2 = S::from_f64(1.0 - p.beta2.powi(self.t as i32));
        let lr = S::from_f64(p.learning_rate);
        let eps = S::from_f64(p.epsilon);
        for (l, layer) in layers.iter_mut().enumerate() {
            if frozen[l] {
                continue;
            }
            let update = |param: &mut S, g: S, m: &mut S, v: &mut S| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *param = *param - lr * m_hat / (v_hat.sqrt() + eps);
            };
            for ((param, &g), (m, v)) in layer
                .weights
                .data_mut()
                .iter_mut()
                .zip(grads[l].weights.data())
                .zip(
                    self.m[l]
                        .weights
                        .data_mut()
                        .iter_mut()
                        .zip(self.v[l].weights.data_mut()),
                )
            {
                update(param, g, m, v);
            }
            for ((param, &g), (m, v)) in layer
                .bias
                .iter_mut()
                .zip(&grads[l].bias)
                .zip(self.m[l].bias.iter_mut().zip(self.v[l].bias.iter_mut()))
            {
                update(param, g, m, v);
            }
        }
    }
}

/// Row-wise softmax with the usual max-shift for stability.
pub fn softmax_rows<S: Scalar>(scores: &Matrix<S>) -> Matrix<S> {
    let mut out = scores.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// −log softmax(scores)[class], via log-sum-exp.
pub fn cross_entropy_row<S: Scalar>(scores: &[S], class: usize) -> f64 {
    let max = scores.iter().copied().fold(S::neg_infinity(), S::max);
    let sum: f64 = scores.iter().map(|&s| (s - max).exp().to_f64()).sum();
    max.to_f64() + sum.ln() - scores[class].to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(input: usize, output: usize, mode: OutputMode) -> MlpConfig {
        MlpConfig::new(input, output, mode, 9)
    }

    #[test]
    fn init_shapes_and_determinism() {
        let c = cfg(5, 54, OutputMode::SoftmaxCrossEntropy);
        let net: Mlp<f64> = Mlp::init(&c);
        let shapes: Vec<(usize, usize)> = net
            .layers()
            .iter()
            .map(|l| (l.weights.rows(), l.weights.cols()))
            .collect();
        assert_eq!(shapes, vec![(5, 5), (5, 5), (5, 5), (5, 54)]);
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let again: Mlp<f64> = Mlp::init(&c);
        assert_eq!(net, again);
    }

    #[test]
    fn forward_zero_net_uniform_softmax() {
        let c = cfg(3, 4, OutputMode::SoftmaxCrossEntropy);
        let mut net: Mlp<f64> = Mlp::init(&c);
        for layer in net.layers.iter_mut() {
            layer.weights.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]);
        let acts = net.forward(&x).unwrap();
        assert!(acts.hidden[2].data().iter().all(|&v| v == 0.0));
        let probs = acts.probs.unwrap();
        assert!(probs.row(0).iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let sum: f64 = probs.row(0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // uniform prediction loss is exactly ln K
        assert_eq!(net.loss(&x, Targets::Classes(&[1])).unwrap(), (4f64).ln());
    }

    #[test]
    fn batch_rule() {
        assert_eq!(batch_size(1090), 72);
        assert_eq!(batch_size(10_000), 300);
        assert_eq!(batch_size(7), 1);
    }

    #[test]
    fn extract_matches_forward_h3() {
        let c = cfg(4, 3, OutputMode::SoftmaxCrossEntropy);
        let net: Mlp<f64> = Mlp::init(&c);
        let x = Matrix::from_rows(&[vec![0.1, -0.5, 0.3, 2.0], vec![1.0, 1.0, 1.0, 1.0]]);
        let feats = net.extract_features(&x).unwrap();
        let acts = net.forward(&x).unwrap();
        assert_eq!(feats, acts.hidden[2]);
        assert_eq!(feats.cols(), 4);
    }

    /// Smallest |pre-activation| across all hidden units and samples; a
    /// finite-difference step must stay clear of the ReLU kink.
    fn kink_distance(net: &Mlp<f64>, x: &Matrix<f64>) -> f64 {
        let mut min = f64::INFINITY;
        let mut h = x.clone();
        for layer in &net.layers()[..net.layers().len() - 1] {
            let mut z = h.matmul(&layer.weights);
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += *b;
                    min = min.min(v.abs());
                    *v = v.max(0.0);
                }
            }
            h = z;
        }
        min
    }

    fn finite_diff_check(mode: OutputMode) {
        let x = Matrix::from_rows(&[
            vec![0.5, -1.2, 0.3, 0.9],
            vec![-0.4, 0.8, 1.5, -0.6],
            vec![0.1, 0.1, -0.9, 1.1],
            vec![2.0, -0.3, 0.4, 0.2],
            vec![-1.0, 0.6, 0.0, -0.2],
        ]);
        // pick a seed whose activations sit far from the ReLU kink, so the
        // central difference never straddles it
        let net: Mlp<f64> = (17..)
            .map(|seed| Mlp::init_with_widths(&[4, 3, 3, 3, 2], mode, seed))
            .find(|net| kink_distance(net, &x) > 1e-3)
            .unwrap();
        let classes = [0usize, 1, 0, 1, 1];
        let values = Matrix::from_rows(&[
            vec![0.2, -0.1],
            vec![1.0, 0.4],
            vec![-0.3, 0.9],
            vec![0.0, 0.5],
            vec![0.7, -0.8],
        ]);
        let targets = match mode {
            OutputMode::SoftmaxCrossEntropy => Targets::Classes(&classes),
            OutputMode::LinearMse => Targets::Values(&values),
        };
        let grads = net.gradients(&x, targets).unwrap();
        let step = 1e-5;
        let mut max_rel: f64 = 0.0;
        for l in 0..net.layers().len() {
            for i in 0..net.layers()[l].weights.data().len() {
                let mut plus = net.clone();
                plus.layers[l].weights.data_mut()[i] += step;
                let mut minus = net.clone();
                minus.layers[l].weights.data_mut()[i] -= step;
                let fd = (plus.loss(&x, targets).unwrap() - minus.loss(&x, targets).unwrap())
                    / (2.0 * step);
                let g = grads[l].weights.data()[i];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
            for i in 0..net.layers()[l].bias.len() {
                let mut plus = net.clone();
                plus.layers[l].bias[i] += step;
                let mut minus = net.clone();
                minus.layers[l].bias[i] -= step;
                let fd = (plus.loss(&x, targets).unwrap() - minus.loss(&x, targets).unwrap())
                    / (2.0 * step);
                let g = grads[l].bias[i];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn gradients_match_finite_differences_both_modes() {
        finite_diff_check(OutputMode::SoftmaxCrossEntropy);
        finite_diff_check(OutputMode::LinearMse);
    }

    #[test]
    fn train_deterministic_and_improving() {
        let mut c = cfg(4, 3, OutputMode::SoftmaxCrossEntropy);
        c.adam.learning_rate = 0.01;
        c.max_epochs = 15;
        let x = Matrix::from_rows(
            &(0..30)
                .map(|i| {
                    let f = i as f64;
                    vec![f.sin(), f.cos(), (f * 0.3).sin(), (f * 0.7).cos()]
                })
                .collect::<Vec<_>>(),
        );
        let classes: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let mut a: Mlp<f64> = Mlp::init(&c);
        let before = a.loss(&x, Targets::Classes(&classes)).unwrap();
        a.train(&x, Targets::Classes(&classes), &c).unwrap();
        let after = a.loss(&x, Targets::Classes(&classes)).unwrap();
        assert!(after <= before + 1e-9, "{after} > {before}");
        let mut b: Mlp<f64> = Mlp::init(&c);
        b.train(&x, Targets::Classes(&classes), &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transfer_freezes_first_two_layers() {
        let mut c = cfg(4, 2, OutputMode::SoftmaxCrossEntropy);
        c.adam.learning_rate = 0.05;
        c.max_epochs = 8;
        let x = Matrix::from_rows(
            &(0..20)
                .map(|i| {
                    let f = i as f64;
                    vec![f.sin(), f.cos(), (f * 0.2).sin(), (f * 0.9).cos()]
                })
                .collect::<Vec<_>>(),
        );
        let classes: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let mut net: Mlp<f64> = Mlp::init(&c);
        net.train(&x, Targets::Classes(&classes), &c).unwrap();
        let w1 = net.layers()[0].clone();
        let w2 = net.layers()[1].clone();
        let loss_before = net.loss(&x, Targets::Classes(&classes)).unwrap();
        net.retrain_transfer(&x, Targets::Classes(&classes), &c).unwrap();
        assert_eq!(net.layers()[0], w1);
        assert_eq!(net.layers()[1], w2);
        let loss_after = net.loss(&x, Targets::Classes(&classes)).unwrap();
        assert!(loss_after <= loss_before + 1e-9);
    }
}
