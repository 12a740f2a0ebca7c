//! Fully connected ReLU regressors with a scalar output.
//!
//! Weights act on standardized inputs `u = (x - shift) / scale`; the target
//! scaling used during training is folded into the output layer, so the
//! network output is always in label units.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row `i` holds the incoming weights of neuron `i`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Zero mean, unit range per feature; constant features keep scale 1.
    pub fn fit(xs: &[Vec<f64>]) -> Result<Self> {
        let dim = xs
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot fit a scaler to no data".into()))?
            .len();
        let n = xs.len() as f64;
        let mut shift = vec![0.0; dim];
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for x in xs {
            for d in 0..dim {
                shift[d] += x[d] / n;
                lo[d] = lo[d].min(x[d]);
                hi[d] = hi[d].max(x[d]);
            }
        }
        let scale = (0..dim)
            .map(|d| if hi[d] > lo[d] { hi[d] - lo[d] } else { 1.0 })
            .collect();
        Ok(Self { shift, scale })
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn unstandardize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MlpMeta {
    #[serde(default)]
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Hidden layers followed by the single-neuron output layer.
    pub layers: Vec<Layer>,
    pub input_scaler: InputScaler,
    #[serde(default)]
    pub meta: MlpMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Standardized input.
    pub u: Vec<f64>,
    /// Pre-activations of each hidden layer.
    pub z: Vec<Vec<f64>>,
    /// Post-activations of each hidden layer.
    pub s: Vec<Vec<f64>>,
    pub h: f64,
}

impl MlpParams {
    /// Xavier-uniform weights and zero biases on identity scaling.
    pub fn initialize(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: (0..fan_out)
                        .map(|_| (0..fan_in).map(|_| rng.gen_range(-limit..limit)).collect())
                        .collect(),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layers,
            input_scaler: InputScaler::identity(input_dim),
            meta: MlpMeta::default(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_scaler.shift.len()
    }

    pub fn hidden(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output(&self) -> &Layer {
        self.layers.last().expect("validated network has an output layer")
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden().iter().map(Layer::outputs).collect()
    }

    pub fn num_hidden_neurons(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(out) = self.layers.last() else {
            return Err(Error::InvalidParameter("network has no layers".into()));
        };
        if out.outputs() != 1 {
            return Err(Error::Shape {
                context: "output layer width",
                expected: 1,
                found: out.outputs(),
            });
        }
        if self.input_scaler.scale.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "input scaler",
                expected: self.input_dim(),
                found: self.input_scaler.scale.len(),
            });
        }
        let mut width = self.input_dim();
        for layer in &self.layers {
            if layer.weights.len() != layer.outputs() {
                return Err(Error::Shape {
                    context: "weight rows",
                    expected: layer.outputs(),
                    found: layer.weights.len(),
                });
            }
            for row in &layer.weights {
                if row.len() != width {
                    return Err(Error::Shape {
                        context: "weight columns",
                        expected: width,
                        found: row.len(),
                    });
                }
            }
            width = layer.outputs();
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        Ok(self.forward_standardized(self.input_scaler.standardize(x)))
    }

    fn forward_standardized(&self, u: Vec<f64>) -> ForwardTrace {
        let mut z = Vec::with_capacity(self.layers.len() - 1);
        let mut s: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() - 1);
        for layer in self.hidden() {
            let input = s.last().unwrap_or(&u);
            let pre = layer.apply(input);
            s.push(pre.iter().map(|v| v.max(0.0)).collect());
            z.push(pre);
        }
        let h = self.output().apply(s.last().unwrap_or(&u))[0];
        ForwardTrace { u, z, s, h }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.h)
    }

    /// Gradient of the output with respect to every weight and bias, laid
    /// out like `self.layers`.
    pub fn parameter_gradient(&self, x: &[f64]) -> Result<Vec<Layer>> {
        let trace = self.forward(x)?;
        Ok(self.backward(&trace, 1.0))
    }

    fn backward(&self, trace: &ForwardTrace, seed: f64) -> Vec<Layer> {
        let n = self.layers.len();
        let mut grads: Vec<Layer> = Vec::with_capacity(n);
        // delta = d(out)/d(pre-activation) of the current layer
        let mut delta = vec![seed];
        for l in (0..n).rev() {
            let input = if l == 0 { &trace.u } else { &trace.s[l - 1] };
            grads.push(Layer {
                weights: delta
                    .iter()
                    .map(|d| input.iter().map(|v| d * v).collect())
                    .collect(),
                bias: delta.clone(),
            });
            if l > 0 {
                let layer = &self.layers[l];
                delta = (0..layer.inputs())
                    .map(|j| {
                        if trace.z[l - 1][j] > 0.0 {
                            layer
                                .weights
                                .iter()
                                .zip(&delta)
                                .map(|(row, d)| row[j] * d)
                                .sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        grads.reverse();
        grads
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let p: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            learning_rate: 3e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Mean training MSE per epoch, in label units squared.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub initial_validation_mse: f64,
    pub best_validation_mse: f64,
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in layers {
        for row in &layer.weights {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&layer.bias);
    }
    out
}

fn unflatten_into(flat: &[f64], layers: &mut [Layer]) {
    let mut k = 0;
    for layer in layers {
        for row in &mut layer.weights {
            for w in row.iter_mut() {
                *w = flat[k];
                k += 1;
            }
        }
        for b in &mut layer.bias {
            *b = flat[k];
            k += 1;
        }
    }
}

fn mse(params: &MlpParams, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let n = xs.len().max(1) as f64;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = params.predict(x).expect("shape checked") - y;
            e * e
        })
        .sum::<f64>()
        / n
}

/// Folds `y = m + s * y'` into the output layer.
fn fold_target_scaling(params: &mut MlpParams, mean: f64, scale: f64) {
    let out = params.layers.last_mut().expect("output layer");
    for w in &mut out.weights[0] {
        *w *= scale;
    }
    out.bias[0] = out.bias[0] * scale + mean;
}

/// Mini-batch Adam on mean squared error with a seeded 90/10 validation
/// split; returns the parameters of the best validation epoch.
pub fn train(
    xs: &[Vec<f64>],
    ys: &[f64],
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            context: "training labels",
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::Shape {
            context: "training input",
            expected: dim,
            found: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if xs.len() >= 10 { xs.len() / 10 } else { 0 };
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx: Vec<usize> = if val_idx.is_empty() {
        train_idx.to_vec()
    } else {
        val_idx.to_vec()
    };
    let mut train_idx = train_idx.to_vec();

    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| xs[i].clone()).collect();
    let scaler = InputScaler::fit(&train_x)?;
    let y_mean = train_idx.iter().map(|&i| ys[i]).sum::<f64>() / train_idx.len() as f64;
    let y_std = (train_idx
        .iter()
        .map(|&i| (ys[i] - y_mean).powi(2))
        .sum::<f64>()
        / train_idx.len() as f64)
        .sqrt();
    let y_scale = if y_std > 0.0 { y_std } else { 1.0 };

    let us: Vec<Vec<f64>> = xs.iter().map(|x| scaler.standardize(x)).collect();
    let targets: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_scale).collect();
    let val_x: Vec<Vec<f64>> = val_idx.iter().map(|&i| xs[i].clone()).collect();
    let val_y: Vec<f64> = val_idx.iter().map(|&i| ys[i]).collect();

    let mut core = MlpParams::initialize(dim, hidden, cfg.seed)?;
    let export = |core: &MlpParams| {
        let mut p = core.clone();
        p.input_scaler = scaler.clone();
        fold_target_scaling(&mut p, y_mean, y_scale);
        p
    };

    let initial = export(&core);
    let initial_validation_mse = mse(&initial, &val_x, &val_y);
    let mut best = initial;
    let mut best_validation_mse = initial_validation_mse;
    let mut best_epoch = 0;
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut validation_loss = Vec::with_capacity(cfg.epochs);

    let mut theta = flatten(&core.layers);
    let mut adam = Adam {
        m: vec![0.0; theta.len()],
        v: vec![0.0; theta.len()],
        step: 0,
    };
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; theta.len()];
            for &i in batch {
                let trace = core.forward_standardized(us[i].clone());
                let err = trace.h - targets[i];
                epoch_loss += err * err;
                let g = flatten(&core.backward(&trace, 2.0 * err / batch.len() as f64));
                for (acc, v) in grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
            adam.step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(adam.step);
            let bc2 = 1.0 - ADAM_BETA2.powi(adam.step);
            for k in 0..theta.len() {
                adam.m[k] = ADAM_BETA1 * adam.m[k] + (1.0 - ADAM_BETA1) * grad[k];
                adam.v[k] = ADAM_BETA2 * adam.v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
                theta[k] -=
                    cfg.learning_rate * (adam.m[k] / bc1) / ((adam.v[k] / bc2).sqrt() + ADAM_EPS);
            }
            unflatten_into(&theta, &mut core.layers);
        }
        let epoch_loss = epoch_loss / train_idx.len() as f64 * y_scale * y_scale;
        if !epoch_loss.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged {
                epoch,
                detail: format!("training loss became {epoch_loss}"),
            });
        }
        let candidate = export(&core);
        let val = mse(&candidate, &val_x, &val_y);
        train_loss.push(epoch_loss);
        validation_loss.push(val);
        if val < best_validation_mse {
            best_validation_mse = val;
            best_epoch = epoch;
            best = candidate;
        }
    }
    Ok(TrainOutcome {
        params: best,
        train_loss,
        validation_loss,
        initial_validation_mse,
        best_validation_mse,
        best_epoch,
    })
}

/// Largest relative difference between analytic parameter gradients and
/// central finite differences at `x`.
pub fn gradient_check(p: &MlpParams, x: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let trace = p.forward(x)?;
    for (l, z) in trace.z.iter().enumerate() {
        for (j, &v) in z.iter().enumerate() {
            if v.abs() <= 10.0 * eps {
                return Err(Error::KinkProximity {
                    layer: l,
                    neuron: j,
                    magnitude: v.abs(),
                });
            }
        }
    }
    let analytic = flatten(&p.backward(&trace, 1.0));
    let base = flatten(&p.layers);
    let mut probe = p.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut theta = base.clone();
        theta[k] = base[k] + eps;
        unflatten_into(&theta, &mut probe.layers);
        let up = probe.predict(x)?;
        theta[k] = base[k] - eps;
        unflatten_into(&theta, &mut probe.layers);
        let down = probe.predict(x)?;
        let fd = (up - down) / (2.0 * eps);
        let a = analytic[k];
        let diff = (a - fd).abs();
        if diff > 0.0 {
            worst = worst.max(diff / a.abs().max(fd.abs()).max(1e-8));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};

    fn naive_forward(p: &MlpParams, x: &[f64]) -> f64 {
        let mut a: Vec<f64> = (0..x.len())
            .map(|d| (x[d] - p.input_scaler.shift[d]) / p.input_scaler.scale[d])
            .collect();
        let last = p.layers.len() - 1;
        for (l, layer) in p.layers.iter().enumerate() {
            let mut next = Vec::new();
            for i in 0..layer.bias.len() {
                let mut acc = layer.bias[i];
                for j in 0..a.len() {
                    acc += layer.weights[i][j] * a[j];
                }
                next.push(if l == last || acc > 0.0 { acc } else { 0.0 });
            }
            a = next;
        }
        a[0]
    }

    fn random_net(dim: usize, hidden: &[usize], seed: u64) -> MlpParams {
        let mut p = MlpParams::initialize(dim, hidden, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for layer in &mut p.layers {
            for b in &mut layer.bias {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        p.input_scaler.shift = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        p.input_scaler.scale = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
        p
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut p = MlpParams::initialize(3, &[4, 4], 1).unwrap();
        for layer in &mut p.layers {
            layer.weights.iter_mut().flatten().for_each(|w| *w = 0.0);
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        p.layers.last_mut().unwrap().bias[0] = 0.7;
        for x in [[0.0, 0.0, 0.0], [5.0, -2.0, 1e3]] {
            assert_eq!(p.predict(&x).unwrap(), 0.7);
        }
    }

    #[test]
    fn absolute_value_net() {
        let p = MlpParams {
            layers: vec![
                Layer {
                    weights: vec![vec![1.0], vec![-1.0]],
                    bias: vec![0.0, 0.0],
                },
                Layer {
                    weights: vec![vec![1.0, 1.0]],
                    bias: vec![0.0],
                },
            ],
            input_scaler: InputScaler::identity(1),
            meta: MlpMeta::default(),
        };
        let t = p.forward(&[-3.0]).unwrap();
        assert_eq!(t.z[0], vec![-3.0, 3.0]);
        assert_eq!(t.s[0], vec![0.0, 3.0]);
        assert_eq!(t.h, 3.0);
        assert!(matches!(p.forward(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for net in 0..10 {
            let p = random_net(4, &[6, 5, 3], net);
            for _ in 0..100 {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let a = p.predict(&x).unwrap();
                let b = naive_forward(&p, &x);
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn relu_identities() {
        let p = random_net(3, &[6, 6, 6], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t = p.forward(&x).unwrap();
            for (z, s) in t.z.iter().zip(&t.s) {
                for (zi, si) in z.iter().zip(s) {
                    assert!(*si >= 0.0);
                    assert!(si - zi >= 0.0);
                    if *zi >= 0.0 {
                        assert_eq!(si, zi);
                    }
                }
            }
        }
    }

    #[test]
    fn fits_affine_target() {
        let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![-1.0 + 2.0 * i as f64 / 199.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] + 1.0).collect();
        let cfg = TrainConfig {
            epochs: 400,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 3,
        };
        let out = train(&xs, &ys, &[4], &cfg).unwrap();
        assert!(out.best_validation_mse <= 1e-4, "{}", out.best_validation_mse);
        assert!(out.best_validation_mse <= out.initial_validation_mse);
        assert_eq!(out.train_loss.len(), 400);
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 1.0]).collect();
        let ys: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let cfg = TrainConfig {
            epochs: 0,
            seed: 11,
            ..TrainConfig::default()
        };
        let out = train(&xs, &ys, &[3, 3], &cfg).unwrap();
        let init = MlpParams::initialize(2, &[3, 3], 11).unwrap();
        assert_eq!(out.params.hidden(), init.hidden());
        assert!(out.train_loss.is_empty());
        assert!(train(&[], &[], &[3], &cfg).is_err());
    }

    #[test]
    fn gradient_check_linear_and_random() {
        let linear = MlpParams::initialize(3, &[], 2).unwrap();
        assert!(gradient_check(&linear, &[0.3, -0.2, 0.9], 1e-6).unwrap() <= 1e-9);

        let p = random_net(8, &[6, 6, 6], 21);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        while checked < 20 {
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            match gradient_check(&p, &x, 1e-6) {
                Ok(err) => {
                    assert!(err <= 1e-4, "{err}");
                    checked += 1;
                }
                Err(Error::KinkProximity { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn gradient_check_reports_kinks() {
        let p = MlpParams {
            layers: vec![
                Layer {
                    weights: vec![vec![1.0]],
                    bias: vec![0.0],
                },
                Layer {
                    weights: vec![vec![1.0]],
                    bias: vec![0.0],
                },
            ],
            input_scaler: InputScaler::identity(1),
            meta: MlpMeta::default(),
        };
        assert!(matches!(
            gradient_check(&p, &[0.0], 1e-6),
            Err(Error::KinkProximity { layer: 0, neuron: 0, .. })
        ));
    }

    #[test]
    fn weights_json_round_trip() {
        let p = random_net(2, &[3], 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        p.to_json_file(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["\"layers\"", "\"input_scaler\"", "\"meta\""] {
            assert!(text.contains(key));
        }
        assert_eq!(MlpParams::from_json_file(&path).unwrap(), p);
    }

    proptest! {
        #[test]
        fn standardize_round_trip(x in prop::collection::vec(-100.0f64..100.0, 4)) {
            let s = InputScaler { shift: vec![1.0, -2.0, 0.5, 3.0], scale: vec![2.0, 0.5, 1.0, 7.0] };
            let back = s.unstandardize(&s.standardize(&x));
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
