//! Fully connected ReLU network with a softmax output, trained by
//! mini-batch SGD on mean cross-entropy plus an L2 penalty on the weights.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hurdat2::StatusCode;
use crate::labels::{argmax, LabelSet};
use crate::matrix::{check_dim, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Penalty `λ/2 · ΣW²`; biases are not penalized.
    pub l2: f64,
    pub seed: u64,
    /// Multiplier on the He initialization standard deviation.
    pub init_scale: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![64, 32],
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 300,
            l2: 1e-4,
            seed: 42,
            init_scale: 1.0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("mlp hidden layer sizes must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("mlp learning_rate must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("mlp batch_size must be at least 1".into()));
        }
        if !(self.l2 >= 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::InvalidConfig("mlp l2 and init_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// `weights` is `out × in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Layer {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (o, b) in self.bias.iter().enumerate() {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(b + w.iter().zip(input).map(|(a, x)| a * x).sum::<f64>());
        }
    }
}

/// Same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub classes: LabelSet,
    pub layers: Vec<Layer>,
    pub config: MlpConfig,
    /// Mean training objective before training and after each epoch.
    pub train_loss: Vec<f64>,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// `ln Σ exp(z) − z[label]`, computed stably.
fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

impl MlpModel {
    /// He-initialized network from the seeded generator.
    pub fn new(n_features: usize, classes: LabelSet, config: &MlpConfig) -> Result<MlpModel> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self::init(n_features, classes, config, &mut rng))
    }

    fn init(n_features: usize, classes: LabelSet, config: &MlpConfig, rng: &mut ChaCha8Rng) -> MlpModel {
        let mut sizes = vec![n_features];
        sizes.extend(&config.hidden);
        sizes.push(classes.len());
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut layer = Layer::zeros(w[0], w[1]);
                let std = config.init_scale * (2.0 / w[0] as f64).sqrt();
                if std > 0.0 {
                    let normal = Normal::new(0.0, std).expect("finite positive std");
                    layer.weights.iter_mut().for_each(|v| *v = normal.sample(rng));
                }
                layer
            })
            .collect();
        MlpModel {
            classes,
            layers,
            config: config.clone(),
            train_loss: Vec::new(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].inputs
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut a, &mut next);
        }
        a
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_dim(self.n_features(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        Ok(z)
    }

    fn penalty(&self) -> f64 {
        0.5 * self.config.l2 * self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum::<f64>()
    }

    /// Mean cross-entropy over the rows plus the L2 penalty.
    pub fn loss(&self, rows: &[&[f64]], labels: &[usize]) -> Result<f64> {
        check_dim(rows.len(), labels.len())?;
        if rows.is_empty() {
            return Err(Error::InsufficientData("loss over an empty batch".into()));
        }
        let mut total = 0.0;
        for (x, &y) in rows.iter().zip(labels) {
            self.check_input(x)?;
            total += cross_entropy(&self.logits(x), y);
        }
        Ok(total / rows.len() as f64 + self.penalty())
    }

    /// Gradient of [`MlpModel::loss`] with respect to every parameter.
    pub fn backward(&self, rows: &[&[f64]], labels: &[usize]) -> Result<Gradients> {
        check_dim(rows.len(), labels.len())?;
        if rows.is_empty() {
            return Err(Error::InsufficientData("backward over an empty batch".into()));
        }
        let n_layers = self.layers.len();
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        let scale = 1.0 / rows.len() as f64;
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        let mut delta = Vec::new();
        let mut prev = Vec::new();
        for (x, &y) in rows.iter().zip(labels) {
            self.check_input(x)?;
            if y >= self.classes.len() {
                return Err(Error::InvalidConfig("label index out of range".into()));
            }
            acts[0].clear();
            acts[0].extend_from_slice(x);
            for (i, layer) in self.layers.iter().enumerate() {
                let (done, rest) = acts.split_at_mut(i + 1);
                layer.apply(&done[i], &mut rest[0]);
                if i + 1 < n_layers {
                    rest[0].iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            delta.clear();
            delta.extend_from_slice(&acts[n_layers]);
            softmax_in_place(&mut delta);
            delta[y] -= 1.0;
            delta.iter_mut().for_each(|d| *d *= scale);
            for i in (0..n_layers).rev() {
                let layer = &self.layers[i];
                let g = &mut grads[i];
                let input = &acts[i];
                for (o, &d) in delta.iter().enumerate() {
                    g.bias[o] += d;
                    if d != 0.0 {
                        let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        row.iter_mut().zip(input).for_each(|(w, a)| *w += d * a);
                    }
                }
                if i == 0 {
                    break;
                }
                prev.clear();
                prev.resize(layer.inputs, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                }
                // ReLU derivative, taken as 0 at the kink.
                for (p, a) in prev.iter_mut().zip(&acts[i]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
        let l2 = self.config.l2;
        if l2 > 0.0 {
            for (g, l) in grads.iter_mut().zip(&self.layers) {
                g.weights.iter_mut().zip(&l.weights).for_each(|(g, w)| *g += l2 * w);
            }
        }
        Ok(Gradients { layers: grads })
    }

    /// `θ ← θ − lr · g`.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= learning_rate * d);
            l.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= learning_rate * d);
        }
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let expected: usize = self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        check_dim(expected, params.len())?;
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = *it.next().unwrap());
        }
        Ok(())
    }

    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        self.check_input(x)?;
        Ok(argmax(&self.logits(x)))
    }

    /// Per-epoch training loss as `epoch,loss` CSV.
    pub fn write_loss_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "loss"])?;
        for (epoch, loss) in self.train_loss.iter().enumerate() {
            w.write_record([epoch.to_string(), format!("{loss:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains on encoded labels. Initialization and shuffling share one seeded
/// generator, so a fixed seed fixes the final parameters.
pub fn fit_mlp(x: &Matrix, labels: &[usize], classes: LabelSet, config: &MlpConfig) -> Result<MlpModel> {
    config.validate()?;
    check_dim(x.rows(), labels.len())?;
    if classes.len() < 2 {
        return Err(Error::InsufficientData("mlp needs at least 2 classes".into()));
    }
    if x.is_empty() {
        return Err(Error::InsufficientData("mlp needs training rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::init(x.cols(), classes, config, &mut rng);
    let rows: Vec<&[f64]> = x.iter_rows().collect();
    model.train_loss.push(model.loss(&rows, labels)?);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut batch_rows = Vec::with_capacity(config.batch_size);
    let mut batch_labels = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch_rows.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_rows.push(rows[i]);
                batch_labels.push(labels[i]);
            }
            let g = model.backward(&batch_rows, &batch_labels)?;
            model.sgd_step(&g, config.learning_rate);
        }
        let loss = model.loss(&rows, labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite);
        }
        model.train_loss.push(loss);
    }
    Ok(model)
}

pub fn predict_mlp(model: &MlpModel, x: &[f64]) -> Result<(StatusCode, Vec<f64>)> {
    let p = model.forward(x)?;
    Ok((model.classes.get(argmax(&p)).clone(), p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_classes() -> LabelSet {
        LabelSet::new(vec![StatusCode::HU, StatusCode::TS])
    }

    #[test]
    fn zero_weights_give_uniform() {
        let cfg = MlpConfig { init_scale: 0.0, ..MlpConfig::default() };
        let classes = LabelSet::new(vec![StatusCode::HU, StatusCode::TS, StatusCode::TD]);
        let m = MlpModel::new(4, classes, &cfg).unwrap();
        let p = m.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_2_2_2() {
        let cfg = MlpConfig { hidden: vec![2], ..MlpConfig::default() };
        let mut m = MlpModel::new(2, two_classes(), &cfg).unwrap();
        m.layers[0].weights = vec![1.0, -1.0, 0.5, 2.0];
        m.layers[0].bias = vec![0.0, -1.0];
        m.layers[1].weights = vec![1.0, 0.0, -1.0, 1.0];
        m.layers[1].bias = vec![0.5, 0.0];
        // x = (1, 2): h = relu(-1, 3.5) = (0, 3.5); z = (0.5, 3.5)
        let p = m.forward(&[1.0, 2.0]).unwrap();
        let e = (-3.0f64).exp();
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = MlpModel::new(3, two_classes(), &MlpConfig::default()).unwrap();
        for k in 0..20 {
            let x = [k as f64 * 0.7 - 5.0, (k as f64).sin() * 10.0, 1.0 / (k + 1) as f64];
            let p = m.forward(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
        assert!(m.forward(&[1.0, 2.0]).is_err());
        assert!(matches!(m.forward(&[f64::NAN, 0.0, 0.0]), Err(Error::NonFinite)));
    }

    #[test]
    fn zero_rate_step_is_identity() {
        let mut m = MlpModel::new(2, two_classes(), &MlpConfig::default()).unwrap();
        let before = m.parameters();
        let g = m.backward(&[&[1.0, 2.0]], &[1]).unwrap();
        m.sgd_step(&g, 0.0);
        assert_eq!(before, m.parameters());
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let m = MlpModel::new(2, two_classes(), &MlpConfig::default()).unwrap();
        let rows: [&[f64]; 2] = [&[1.0, 2.0], &[-0.5, 0.3]];
        let g1 = m.backward(&rows, &[0, 1]).unwrap().flatten();
        let doubled: [&[f64]; 4] = [rows[0], rows[1], rows[0], rows[1]];
        let g2 = m.backward(&doubled, &[0, 1, 0, 1]).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn small_init_epoch_zero_loss_is_ln_k() {
        let cfg = MlpConfig { init_scale: 1e-3, epochs: 0, ..MlpConfig::default() };
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]).unwrap();
        let classes = LabelSet::new(vec![StatusCode::HU, StatusCode::TS, StatusCode::TD]);
        let m = fit_mlp(&x, &[0, 1, 2], classes, &cfg).unwrap();
        assert!((m.train_loss[0] - 3f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.9, 0.2], [0.1, 0.8]]).unwrap();
        let cfg = MlpConfig { epochs: 5, batch_size: 2, ..MlpConfig::default() };
        let a = fit_mlp(&x, &[0, 1, 1, 0], two_classes(), &cfg).unwrap();
        let b = fit_mlp(&x, &[0, 1, 1, 0], two_classes(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_loss.len(), 6);
        let mut buf = Vec::new();
        a.write_loss_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }
}
