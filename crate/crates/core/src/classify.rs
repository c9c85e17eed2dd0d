//! Binary gender classifier: a two-layer perceptron trained with mean binary
//! cross-entropy and mini-batch gradient descent.
//!
//! `p(masculine | x) = sigmoid(w2 · act(W1 x + b1) + b2)`. Masculine is the
//! positive class (target 1), feminine the negative (target 0).

use std::fs;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embed::FeatureVector;
use crate::error::{Error, Result};
use crate::lexicon::{Gender, Noun};
use crate::seed;

pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at pre-activation `x`.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }
}

fn default_learning_rate() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    200
}
fn default_batch_size() -> usize {
    32
}
fn default_hidden_size() -> usize {
    64
}
fn default_l2() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_hidden_size")]
    pub hidden_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_l2")]
    pub l2_penalty: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            hidden_size: default_hidden_size(),
            seed: 0,
            l2_penalty: default_l2(),
            activation: Activation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::Config(
                "train.batch_size and train.hidden_size must be positive".into(),
            ));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Config("train.l2_penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// Weights of the two-layer network. `w1` is row-major `hidden × input`,
/// `w2` is the single output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub input_dim: usize,
    pub hidden_size: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub seed: u64,
    pub activation: Activation,
}

impl ClassifierParams {
    pub fn zeros(input_dim: usize, hidden_size: usize, activation: Activation) -> Self {
        ClassifierParams {
            input_dim,
            hidden_size,
            w1: vec![0.0; input_dim * hidden_size],
            b1: vec![0.0; hidden_size],
            w2: vec![0.0; hidden_size],
            b2: 0.0,
            seed: 0,
            activation,
        }
    }

    pub fn w1_row(&self, h: usize) -> &[f64] {
        &self.w1[h * self.input_dim..(h + 1) * self.input_dim]
    }

    pub fn is_finite(&self) -> bool {
        self.b2.is_finite() && self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations, activations and the output logit for one input.
    fn pass(&self, x: &[f64], pre: &mut [f64], hidden: &mut [f64]) -> f64 {
        let mut logit = self.b2;
        for h in 0..self.hidden_size {
            let z = self.b1[h] + dot(self.w1_row(h), x);
            pre[h] = z;
            hidden[h] = self.activation.apply(z);
            logit += self.w2[h] * hidden[h];
        }
        logit
    }

    pub fn save(&self, path: &Path, config: &TrainConfig) -> Result<()> {
        let file = ParamsFile {
            version: PARAMS_VERSION,
            dims: Dims {
                input: self.input_dim,
                hidden: self.hidden_size,
            },
            seed: self.seed,
            config: *config,
            weights: Weights {
                w1: self.w1.chunks(self.input_dim.max(1)).map(<[f64]>::to_vec).collect(),
                b1: self.b1.clone(),
                w2: vec![self.w2.clone()],
                b2: self.b2,
                activation: self.activation,
            },
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, serde_json::to_string_pretty(&file)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(ClassifierParams, TrainConfig)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ParamsFile = serde_json::from_str(&text)?;
        if file.version != PARAMS_VERSION {
            return Err(Error::Validation(format!(
                "unsupported params version {}",
                file.version
            )));
        }
        let Dims { input, hidden } = file.dims;
        let w = file.weights;
        let shapes_ok = w.w1.len() == hidden
            && w.w1.iter().all(|row| row.len() == input)
            && w.b1.len() == hidden
            && w.w2.len() == 1
            && w.w2[0].len() == hidden;
        if !shapes_ok {
            return Err(Error::Validation(format!(
                "{}: weight shapes disagree with dims",
                path.display()
            )));
        }
        let params = ClassifierParams {
            input_dim: input,
            hidden_size: hidden,
            w1: w.w1.into_iter().flatten().collect(),
            b1: w.b1,
            w2: w.w2.into_iter().next().expect("checked"),
            b2: w.b2,
            seed: file.seed,
            activation: w.activation,
        };
        if !params.is_finite() {
            return Err(Error::Validation(format!("{}: non-finite weights", path.display())));
        }
        Ok((params, file.config))
    }
}

#[derive(Serialize, Deserialize)]
struct Dims {
    input: usize,
    hidden: usize,
}

#[derive(Serialize, Deserialize)]
struct Weights {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: f64,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    version: u32,
    dims: Dims,
    seed: u64,
    config: TrainConfig,
    weights: Weights,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]`, computed from the logit.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Uniform `±1/sqrt(fan_in)` weights, zero biases.
pub fn init_params(input_dim: usize, config: &TrainConfig) -> Result<ClassifierParams> {
    if input_dim == 0 {
        return Err(Error::Validation("input dimension must be at least 1".into()));
    }
    config.validate()?;
    let hidden = config.hidden_size;
    let mut rng = seed::rng(config.seed);
    let bound1 = 1.0 / (input_dim as f64).sqrt();
    let bound2 = 1.0 / (hidden as f64).sqrt();
    let u1 = Uniform::new_inclusive(-bound1, bound1).expect("finite bounds");
    let u2 = Uniform::new_inclusive(-bound2, bound2).expect("finite bounds");
    let w1 = (0..hidden * input_dim).map(|_| u1.sample(&mut rng)).collect();
    let w2 = (0..hidden).map(|_| u2.sample(&mut rng)).collect();
    Ok(ClassifierParams {
        input_dim,
        hidden_size: hidden,
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: 0.0,
        seed: config.seed,
        activation: config.activation,
    })
}

/// Probability that `x` is masculine.
pub fn forward(params: &ClassifierParams, x: &[f64]) -> Result<f64> {
    params.check_input(x)?;
    let mut pre = vec![0.0; params.hidden_size];
    let mut hidden = vec![0.0; params.hidden_size];
    Ok(sigmoid(params.pass(x, &mut pre, &mut hidden)))
}

/// Gradient of the training objective, shaped like [`ClassifierParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Mean BCE over `inputs` plus `l2/2 * (|W1|² + |w2|²)`. Biases are not
/// penalized.
pub fn loss(params: &ClassifierParams, inputs: &[Vec<f64>], targets: &[f64], l2: f64) -> Result<f64> {
    Ok(loss_and_gradients(params, inputs, targets, l2)?.0)
}

pub fn loss_and_gradients(
    params: &ClassifierParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
    l2: f64,
) -> Result<(f64, Gradients)> {
    let batch: Vec<usize> = (0..inputs.len()).collect();
    batch_loss_and_gradients(params, inputs, targets, &batch, l2)
}

fn batch_loss_and_gradients(
    params: &ClassifierParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
    batch: &[usize],
    l2: f64,
) -> Result<(f64, Gradients)> {
    if inputs.len() != targets.len() {
        return Err(Error::Validation(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let (d, h_size) = (params.input_dim, params.hidden_size);
    let mut grads = Gradients {
        w1: vec![0.0; d * h_size],
        b1: vec![0.0; h_size],
        w2: vec![0.0; h_size],
        b2: 0.0,
    };
    let mut pre = vec![0.0; h_size];
    let mut hidden = vec![0.0; h_size];
    let mut total = 0.0;
    for &i in batch {
        let x = &inputs[i];
        params.check_input(x)?;
        let y = targets[i];
        let logit = params.pass(x, &mut pre, &mut hidden);
        total += bce_with_logit(logit, y);
        let d_logit = sigmoid(logit) - y;
        grads.b2 += d_logit;
        for h in 0..h_size {
            grads.w2[h] += d_logit * hidden[h];
            let d_pre = d_logit * params.w2[h] * params.activation.derivative(pre[h]);
            if d_pre != 0.0 {
                grads.b1[h] += d_pre;
                for (g, &xv) in grads.w1[h * d..(h + 1) * d].iter_mut().zip(x) {
                    *g += d_pre * xv;
                }
            }
        }
    }
    let n = batch.len() as f64;
    grads.b2 /= n;
    for g in grads
        .w1
        .iter_mut()
        .chain(grads.b1.iter_mut())
        .chain(grads.w2.iter_mut())
    {
        *g /= n;
    }
    let mut penalty = 0.0;
    if l2 > 0.0 {
        for (g, &w) in grads
            .w1
            .iter_mut()
            .zip(&params.w1)
            .chain(grads.w2.iter_mut().zip(&params.w2))
        {
            *g += l2 * w;
            penalty += w * w;
        }
    }
    Ok((total / n + 0.5 * l2 * penalty, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ClassifierParams,
    /// Full-data objective after each epoch.
    pub loss_curve: Vec<f64>,
}

/// Mini-batch gradient descent on raw input rows.
pub fn train_arrays(inputs: &[Vec<f64>], labels: &[Gender], config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if inputs.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if inputs.len() < 2 {
        return Err(Error::Validation("training needs at least 2 examples".into()));
    }
    if !(labels.contains(&Gender::Masculine) && labels.contains(&Gender::Feminine)) {
        return Err(Error::Validation("training set contains a single class".into()));
    }
    let dim = inputs[0].len();
    if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: bad.len(),
        });
    }
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("training inputs contain non-finite values".into()));
    }

    let mut params = init_params(dim, config)?;
    let targets: Vec<f64> = labels.iter().map(|g| g.target()).collect();
    let mut shuffle_rng = seed::rng(seed::derive_seed(config.seed, &["shuffle"]));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let (batch_loss, grads) = batch_loss_and_gradients(&params, inputs, &targets, batch, config.l2_penalty)?;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_no} (learning rate {})",
                    config.learning_rate
                )));
            }
            let lr = config.learning_rate;
            for (w, g) in params.w1.iter_mut().zip(&grads.w1) {
                *w -= lr * g;
            }
            for (w, g) in params.b1.iter_mut().zip(&grads.b1) {
                *w -= lr * g;
            }
            for (w, g) in params.w2.iter_mut().zip(&grads.w2) {
                *w -= lr * g;
            }
            params.b2 -= lr * grads.b2;
        }
        let epoch_loss = loss(&params, inputs, &targets, config.l2_penalty)?;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite parameters or loss after epoch {epoch} (last finite loss {:?})",
                loss_curve.last()
            )));
        }
        loss_curve.push(epoch_loss);
    }
    Ok(TrainedModel { params, loss_curve })
}

/// Train on feature vectors, labelled by each noun's gender.
pub fn train(features: &[FeatureVector], config: &TrainConfig) -> Result<TrainedModel> {
    let inputs: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let labels: Vec<Gender> = features.iter().map(|f| f.noun.gender).collect();
    train_arrays(&inputs, &labels, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub noun: Noun,
    pub probability_masculine: f64,
    pub predicted: Gender,
}

/// Masculine when the probability is at least one half.
pub fn decide(probability_masculine: f64) -> Gender {
    if probability_masculine >= 0.5 {
        Gender::Masculine
    } else {
        Gender::Feminine
    }
}

pub fn predict(params: &ClassifierParams, features: &[FeatureVector]) -> Result<Vec<Prediction>> {
    features
        .iter()
        .map(|f| {
            let p = forward(params, &f.values)?;
            Ok(Prediction {
                noun: f.noun.clone(),
                probability_masculine: p,
                predicted: decide(p),
            })
        })
        .collect()
}

/// Per-column affine rescaling fitted on training inputs. Columns that are
/// constant over the training set carry no signal and map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Multiplier applied after centering (`1/std`, or 0 for constant columns).
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Validation("cannot fit a standardizer on zero rows".into()));
        };
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(*row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(*row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let std = (s / n).sqrt();
                if std > 1e-12 * m.abs().max(1.0) {
                    1.0 / std
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn fit_features(features: &[FeatureVector]) -> Result<Self> {
        let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
        Self::fit(&rows)
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }

    pub fn transform_feature(&self, feature: &FeatureVector) -> FeatureVector {
        FeatureVector {
            values: self.transform(&feature.values),
            ..feature.clone()
        }
    }
}
