//! Logistic-regression classifier trained by single-example SGD with momentum.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::engine::LabeledSet;
use crate::rng::{self, Stream};

/// Probabilities are clamped to this margin inside the loss only.
pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("labeled item `{0}` has no resolvable features")]
    Unresolved(String),
    #[error("feature dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("cannot train on an empty labeled set")]
    Empty,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub l2_normalize_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            momentum: 0.9,
            epochs: 100,
            seed: 0,
            l2_normalize_features: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ClassifierError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ClassifierError::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Looks up feature vectors by item id.
pub trait FeatureResolver {
    fn features(&self, id: &str) -> Option<&[f64]>;
}

impl FeatureResolver for Corpus {
    fn features(&self, id: &str) -> Option<&[f64]> {
        self.get(id).map(|it| it.features.as_slice())
    }
}

impl FeatureResolver for HashMap<String, Vec<f64>> {
    fn features(&self, id: &str) -> Option<&[f64]> {
        self.get(id).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "normalized")]
    pub normalize: bool,
    #[serde(skip)]
    pub trained_on_count: usize,
}

#[derive(Serialize)]
struct ModelDump<'a> {
    d: usize,
    weights: &'a [f64],
    bias: f64,
    normalized: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn normalized(x: &[f64], normalize: bool) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if normalize && norm > 0.0 {
        x.iter().map(|v| v / norm).collect()
    } else {
        x.to_vec()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Clamped logistic loss of one example and its gradient with respect to `(w, b)`.
///
/// The gradient is the unclamped `(p - y) * x`; it agrees with the loss wherever
/// the clamp is inactive.
pub fn loss_and_grad(w: &[f64], b: f64, x: &[f64], y: bool) -> (f64, Vec<f64>, f64) {
    let p = sigmoid(dot(w, x) + b);
    let pc = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    let loss = if y { -pc.ln() } else { -(1.0 - pc).ln() };
    let g = p - if y { 1.0 } else { 0.0 };
    (loss, x.iter().map(|v| g * v).collect(), g)
}

impl BinaryClassifier {
    pub fn zeros(d: usize, normalize: bool) -> Self {
        Self {
            weights: vec![0.0; d],
            bias: 0.0,
            normalize,
            trained_on_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, features: &[f64]) -> Result<f64, ClassifierError> {
        if features.len() != self.weights.len() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.weights.len(),
                found: features.len(),
            });
        }
        let x = normalized(features, self.normalize);
        Ok(dot(&self.weights, &x) + self.bias)
    }

    /// `(p0, p1)` with `p1 = sigmoid(w.x + b)`.
    pub fn predict_proba(&self, features: &[f64]) -> Result<(f64, f64), ClassifierError> {
        let p1 = sigmoid(self.logit(features)?);
        Ok((1.0 - p1, p1))
    }

    /// Mean clamped logistic loss over `(features, label)` pairs.
    pub fn mean_loss<'a>(
        &self,
        examples: impl IntoIterator<Item = (&'a [f64], bool)>,
    ) -> Result<f64, ClassifierError> {
        let mut total = 0.0;
        let mut n = 0usize;
        for (x, y) in examples {
            let x = normalized(x, self.normalize);
            total += loss_and_grad(&self.weights, self.bias, &x, y).0;
            n += 1;
        }
        Ok(total / n.max(1) as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelDump {
            d: self.dim(),
            weights: &self.weights,
            bias: self.bias,
            normalized: self.normalize,
        })
        .expect("model serializes")
    }
}

/// Train from zero weights on every entry of `labeled`.
pub fn train(
    labeled: &LabeledSet,
    resolver: &dyn FeatureResolver,
    cfg: &TrainConfig,
) -> Result<BinaryClassifier, ClassifierError> {
    let examples = labeled
        .entries()
        .iter()
        .map(|(id, y)| {
            resolver
                .features(id)
                .map(|x| (x, *y))
                .ok_or_else(|| ClassifierError::Unresolved(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    train_examples(&examples, cfg)
}

pub fn train_examples(
    examples: &[(&[f64], bool)],
    cfg: &TrainConfig,
) -> Result<BinaryClassifier, ClassifierError> {
    cfg.validate()?;
    let Some(first) = examples.first() else {
        return Err(ClassifierError::Empty);
    };
    let d = first.0.len();
    let xs: Vec<(Vec<f64>, bool)> = examples
        .iter()
        .map(|(x, y)| {
            if x.len() != d {
                return Err(ClassifierError::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
            Ok((normalized(x, cfg.l2_normalize_features), *y))
        })
        .collect::<Result<_, _>>()?;

    let mut model = BinaryClassifier::zeros(d, cfg.l2_normalize_features);
    let mut vel_w = vec![0.0; d];
    let mut vel_b = 0.0;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut rng = rng::rng_for(cfg.seed, Stream::Train, epoch as u64);
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = &xs[i];
            let (loss, gw, gb) = loss_and_grad(&model.weights, model.bias, x, *y);
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { step });
            }
            for ((w, v), g) in model.weights.iter_mut().zip(vel_w.iter_mut()).zip(&gw) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *w += *v;
            }
            vel_b = cfg.momentum * vel_b - cfg.learning_rate * gb;
            model.bias += vel_b;
            step += 1;
        }
    }
    if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
        return Err(ClassifierError::NonFiniteLoss { step });
    }
    model.trained_on_count = xs.len();
    Ok(model)
}
