//! Trainable models and evaluation metrics.
//!
//! Training is deliberately plain: full-batch gradient descent, zero
//! initialization, fixed 0.5 threshold. Bit-exact determinism matters more
//! here than convergence speed, because the multi-query optimizer promises
//! byte-identical scores between shared and naive execution.

use crate::ir::plan::ModelConfig;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use std::collections::BTreeMap;
use thiserror::Error;

/// Dense row-major feature matrix. Row order matches the feature relation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot train on an empty matrix")]
    EmptyTrainingSet,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("no rows carry the privileged group \"{0}\"")]
    MissingGroup(String),
    #[error("positive rate undefined: no {0} rows")]
    UndefinedRate(&'static str),
}

/// A fitted model. Weights are frozen at training time; prediction is pure.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Logistic { weights: Vec<f64>, bias: f64, lr: f64, epochs: u32, seed: u64 },
    Majority { positive_rate: f64 },
    Stump { feature: usize, threshold: f64, positive_above: bool },
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean log-loss of a logistic model at (weights, bias).
pub fn logistic_loss(x: &FeatureMatrix, y: &[f64], weights: &[f64], bias: f64) -> f64 {
    let n = x.n_rows() as f64;
    let mut total = 0.0;
    for (row, label) in x.rows.iter().zip(y) {
        let z: f64 = row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() + bias;
        let p = sigmoid(z);
        // clamp away from 0/1 so the loss stays finite on separable data
        let p = p.clamp(1e-15, 1.0 - 1e-15);
        total += -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
    }
    total / n
}

/// Analytic gradient of the mean log-loss: (d/dw, d/db).
pub fn logistic_gradient(
    x: &FeatureMatrix,
    y: &[f64],
    weights: &[f64],
    bias: f64,
) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut grad_w = vec![0.0; x.n_cols()];
    let mut grad_b = 0.0;
    for (row, label) in x.rows.iter().zip(y) {
        let z: f64 = row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() + bias;
        let err = sigmoid(z) - label;
        for (g, a) in grad_w.iter_mut().zip(row) {
            *g += err * a;
        }
        grad_b += err;
    }
    for g in &mut grad_w {
        *g /= n;
    }
    (grad_w, grad_b / n)
}

/// Trains a model. Labels arrive as 0.0/1.0; the caller guarantees alignment
/// with the matrix rows.
pub fn train(config: &ModelConfig, x: &FeatureMatrix, y: &[f64]) -> Result<Model, ModelError> {
    if x.n_rows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.n_rows() != y.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} feature rows vs {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    match config {
        ModelConfig::LogisticRegression { lr, epochs, seed } => {
            let mut weights = vec![0.0; x.n_cols()];
            let mut bias = 0.0;
            for _ in 0..*epochs {
                let (gw, gb) = logistic_gradient(x, y, &weights, bias);
                for (w, g) in weights.iter_mut().zip(&gw) {
                    *w -= lr * g;
                }
                bias -= lr * gb;
            }
            Ok(Model::Logistic { weights, bias, lr: *lr, epochs: *epochs, seed: *seed })
        }
        ModelConfig::Majority => {
            let positive_rate = y.iter().sum::<f64>() / y.len() as f64;
            Ok(Model::Majority { positive_rate })
        }
        ModelConfig::DecisionStump => Ok(train_stump(x, y)),
    }
}

/// Exhaustive single-feature threshold search; ties resolve to the smallest
/// (feature, threshold) with the positive-above polarity preferred, so the
/// result is deterministic.
fn train_stump(x: &FeatureMatrix, y: &[f64]) -> Model {
    let n = x.n_rows();
    let mut best = (0usize, f64::NEG_INFINITY, true);
    let mut best_correct = 0usize;
    for feature in 0..x.n_cols() {
        let mut values: Vec<f64> = x.rows.iter().map(|r| r[feature]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in features"));
        values.dedup();
        let mut thresholds = vec![f64::NEG_INFINITY];
        thresholds.extend(values.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        for threshold in thresholds {
            for positive_above in [true, false] {
                let correct = x
                    .rows
                    .iter()
                    .zip(y)
                    .filter(|(row, label)| {
                        let predicted = (row[feature] >= threshold) == positive_above;
                        predicted == (**label == 1.0)
                    })
                    .count();
                if correct > best_correct {
                    best_correct = correct;
                    best = (feature, threshold, positive_above);
                }
            }
        }
    }
    let _ = n;
    Model::Stump { feature: best.0, threshold: best.1, positive_above: best.2 }
}

/// Per-row positive-class probability.
pub fn predict(model: &Model, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
    match model {
        Model::Logistic { weights, .. } if weights.len() != x.n_cols() => {
            Err(ModelError::DimensionMismatch(format!(
                "model has {} weights, matrix has {} columns",
                weights.len(),
                x.n_cols()
            )))
        }
        Model::Logistic { weights, bias, .. } => Ok(x
            .rows
            .iter()
            .map(|row| {
                sigmoid(row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() + bias)
            })
            .collect()),
        Model::Majority { positive_rate } => Ok(vec![*positive_rate; x.n_rows()]),
        Model::Stump { feature, threshold, positive_above } => {
            if *feature >= x.n_cols() {
                return Err(ModelError::DimensionMismatch(format!(
                    "stump feature {} out of range for {} columns",
                    feature,
                    x.n_cols()
                )));
            }
            Ok(x.rows
                .iter()
                .map(|row| {
                    if (row[*feature] >= *threshold) == *positive_above {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect())
        }
    }
}

/// Class label at the fixed 0.5 threshold.
pub fn classify(probability: f64) -> bool {
    probability >= 0.5
}

pub fn accuracy(predictions: &[bool], labels: &[bool]) -> f64 {
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / predictions.len() as f64
}

/// Demographic parity difference: P(positive | unprivileged) minus
/// P(positive | privileged). Rows with no group (None) are excluded.
pub fn metric_dpd(
    predictions: &[bool],
    groups: &[Option<String>],
    privileged: &str,
) -> Result<f64, MetricError> {
    let mut priv_pos = 0u64;
    let mut priv_total = 0u64;
    let mut unpriv_pos = 0u64;
    let mut unpriv_total = 0u64;
    for (prediction, group) in predictions.iter().zip(groups) {
        let Some(group) = group else { continue };
        if group == privileged {
            priv_total += 1;
            priv_pos += u64::from(*prediction);
        } else {
            unpriv_total += 1;
            unpriv_pos += u64::from(*prediction);
        }
    }
    if priv_total == 0 {
        return Err(MetricError::MissingGroup(privileged.to_string()));
    }
    if unpriv_total == 0 {
        return Err(MetricError::UndefinedRate("unprivileged"));
    }
    let priv_rate = priv_pos as f64 / priv_total as f64;
    let unpriv_rate = unpriv_pos as f64 / unpriv_total as f64;
    Ok(unpriv_rate - priv_rate)
}

/// The final pipeline output: one value per requested metric, keys sorted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport(pub BTreeMap<String, f64>);

impl ScoreReport {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.0.get(metric).copied()
    }

    pub fn metrics(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl Serialize for Model {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(4))?;
        match self {
            Model::Logistic { weights, bias, lr, epochs, seed } => {
                map.serialize_entry("kind", "logistic_regression")?;
                map.serialize_entry("weights", weights)?;
                map.serialize_entry("bias", bias)?;
                let mut config = BTreeMap::new();
                config.insert("epochs", serde_json::json!(epochs));
                config.insert("lr", serde_json::json!(lr));
                config.insert("seed", serde_json::json!(seed));
                map.serialize_entry("config", &config)?;
            }
            Model::Majority { positive_rate } => {
                map.serialize_entry("kind", "majority")?;
                map.serialize_entry("weights", &Vec::<f64>::new())?;
                map.serialize_entry("bias", positive_rate)?;
                map.serialize_entry("config", &BTreeMap::<&str, f64>::new())?;
            }
            Model::Stump { feature, threshold, positive_above } => {
                map.serialize_entry("kind", "decision_stump")?;
                map.serialize_entry("weights", &Vec::<f64>::new())?;
                map.serialize_entry("bias", threshold)?;
                let mut config = BTreeMap::new();
                config.insert("feature", serde_json::json!(feature));
                config.insert("positive_above", serde_json::json!(positive_above));
                map.serialize_entry("config", &config)?;
            }
        }
        map.end()
    }
}
