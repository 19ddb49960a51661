//! L2-regularized binary logistic regression over sparse features.
//!
//! Training minimizes `mean(cross_entropy) + (l2_lambda / 2) * ||w||^2` (the
//! bias is not penalized) with mini-batch gradient descent over a seeded
//! shuffle of the examples. Training stops early once an epoch improves the
//! full objective by less than `tolerance`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tfidf::SparseVector;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
}

impl Default for LinearTrainConfig {
    fn default() -> Self {
        LinearTrainConfig {
            learning_rate: 0.1,
            epochs: 100,
            l2_lambda: 1e-4,
            tolerance: 1e-6,
            seed: 0,
            batch_size: Some(32),
        }
    }
}

impl LinearTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.l2_lambda.is_nan() || self.l2_lambda < 0.0 || self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::invalid("l2_lambda and tolerance must be non-negative"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    weights: Vec<f64>,
    bias: f64,
}

/// Logistic function; exact limits for large `|z|`, no overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_features(x: &SparseVector, n_features: usize) -> Result<()> {
    match x.max_index() {
        Some(i) if i >= n_features => Err(Error::Dimension(format!(
            "feature index {i} out of range for {n_features} features"
        ))),
        _ => Ok(()),
    }
}

fn check_training_set(x: &[SparseVector], y: &[u8], n_features: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} examples but {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::invalid("need at least 2 training examples"));
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {bad} is not binary")));
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(Error::invalid("training labels contain a single class"));
    }
    x.iter().try_for_each(|v| check_features(v, n_features))
}

impl LogRegModel {
    pub fn zeros(n_features: usize) -> Self {
        LogRegModel {
            weights: vec![0.0; n_features],
            bias: 0.0,
        }
    }

    pub fn from_parts(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights and bias must be finite"));
        }
        Ok(LogRegModel { weights, bias })
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    fn margin(&self, x: &SparseVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64> {
        check_features(x, self.n_features())?;
        Ok(sigmoid(self.margin(x)))
    }

    /// 1 iff the probability reaches `threshold`; a tie counts as positive.
    pub fn predict(&self, x: &SparseVector, threshold: f64) -> Result<u8> {
        Ok((self.predict_proba(x)? >= threshold) as u8)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&LogRegFile {
            format_version: FORMAT_VERSION,
            model_type: "logreg".into(),
            n_features: self.n_features(),
            bias: self.bias,
            weights: self.weights.clone(),
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: LogRegFile = serde_json::from_str(json)?;
        if file.format_version != FORMAT_VERSION || file.model_type != "logreg" {
            return Err(Error::Format(format!(
                "expected logreg format_version {FORMAT_VERSION}, found {} v{}",
                file.model_type, file.format_version
            )));
        }
        if file.weights.len() != file.n_features {
            return Err(Error::Format(format!(
                "n_features is {} but {} weights stored",
                file.n_features,
                file.weights.len()
            )));
        }
        LogRegModel::from_parts(file.weights, file.bias).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct LogRegFile {
    format_version: u32,
    model_type: String,
    n_features: usize,
    bias: f64,
    weights: Vec<f64>,
}

/// Regularized mean loss over the examples.
pub fn objective(model: &LogRegModel, x: &[SparseVector], y: &[u8], l2_lambda: f64) -> f64 {
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let z = model.margin(xi);
            softplus(z) - yi as f64 * z
        })
        .sum::<f64>()
        / x.len() as f64;
    let penalty: f64 = model.weights.iter().map(|w| w * w).sum();
    data + 0.5 * l2_lambda * penalty
}

/// Gradient of [`objective`] as `(d/dw, d/db)`.
pub fn gradient(model: &LogRegModel, x: &[SparseVector], y: &[u8], l2_lambda: f64) -> (Vec<f64>, f64) {
    let scale = 1.0 / x.len() as f64;
    let mut gw: Vec<f64> = model.weights.iter().map(|w| l2_lambda * w).collect();
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let r = (sigmoid(model.margin(xi)) - yi as f64) * scale;
        for (j, v) in xi.iter() {
            gw[j] += r * v;
        }
        gb += r;
    }
    (gw, gb)
}

pub fn train_logreg(
    x: &[SparseVector],
    y: &[u8],
    n_features: usize,
    config: &LinearTrainConfig,
) -> Result<LogRegModel> {
    train_logreg_traced(x, y, n_features, config).map(|(m, _)| m)
}

/// Like [`train_logreg`], also returning the objective before training and
/// after every completed epoch.
pub fn train_logreg_traced(
    x: &[SparseVector],
    y: &[u8],
    n_features: usize,
    config: &LinearTrainConfig,
) -> Result<(LogRegModel, Vec<f64>)> {
    config.validate()?;
    check_training_set(x, y, n_features)?;

    let mut model = LogRegModel::zeros(n_features);
    let mut rng = rng::seeded(config.seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let batch = config.batch_size.unwrap_or(x.len()).min(x.len());
    let lr = config.learning_rate;

    let mut history = vec![objective(&model, x, y, config.l2_lambda)];
    for _ in 0..config.epochs {
        if config.batch_size.is_some() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let scale = 1.0 / chunk.len() as f64;
            let residuals: Vec<f64> = chunk
                .iter()
                .map(|&i| (sigmoid(model.margin(&x[i])) - y[i] as f64) * scale)
                .collect();
            let shrink = 1.0 - lr * config.l2_lambda;
            if shrink != 1.0 {
                model.weights.iter_mut().for_each(|w| *w *= shrink);
            }
            for (&i, r) in chunk.iter().zip(&residuals) {
                for (j, v) in x[i].iter() {
                    model.weights[j] -= lr * r * v;
                }
            }
            model.bias -= lr * residuals.iter().sum::<f64>();
        }
        let loss = objective(&model, x, y, config.l2_lambda);
        let prev = *history.last().expect("history starts non-empty");
        history.push(loss);
        if prev - loss < config.tolerance {
            break;
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(pairs: &[(usize, f64)]) -> SparseVector {
        SparseVector::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect()).unwrap()
    }

    #[test]
    fn sigmoid_cases() {
        let m = LogRegModel::zeros(3);
        assert_eq!(m.predict_proba(&sv(&[(0, 2.0), (2, -1.0)])).unwrap(), 0.5);

        let far = LogRegModel::from_parts(vec![0.0], 1000.0).unwrap();
        let p = far.predict_proba(&SparseVector::default()).unwrap();
        assert_eq!(p, 1.0);
        let p = LogRegModel::from_parts(vec![0.0], -1000.0)
            .unwrap()
            .predict_proba(&SparseVector::default())
            .unwrap();
        assert_eq!(p, 0.0);

        let m = LogRegModel::from_parts(vec![1.0, -1.0], 0.0).unwrap();
        let p = m.predict_proba(&SparseVector::from_dense(&[2.0, 1.0])).unwrap();
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn threshold_convention() {
        let m = LogRegModel::zeros(1);
        let x = SparseVector::default();
        assert_eq!(m.predict(&x, 0.5).unwrap(), 1);
        let low = LogRegModel::from_parts(vec![0.0], (0.49f64 / 0.51).ln()).unwrap();
        assert_eq!(low.predict(&x, 0.5).unwrap(), 0);
        assert_eq!(low.predict(&x, 0.0).unwrap(), 1);
    }

    #[test]
    fn out_of_range_feature_rejected() {
        let m = LogRegModel::zeros(2);
        assert!(matches!(m.predict_proba(&sv(&[(2, 1.0)])), Err(Error::Dimension(_))));
    }

    #[test]
    fn training_input_errors() {
        let x = vec![sv(&[(0, 1.0)]), sv(&[(1, 1.0)])];
        let cfg = LinearTrainConfig::default();
        assert!(train_logreg(&x, &[1, 1], 2, &cfg).is_err());
        assert!(train_logreg(&x, &[1], 2, &cfg).is_err());
        assert!(matches!(train_logreg(&x, &[1, 0], 1, &cfg), Err(Error::Dimension(_))));
        let bad = LinearTrainConfig {
            epochs: 0,
            ..cfg.clone()
        };
        assert!(train_logreg(&x, &[1, 0], 2, &bad).is_err());
    }

    #[test]
    fn separable_pair_is_learned() {
        let x = vec![sv(&[(0, 1.0)]), sv(&[(1, 1.0)])];
        let y = [1, 0];
        let m = train_logreg(&x, &y, 2, &LinearTrainConfig::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi, 0.5).unwrap(), yi);
        }
    }

    #[test]
    fn zero_features_learn_the_prior() {
        let x = vec![SparseVector::default(); 10];
        let y = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let cfg = LinearTrainConfig {
            epochs: 3000,
            tolerance: 0.0,
            ..LinearTrainConfig::default()
        };
        let m = train_logreg(&x, &y, 4, &cfg).unwrap();
        let p = m.predict_proba(&SparseVector::default()).unwrap();
        assert!((p - 0.3).abs() < 1e-6, "{p}");
        assert!(m.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn training_is_deterministic() {
        let x: Vec<_> = (0..40).map(|i| sv(&[(i % 7, 1.0 + i as f64 / 40.0)])).collect();
        let y: Vec<u8> = (0..40).map(|i| (i % 7 < 3) as u8).collect();
        let cfg = LinearTrainConfig {
            seed: 9,
            ..LinearTrainConfig::default()
        };
        let a = train_logreg(&x, &y, 7, &cfg).unwrap();
        let b = train_logreg(&x, &y, 7, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip() {
        let m = LogRegModel::from_parts(vec![0.1, -2.5e-7, 0.0, 3.0], -0.25).unwrap();
        let back = LogRegModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let broken = m.to_json().unwrap().replace("\"n_features\":4", "\"n_features\":5");
        assert!(LogRegModel::from_json(&broken).is_err());
    }
}
