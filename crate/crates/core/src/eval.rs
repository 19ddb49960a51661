//! Binary classification metrics and model comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            (0, 0) => cm.tn += 1,
            _ => return Err(Error::invalid(format!("non-binary prediction/label pair ({p}, {y})"))),
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 are 0 when their denominator is 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    Ok(MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    /// Sorted by descending F1, then name.
    pub rows: Vec<(String, MetricsReport)>,
}

pub fn compare_models(results: &[(String, MetricsReport)]) -> ComparisonTable {
    let mut rows = results.to_vec();
    rows.sort_by(|a, b| b.1.f1.total_cmp(&a.1.f1).then_with(|| a.0.cmp(&b.0)));
    ComparisonTable { rows }
}

impl ComparisonTable {
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("model".len());
        let mut out = format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}\n",
            "model", "accuracy", "precision", "recall", "f1"
        );
        for (name, m) in &self.rows {
            let _ = writeln!(
                out,
                "{name:<width$}  {:>9.5}  {:>9.5}  {:>9.5}  {:>9.5}",
                m.accuracy, m.precision, m.recall, m.f1
            );
        }
        out
    }

    /// `{model_name: {accuracy, precision, recall, f1}}`; keys in name order.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, &MetricsReport> = self.rows.iter().map(|(n, m)| (n.as_str(), m)).collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }
}
