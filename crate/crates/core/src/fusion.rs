//! Combines the body-text and URL probabilities of an email into one
//! verdict.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::RandomForest;
use crate::linear::LogRegModel;
use crate::mailparse;
use crate::textmodel::TextModel;
use crate::tfidf::{SparseVector, TfidfModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrlAggregation {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFusionConfig")]
pub struct FusionConfig {
    w_text: f64,
    w_url: f64,
    pub url_aggregation: UrlAggregation,
    pub threshold: f64,
}

#[derive(Deserialize)]
struct RawFusionConfig {
    w_text: f64,
    w_url: f64,
    #[serde(default)]
    url_aggregation: UrlAggregation,
    #[serde(default = "default_threshold")]
    threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl TryFrom<RawFusionConfig> for FusionConfig {
    type Error = Error;

    fn try_from(r: RawFusionConfig) -> Result<Self> {
        let mut c = FusionConfig::new(r.w_text, r.w_url)?;
        c.url_aggregation = r.url_aggregation;
        c.threshold = r.threshold;
        Ok(c)
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig::new(0.5, 0.5).expect("valid default weights")
    }
}

impl FusionConfig {
    /// Weights are rescaled to sum to 1.
    pub fn new(w_text: f64, w_url: f64) -> Result<Self> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(w_text) || !ok(w_url) || w_text + w_url <= 0.0 {
            return Err(Error::invalid(format!(
                "fusion weights must be non-negative with a positive sum, got {w_text} and {w_url}"
            )));
        }
        let w_text = w_text / (w_text + w_url);
        Ok(FusionConfig {
            w_text,
            w_url: 1.0 - w_text,
            url_aggregation: UrlAggregation::Max,
            threshold: 0.5,
        })
    }

    pub fn w_text(&self) -> f64 {
        self.w_text
    }

    pub fn w_url(&self) -> f64 {
        self.w_url
    }
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} outside [0, 1]")))
    }
}

/// `w_text * text_prob + w_url * agg(url_probs)`, or `text_prob` alone when
/// there are no URLs. The result is kept inside the range of its two
/// inputs so rounding cannot leave their convex hull.
pub fn fuse(text_prob: f64, url_probs: &[f64], config: &FusionConfig) -> Result<f64> {
    check_prob(text_prob)?;
    for &p in url_probs {
        check_prob(p)?;
    }
    if url_probs.is_empty() {
        return Ok(text_prob);
    }
    let u = match config.url_aggregation {
        UrlAggregation::Max => url_probs.iter().copied().fold(0.0, f64::max),
        UrlAggregation::Mean => url_probs.iter().sum::<f64>() / url_probs.len() as f64,
    };
    let fused = config.w_text * text_prob + config.w_url * u;
    Ok(fused.clamp(text_prob.min(u), text_prob.max(u)))
}

/// A trained URL classifier of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum UrlModel {
    LogReg(LogRegModel),
    Forest(RandomForest),
}

impl UrlModel {
    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64> {
        match self {
            UrlModel::LogReg(m) => m.predict_proba(x),
            UrlModel::Forest(m) => m.predict_proba(x),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            UrlModel::LogReg(m) => m.n_features(),
            UrlModel::Forest(m) => m.n_features(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            UrlModel::LogReg(m) => m.to_json(),
            UrlModel::Forest(m) => m.to_json(),
        }
    }

    /// Dispatches on the file's `model_type`.
    pub fn from_json(json: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            model_type: String,
        }
        let probe: Probe = serde_json::from_str(json)?;
        match probe.model_type.as_str() {
            "logreg" => Ok(UrlModel::LogReg(LogRegModel::from_json(json)?)),
            "random_forest" => Ok(UrlModel::Forest(RandomForest::from_json(json)?)),
            other => Err(Error::Format(format!("unknown URL model type {other:?}"))),
        }
    }
}

/// TF-IDF vectorizer plus the classifier trained on its output.
#[derive(Debug, Clone)]
pub struct UrlPipeline {
    pub tfidf: TfidfModel,
    pub model: UrlModel,
}

impl UrlPipeline {
    pub fn new(tfidf: TfidfModel, model: UrlModel) -> Result<Self> {
        if tfidf.n_features() != model.n_features() {
            return Err(Error::Dimension(format!(
                "vectorizer has {} features, URL model expects {}",
                tfidf.n_features(),
                model.n_features()
            )));
        }
        Ok(UrlPipeline { tfidf, model })
    }

    /// Malicious probability of a URL, normalized the same way as the
    /// training corpus (trimmed, lowercased).
    pub fn predict(&self, url: &str) -> Result<f64> {
        self.model.predict_proba(&self.tfidf.transform(&url.trim().to_lowercase()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlScore {
    pub url: String,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Phishing,
    Legitimate,
}

impl Verdict {
    pub fn as_label(self) -> u8 {
        match self {
            Verdict::Phishing => 1,
            Verdict::Legitimate => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub text_prob: f64,
    pub url_probs: Vec<UrlScore>,
    pub fused_score: f64,
    pub label: Verdict,
    pub warnings: Vec<String>,
}

impl VerdictReport {
    pub fn extracted_urls(&self) -> impl Iterator<Item = &str> {
        self.url_probs.iter().map(|u| u.url.as_str())
    }
}

/// Parses a raw message, scores its body and each extracted URL, and fuses
/// the results.
pub fn classify_email(
    raw: &[u8],
    text_model: &TextModel,
    urls: &UrlPipeline,
    config: &FusionConfig,
) -> Result<VerdictReport> {
    let parsed = mailparse::parse_email(raw);
    let text_prob = text_model.predict(&parsed.body_text)?;
    let url_probs = parsed
        .urls
        .iter()
        .map(|u| {
            Ok(UrlScore {
                url: u.clone(),
                prob: urls.predict(u)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<f64> = url_probs.iter().map(|u| u.prob).collect();
    let fused_score = fuse(text_prob, &probs, config)?;
    Ok(VerdictReport {
        text_prob,
        url_probs,
        fused_score,
        label: if fused_score >= config.threshold {
            Verdict::Phishing
        } else {
            Verdict::Legitimate
        },
        warnings: parsed.warnings,
    })
}
