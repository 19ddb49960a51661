//! Resolved run configuration and `key=value` override files.

use std::path::Path;

use phishguard::corpus::PrepConfig;
use phishguard::forest::ForestTrainConfig;
use phishguard::fusion::{FusionConfig, UrlAggregation};
use phishguard::linear::LinearTrainConfig;
use phishguard::textmodel::{EncoderConfig, TextTrainConfig};
use phishguard::tfidf::TfidfParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TextMode {
    /// 3 epochs, lr 2e-5, batch 8.
    FineTune,
    /// 200 epochs, lr 1e-3, batch 8.
    FromScratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSettings {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let t = EncoderConfig::toy(4);
        EncoderSettings {
            num_layers: t.num_layers,
            num_heads: t.num_heads,
            d_model: t.d_model,
            d_ff: t.d_ff,
            max_len: t.max_len,
            dropout_rate: t.dropout_rate,
        }
    }
}

impl EncoderSettings {
    pub fn with_vocab(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_len: self.max_len,
            vocab_size,
            dropout_rate: self.dropout_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSettings {
    pub w_text: f64,
    pub w_url: f64,
    pub url_aggregation: UrlAggregation,
    pub threshold: f64,
}

impl Default for FusionSettings {
    fn default() -> Self {
        FusionSettings {
            w_text: 0.5,
            w_url: 0.5,
            url_aggregation: UrlAggregation::Max,
            threshold: 0.5,
        }
    }
}

impl FusionSettings {
    pub fn build(&self) -> phishguard::Result<FusionConfig> {
        let mut c = FusionConfig::new(self.w_text, self.w_url)?;
        c.url_aggregation = self.url_aggregation;
        c.threshold = self.threshold;
        Ok(c)
    }
}

/// Every tunable of every command. Component seeds are overwritten by the
/// top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Training share of the train/test split.
    pub split_ratio: f64,
    pub prep: PrepConfig,
    pub tfidf: TfidfParams,
    pub forest: ForestTrainConfig,
    pub linear: LinearTrainConfig,
    pub text_mode: TextMode,
    pub text: TextTrainConfig,
    pub encoder: EncoderSettings,
    pub vocab_size: usize,
    /// Probability at or above which a URL or email counts as positive in
    /// held-out metrics.
    pub decision_threshold: f64,
    pub fusion: FusionSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            split_ratio: 0.8,
            prep: PrepConfig::default(),
            tfidf: TfidfParams::default(),
            forest: ForestTrainConfig::default(),
            linear: LinearTrainConfig::default(),
            text_mode: TextMode::FineTune,
            text: TextTrainConfig::fine_tune(),
            encoder: EncoderSettings::default(),
            vocab_size: 8000,
            decision_threshold: 0.5,
            fusion: FusionSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn set_text_mode(&mut self, mode: TextMode) {
        self.text_mode = mode;
        let preset = match mode {
            TextMode::FineTune => TextTrainConfig::fine_tune(),
            TextMode::FromScratch => TextTrainConfig::from_scratch(),
        };
        self.text.epochs = preset.epochs;
        self.text.learning_rate = preset.learning_rate;
        self.text.batch_size = preset.batch_size;
    }

    /// Pins the values the paper states: n-grams 2-6, 100 trees, 3 epochs
    /// at lr 2e-5 with batch 8, an 80/20 split and 256-token inputs.
    pub fn apply_paper_defaults(&mut self) {
        self.tfidf.n_min = 2;
        self.tfidf.n_max = 6;
        self.forest.n_estimators = 100;
        self.set_text_mode(TextMode::FineTune);
        self.split_ratio = 0.8;
        self.encoder.max_len = 256;
    }

    pub fn propagate_seed(&mut self) {
        self.prep.seed = self.seed;
        self.forest.seed = self.seed;
        self.linear.seed = self.seed;
        self.text.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let check = |r: phishguard::Result<()>| r.map_err(|e| UsageError(e.to_string()));
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(UsageError(format!("split_ratio must be in (0, 1), got {}", self.split_ratio)));
        }
        if self.tfidf.n_min == 0 || self.tfidf.n_min > self.tfidf.n_max {
            return Err(UsageError(format!(
                "invalid n-gram range {}..={}",
                self.tfidf.n_min, self.tfidf.n_max
            )));
        }
        if self.vocab_size <= 4 {
            return Err(UsageError("vocab_size must exceed 4".into()));
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(UsageError("decision_threshold must be in [0, 1]".into()));
        }
        check(self.prep.validate())?;
        check(self.forest.validate())?;
        check(self.linear.validate())?;
        check(self.text.validate())?;
        check(self.encoder.with_vocab(self.vocab_size).validate())?;
        check(self.fusion.build().map(|_| ()))?;
        Ok(())
    }

    /// Applies `key=value` lines. Keys are dotted paths into the JSON form
    /// of this struct (`forest.n_estimators=50`); values are read as JSON
    /// when they parse as JSON and as plain strings otherwise. Blank lines
    /// and lines starting with `#` are skipped.
    pub fn apply_overrides(&mut self, text: &str, source: &str) -> Result<(), UsageError> {
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("{source}:{}: expected key=value", lineno + 1)))?;
            let (key, raw) = (key.trim(), raw.trim());
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut tree;
            for part in key.split('.') {
                node = node
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| UsageError(format!("{source}:{}: unknown key {key}", lineno + 1)))?;
            }
            *node = value;
        }
        *self = serde_json::from_value(tree).map_err(|e| UsageError(format!("{source}: {e}")))?;
        Ok(())
    }

    pub fn apply_override_file(&mut self, path: &Path) -> Result<(), UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_overrides(&text, &path.display().to_string())
    }
}
