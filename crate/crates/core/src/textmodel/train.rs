use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encoder::{self, EncoderConfig, EncoderParams};
use super::vocab::TokenizedInput;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// 0 gives plain SGD.
    pub momentum: f64,
    pub seed: u64,
    /// Share of the training data held out for checkpoint selection.
    pub validation_fraction: f64,
}

impl Default for TextTrainConfig {
    fn default() -> Self {
        Self::fine_tune()
    }
}

impl TextTrainConfig {
    /// 3 epochs at 2e-5, batch 8.
    pub fn fine_tune() -> Self {
        TextTrainConfig {
            epochs: 3,
            learning_rate: 2e-5,
            batch_size: 8,
            momentum: 0.9,
            seed: 0,
            validation_fraction: 0.1,
        }
    }

    /// Random-initialization settings; 2e-5 for 3 epochs barely moves
    /// fresh weights.
    pub fn from_scratch() -> Self {
        TextTrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            ..Self::fine_tune()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the lowest validation loss.
    pub params: EncoderParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub train_size: usize,
    pub validation_size: usize,
}

/// Seeded stream ids, one per independent source of randomness.
const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

/// Trains from a seeded initialization. A validation share of `dataset` is
/// held out (at least one example each side); after every epoch the
/// validation loss is measured and the best epoch's parameters are kept.
pub fn train_text(dataset: &[TokenizedInput], encoder: &EncoderConfig, config: &TextTrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    encoder.validate()?;
    let params = EncoderParams::init(encoder, rng::derive_seed(config.seed, INIT_STREAM))?;
    train_text_from(params, dataset, config)
}

/// As [`train_text`], continuing from `params`.
pub fn train_text_from(
    mut params: EncoderParams,
    dataset: &[TokenizedInput],
    config: &TextTrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut has = [false; 2];
    for x in dataset {
        match x.label {
            Some(l @ (0 | 1)) => has[l as usize] = true,
            _ => return Err(Error::invalid("every training example needs a 0/1 label")),
        }
    }
    if !(has[0] && has[1]) {
        return Err(Error::invalid("training data must contain both classes"));
    }

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(rng::derive_seed(config.seed, SPLIT_STREAM)));
    let n_val = ((config.validation_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let validation: Vec<TokenizedInput> = order[..n_val].iter().map(|&i| dataset[i].clone()).collect();
    let train: Vec<TokenizedInput> = order[n_val..].iter().map(|&i| dataset[i].clone()).collect();

    let mut shuffle_rng = rng::seeded(rng::derive_seed(config.seed, SHUFFLE_STREAM));
    let dropout_base = rng::derive_seed(config.seed, DROPOUT_STREAM);
    let mut velocity = EncoderParams::zeros(&params.config)?;
    let mut best: Option<(f64, usize, EncoderParams)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        idx.shuffle(&mut shuffle_rng);
        for chunk in idx.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let dropout = (params.config.dropout_rate > 0.0).then(|| rng::derive_seed(dropout_base, step));
            let (_, grads) = encoder::loss_and_grads_impl(&params, &batch, dropout)?;
            velocity.scale(config.momentum);
            velocity.scaled_add(1.0, &grads);
            params.scaled_add(-config.learning_rate, &velocity);
            step += 1;
        }
        if !params.is_finite() {
            return Err(Error::invalid(format!(
                "training diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        let (train_loss, train_accuracy) = encoder::evaluate(&params, &train)?;
        let (validation_loss, _) = encoder::evaluate(&params, &validation)?;
        info!("epoch {epoch}: train loss {train_loss:.6} acc {train_accuracy:.4}, validation loss {validation_loss:.6}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            validation_loss,
        });
        if best.as_ref().is_none_or(|b| validation_loss < b.0) {
            best = Some((validation_loss, epoch, params.clone()));
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
        train_size: train.len(),
        validation_size: validation.len(),
    })
}
