//! Email-body classifier: WordPiece tokenization into a small transformer
//! encoder whose `[CLS]` state feeds a two-way softmax.

pub mod encoder;
pub mod train;
pub mod vocab;

use std::path::Path;

use rayon::prelude::*;

pub use encoder::{EncoderConfig, EncoderParams};
pub use train::{train_text, train_text_from, EpochRecord, TextTrainConfig, TrainOutcome};
pub use vocab::{build_vocab, detokenize, tokenize, TokenizedInput, WordPieceVocab};

use crate::error::{Error, Result};

/// Tokenizes labelled texts.
pub fn tokenize_labeled<S: AsRef<str> + Sync>(
    vocab: &WordPieceVocab,
    texts: &[S],
    labels: &[u8],
    max_len: usize,
) -> Result<Vec<TokenizedInput>> {
    if texts.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} texts but {} labels",
            texts.len(),
            labels.len()
        )));
    }
    texts
        .par_iter()
        .zip(labels)
        .map(|(t, &l)| {
            let mut x = tokenize(vocab, t.as_ref(), max_len)?;
            x.label = Some(l);
            Ok(x)
        })
        .collect()
}

/// A vocabulary with the encoder trained on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TextModel {
    pub vocab: WordPieceVocab,
    pub params: EncoderParams,
}

impl TextModel {
    pub fn new(vocab: WordPieceVocab, params: EncoderParams) -> Result<Self> {
        if vocab.len() != params.config.vocab_size {
            return Err(Error::Dimension(format!(
                "vocabulary has {} tokens, encoder expects {}",
                vocab.len(),
                params.config.vocab_size
            )));
        }
        Ok(TextModel { vocab, params })
    }

    /// Phishing probability of `text`.
    pub fn predict(&self, text: &str) -> Result<f64> {
        let x = tokenize(&self.vocab, text, self.params.config.max_len)?;
        encoder::predict_proba(&self.params, &x)
    }

    pub fn predict_many<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<f64>> {
        texts.par_iter().map(|t| self.predict(t.as_ref())).collect()
    }

    pub fn save(&self, vocab_path: &Path, params_path: &Path) -> Result<()> {
        self.vocab.save(vocab_path)?;
        std::fs::write(params_path, self.params.to_json()?).map_err(|e| Error::io(params_path, e))
    }

    pub fn load(vocab_path: &Path, params_path: &Path) -> Result<Self> {
        let vocab = WordPieceVocab::load(vocab_path)?;
        let json = std::fs::read_to_string(params_path).map_err(|e| Error::io(params_path, e))?;
        Self::new(vocab, EncoderParams::from_json(&json)?)
    }
}
