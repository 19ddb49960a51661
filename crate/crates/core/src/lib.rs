//! Dual-path phishing detection.
//!
//! An email is split into its body text and the URLs it contains. The text
//! is scored by a small transformer encoder over WordPiece tokens; each URL
//! is scored by a classical classifier (random forest or logistic
//! regression) over character n-gram TF-IDF features. The two scores are
//! combined by weighted decision fusion into one verdict.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod forest;
pub mod fusion;
pub mod linear;
pub mod mailparse;
pub mod rng;
pub mod textmodel;
pub mod tfidf;

pub use error::{Error, Result};
