//! Character n-gram TF-IDF.
//!
//! Grams are contiguous runs of `n_min..=n_max` Unicode scalar values, taken
//! without boundary padding. Weights use raw term counts and the smoothed
//! inverse document frequency `ln((1 + N) / (1 + df)) + 1`, followed by
//! optional L2 normalization.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L2,
    None,
}

/// Sparse row: strictly increasing column indices with non-zero values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sparse indices must be strictly increasing"));
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(Error::invalid("sparse values must be finite and non-zero"));
        }
        Ok(SparseVector { indices, values })
    }

    /// Builds from a dense slice, keeping the non-zero entries.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .unzip();
        SparseVector { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at `index`, zero when absent.
    pub fn get(&self, index: usize) -> f64 {
        self.indices
            .binary_search(&index)
            .map_or(0.0, |pos| self.values[pos])
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Dot product with a dense vector; caller guarantees indices are in range.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// All contiguous substrings of `s` with `n_min..=n_max` characters, shortest
/// lengths first, each length in left-to-right order.
pub fn char_ngrams(s: &str, n_min: usize, n_max: usize) -> Vec<&str> {
    let mut bounds: Vec<usize> = s.char_indices().map(|(i, _)| i).collect();
    bounds.push(s.len());
    let chars = bounds.len() - 1;
    let mut out = Vec::new();
    for n in n_min..=n_max {
        if n == 0 || n > chars {
            continue;
        }
        out.extend((0..=chars - n).map(|start| &s[bounds[start]..bounds[start + n]]));
    }
    out
}

/// Gram multiset of `s` as gram → count.
pub fn extract_char_ngrams(s: &str, n_min: usize, n_max: usize) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for g in char_ngrams(s, n_min, n_max) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfParams {
    pub n_min: usize,
    pub n_max: usize,
    pub norm: Norm,
    /// Grams seen in fewer documents are dropped. 1 keeps everything.
    pub min_df: u64,
}

impl Default for TfidfParams {
    fn default() -> Self {
        TfidfParams {
            n_min: 2,
            n_max: 6,
            norm: Norm::L2,
            min_df: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    gram_to_index: HashMap<String, usize>,
    grams: Vec<String>,
    document_frequency: Vec<u64>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn index_of(&self, gram: &str) -> Option<usize> {
        self.gram_to_index.get(gram).copied()
    }

    pub fn gram(&self, index: usize) -> &str {
        &self.grams[index]
    }

    pub fn document_frequency(&self, index: usize) -> u64 {
        self.document_frequency[index]
    }

    fn from_sorted(grams: Vec<String>, document_frequency: Vec<u64>) -> Self {
        let gram_to_index = grams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        Vocabulary {
            gram_to_index,
            grams,
            document_frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    vocabulary: Vocabulary,
    idf: Vec<f64>,
    n_min: usize,
    n_max: usize,
    norm: Norm,
    fitted_doc_count: u64,
}

pub fn smoothed_idf(n_docs: u64, df: u64) -> f64 {
    ((1 + n_docs) as f64 / (1 + df) as f64).ln() + 1.0
}

/// Fits the vocabulary and IDF weights. Column indices follow the
/// lexicographic order of the grams, so the result does not depend on
/// document order.
pub fn fit<S: AsRef<str>>(corpus: &[S], params: &TfidfParams) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot fit TF-IDF on an empty corpus"));
    }
    if params.n_min == 0 || params.n_min > params.n_max {
        return Err(Error::invalid(format!(
            "invalid n-gram range {}..={}",
            params.n_min, params.n_max
        )));
    }
    let mut df: HashMap<&str, u64> = HashMap::new();
    for doc in corpus {
        let distinct: HashSet<&str> = char_ngrams(doc.as_ref(), params.n_min, params.n_max)
            .into_iter()
            .collect();
        for g in distinct {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = df
        .into_iter()
        .filter(|&(_, d)| d >= params.min_df.max(1))
        .collect();
    kept.sort_unstable_by(|a, b| a.0.cmp(b.0));

    let n_docs = corpus.len() as u64;
    let idf = kept.iter().map(|&(_, d)| smoothed_idf(n_docs, d)).collect();
    let (grams, dfs): (Vec<String>, Vec<u64>) = kept.into_iter().map(|(g, d)| (g.to_string(), d)).unzip();
    Ok(TfidfModel {
        vocabulary: Vocabulary::from_sorted(grams, dfs),
        idf,
        n_min: params.n_min,
        n_max: params.n_max,
        norm: params.norm,
        fitted_doc_count: n_docs,
    })
}

impl TfidfModel {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn n_features(&self) -> usize {
        self.idf.len()
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.n_min, self.n_max)
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn fitted_doc_count(&self) -> u64 {
        self.fitted_doc_count
    }

    /// Out-of-vocabulary grams are ignored; a string with no known grams maps
    /// to the empty vector.
    pub fn transform(&self, s: &str) -> SparseVector {
        let mut cols: Vec<usize> = char_ngrams(s, self.n_min, self.n_max)
            .into_iter()
            .filter_map(|g| self.vocabulary.index_of(g))
            .collect();
        cols.sort_unstable();

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for run in cols.chunk_by(|a, b| a == b) {
            indices.push(run[0]);
            values.push(run.len() as f64 * self.idf[run[0]]);
        }
        if self.norm == Norm::L2 {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                values.iter_mut().for_each(|v| *v /= norm);
            }
        }
        SparseVector { indices, values }
    }

    pub fn transform_many<S: AsRef<str> + Sync>(&self, docs: &[S]) -> Vec<SparseVector> {
        docs.par_iter().map(|d| self.transform(d.as_ref())).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TfidfFile {
            format_version: FORMAT_VERSION,
            n_min: self.n_min,
            n_max: self.n_max,
            norm: self.norm,
            fitted_doc_count: self.fitted_doc_count,
            grams: (0..self.vocabulary.len())
                .map(|i| {
                    (
                        self.vocabulary.grams[i].clone(),
                        i,
                        self.vocabulary.document_frequency[i],
                        self.idf[i],
                    )
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: TfidfFile = serde_json::from_str(json)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported tfidf format_version {}",
                file.format_version
            )));
        }
        if file.n_min == 0 || file.n_min > file.n_max {
            return Err(Error::Format("invalid n-gram range".into()));
        }
        let mut grams = Vec::with_capacity(file.grams.len());
        let mut dfs = Vec::with_capacity(file.grams.len());
        let mut idf = Vec::with_capacity(file.grams.len());
        for (pos, (gram, index, df, w)) in file.grams.into_iter().enumerate() {
            if index != pos {
                return Err(Error::Format(format!("gram {gram:?} has index {index}, expected {pos}")));
            }
            if grams.last().is_some_and(|prev: &String| prev.as_str() >= gram.as_str()) {
                return Err(Error::Format("grams are not strictly sorted".into()));
            }
            if df == 0 || !w.is_finite() || w < 0.0 {
                return Err(Error::Format(format!("bad df/idf for gram {gram:?}")));
            }
            grams.push(gram);
            dfs.push(df);
            idf.push(w);
        }
        Ok(TfidfModel {
            vocabulary: Vocabulary::from_sorted(grams, dfs),
            idf,
            n_min: file.n_min,
            n_max: file.n_max,
            norm: file.norm,
            fitted_doc_count: file.fitted_doc_count,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TfidfFile {
    format_version: u32,
    n_min: usize,
    n_max: usize,
    norm: Norm,
    fitted_doc_count: u64,
    grams: Vec<(String, usize, u64, f64)>,
}
