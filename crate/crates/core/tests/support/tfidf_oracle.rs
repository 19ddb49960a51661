//! Brute-force dense TF-IDF, written without reference to the sparse
//! implementation: explicit substring enumeration, a sorted gram set, a dense
//! count matrix and a per-row normalization.

use std::collections::BTreeSet;

pub struct DenseTfidf {
    pub grams: Vec<String>,
    pub idf: Vec<f64>,
}

fn substrings(s: &str, lo: usize, hi: usize) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    for n in lo..=hi {
        if n > chars.len() {
            break;
        }
        for start in 0..=(chars.len() - n) {
            out.push(chars[start..start + n].iter().collect());
        }
    }
    out
}

pub fn fit(corpus: &[&str], lo: usize, hi: usize) -> DenseTfidf {
    let grams: Vec<String> = corpus
        .iter()
        .flat_map(|d| substrings(d, lo, hi))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = corpus.len() as f64;
    let idf = grams
        .iter()
        .map(|g| {
            let df = corpus
                .iter()
                .filter(|d| substrings(d, lo, hi).contains(g))
                .count() as f64;
            (1.0 + n).ln() - (1.0 + df).ln() + 1.0
        })
        .collect();
    DenseTfidf { grams, idf }
}

pub fn transform(model: &DenseTfidf, s: &str, lo: usize, hi: usize, l2: bool) -> Vec<f64> {
    let subs = substrings(s, lo, hi);
    let mut row: Vec<f64> = model
        .grams
        .iter()
        .zip(&model.idf)
        .map(|(g, w)| subs.iter().filter(|x| *x == g).count() as f64 * w)
        .collect();
    if l2 {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut row {
                *v /= norm;
            }
        }
    }
    row
}

/// Small corpora used for oracle comparisons: at most 10 strings of at most
/// 12 characters each.
pub const FIXTURE_CORPORA: &[&[&str]] = &[
    &["abc", "abd", "xyz"],
    &["login", "secure", "verify"],
    &["paypal.com", "psypal.com", "paypa1.net"],
    &["a", "ab", "abc", "abcd", "abcde", "abcdef", "abcdefg"],
    &["aaaaaa", "aaa", "ba", "ab"],
    &["http://x.ru", "www.y.xyz", "10.0.0.1/a", "bank.com", "верify.com"],
    &["g00gle.com", "google.com", "gooogle.co", "go.gl/x", "a.b", "login-bank", "secure.io", "x", "verify.me", "acct-upd.tk"],
    &["same", "same", "same"],
];
