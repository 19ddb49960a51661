//! Dataset loading, cleaning and splitting for the email and URL corpora.
//!
//! Email CSV files carry a `text,label` header with labels in `{0,1}`. Raw
//! URL CSV files carry a `url,type` header where `type` is one of `benign`,
//! `phishing`, `defacement` or `malware`; cleaned URL files are written back
//! as `url,label`. Quoting follows the usual CSV convention: a field holding a
//! comma, a double quote or a newline is wrapped in `"` and inner quotes are
//! doubled.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailRecord {
    pub id: u64,
    pub text: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlRecord {
    pub url: String,
    pub label: u8,
}

/// A URL row as it appears in the source dataset, before label mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawUrlRecord {
    pub url: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub min_text_len: usize,
    pub min_url_len: usize,
    pub email_target_size: usize,
    pub url_target_size: usize,
    pub seed: u64,
    pub balance: bool,
    /// Drop URLs without a `.`; off by default.
    pub require_dot: bool,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            min_text_len: 20,
            min_url_len: 10,
            email_target_size: 7_500,
            url_target_size: 20_000,
            seed: 0,
            balance: true,
            require_dot: false,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.email_target_size == 0 || self.url_target_size == 0 {
            return Err(Error::invalid("target sizes must be positive"));
        }
        if self.min_url_len == 0 {
            return Err(Error::invalid("min_url_len must be at least 1"));
        }
        Ok(())
    }
}

/// Output of a cleaning pass together with any non-fatal warnings it raised.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared<T> {
    pub records: Vec<T>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader)
}

fn row_error(source_name: &str, row: u64, message: impl Into<String>) -> Error {
    Error::Row {
        source_name: source_name.to_string(),
        row,
        message: message.into(),
    }
}

fn check_header<R: Read>(
    rdr: &mut csv::Reader<R>,
    source_name: &str,
    expected: &[&str],
) -> Result<Vec<String>> {
    let header = rdr
        .headers()
        .map_err(|e| row_error(source_name, 1, e.to_string()))?;
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if names != expected {
        return Err(row_error(
            source_name,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), names.join(",")),
        ));
    }
    Ok(names)
}

/// Iterates data records; yields `(row_number, record)` where row 1 is the header.
fn records<'a, R: Read>(
    rdr: &'a mut csv::Reader<R>,
    source_name: &str,
    columns: usize,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    let source_name = source_name.to_string();
    rdr.records().enumerate().map(move |(i, rec)| {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| row_error(&source_name, row, e.to_string()))?;
        if rec.len() != columns {
            return Err(row_error(
                &source_name,
                row,
                format!("expected {columns} columns, found {}", rec.len()),
            ));
        }
        Ok((row, rec))
    })
}

fn parse_binary_label(raw: &str, source_name: &str, row: u64) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(row_error(
            source_name,
            row,
            format!("label must be 0 or 1, found {other:?}"),
        )),
    }
}

pub fn read_email_csv<R: Read>(reader: R, source_name: &str) -> Result<Vec<EmailRecord>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, source_name, &["text", "label"])?;
    let mut out = Vec::new();
    for item in records(&mut rdr, source_name, 2) {
        let (row, rec) = item?;
        let label = parse_binary_label(&rec[1], source_name, row)?;
        out.push(EmailRecord {
            id: out.len() as u64,
            text: rec[0].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn load_email_csv(path: &Path) -> Result<Vec<EmailRecord>> {
    read_email_csv(open(path)?, &path.display().to_string())
}

pub fn read_raw_url_csv<R: Read>(reader: R, source_name: &str) -> Result<Vec<RawUrlRecord>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, source_name, &["url", "type"])?;
    let mut out = Vec::new();
    for item in records(&mut rdr, source_name, 2) {
        let (_, rec) = item?;
        out.push(RawUrlRecord {
            url: rec[0].to_string(),
            kind: rec[1].to_string(),
        });
    }
    Ok(out)
}

pub fn load_raw_url_csv(path: &Path) -> Result<Vec<RawUrlRecord>> {
    read_raw_url_csv(open(path)?, &path.display().to_string())
}

/// Reads either a raw `url,type` file (labels mapped, nothing else changed)
/// or a cleaned `url,label` file.
pub fn read_url_csv<R: Read>(reader: R, source_name: &str) -> Result<Vec<UrlRecord>> {
    let mut rdr = csv_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| row_error(source_name, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect::<Vec<_>>();
    let raw_labels = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["url", "type"] => true,
        ["url", "label"] => false,
        _ => {
            return Err(row_error(
                source_name,
                1,
                format!("expected header \"url,type\" or \"url,label\", found {:?}", header.join(",")),
            ))
        }
    };
    let mut out = Vec::new();
    for item in records(&mut rdr, source_name, 2) {
        let (row, rec) = item?;
        let label = if raw_labels {
            map_url_label(&rec[1]).map_err(|e| row_error(source_name, row, e.to_string()))?
        } else {
            parse_binary_label(&rec[1], source_name, row)?
        };
        out.push(UrlRecord {
            url: rec[0].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn load_url_csv(path: &Path) -> Result<Vec<UrlRecord>> {
    read_url_csv(open(path)?, &path.display().to_string())
}

pub fn write_email_csv<W: Write>(writer: W, records: &[EmailRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
    w.write_record(["text", "label"]).map_err(io)?;
    for r in records {
        w.write_record([r.text.as_str(), &r.label.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv write failed: {e}")))?;
    Ok(())
}

pub fn write_url_csv<W: Write>(writer: W, records: &[UrlRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
    w.write_record(["url", "label"]).map_err(io)?;
    for r in records {
        w.write_record([r.url.as_str(), &r.label.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv write failed: {e}")))?;
    Ok(())
}

/// benign → 0; phishing, malware, defacement → 1. Matching ignores case and
/// surrounding whitespace.
pub fn map_url_label(raw: &str) -> Result<u8> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "benign" => Ok(0),
        "phishing" | "malware" | "defacement" => Ok(1),
        _ => Err(Error::UnknownLabel(raw.to_string())),
    }
}

/// Cleans an email corpus. Steps run in this order:
///
/// 1. drop records whose text is empty or whitespace-only,
/// 2. lowercase,
/// 3. drop exact duplicate texts, keeping the first,
/// 4. drop texts shorter than `min_text_len` characters,
/// 5. with `balance` set, take a seeded class-balanced subsample of
///    `email_target_size` records (order preserved).
pub fn preprocess_emails(records: &[EmailRecord], config: &PrepConfig) -> Prepared<EmailRecord> {
    let mut seen = HashSet::new();
    let cleaned: Vec<EmailRecord> = records
        .iter()
        .filter(|r| !r.text.trim().is_empty())
        .map(|r| EmailRecord {
            text: r.text.to_lowercase(),
            ..r.clone()
        })
        .filter(|r| seen.insert(r.text.clone()))
        .filter(|r| r.text.chars().count() >= config.min_text_len)
        .collect();

    let mut warnings = Vec::new();
    if !config.balance {
        return Prepared {
            records: cleaned,
            warnings,
        };
    }

    let labels: Vec<u8> = cleaned.iter().map(|r| r.label).collect();
    let (keep, warning) = balanced_sample(&labels, config.email_target_size, config.seed);
    if let Some(w) = warning {
        warn!("{w}");
        warnings.push(w);
    }
    Prepared {
        records: keep.into_iter().map(|i| cleaned[i].clone()).collect(),
        warnings,
    }
}

fn class_indices(labels: &[u8]) -> (Vec<usize>, Vec<usize>) {
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (neg, pos)
}

/// Seeded draw of `k` items from `pool`; keeps pool order.
fn sample_sorted(pool: &[usize], k: usize, rng: &mut rng::SeededRng) -> Vec<usize> {
    if k >= pool.len() {
        return pool.to_vec();
    }
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Picks `target` indices split evenly between the classes: the positive
/// class gets `target / 2`, the negative class the remainder. A class short
/// of its half contributes everything it has and the other class fills the
/// gap. Returned indices are ascending.
fn balanced_sample(labels: &[u8], target: usize, seed: u64) -> (Vec<usize>, Option<String>) {
    let (neg, pos) = class_indices(labels);
    let want_pos = target / 2;
    let want_neg = target - want_pos;

    let mut warning = None;
    let (take_pos, take_neg) = if pos.len() < want_pos || neg.len() < want_neg {
        let take_pos = pos.len().min(target.saturating_sub(neg.len().min(want_neg)));
        let take_neg = neg.len().min(target - take_pos);
        warning = Some(format!(
            "cannot balance to {target} records: {} phishing and {} benign available; keeping {take_pos} + {take_neg}",
            pos.len(),
            neg.len()
        ));
        (take_pos, take_neg)
    } else {
        (want_pos, want_neg)
    };

    let mut rng = rng::seeded(seed);
    let mut keep = sample_sorted(&pos, take_pos, &mut rng);
    keep.extend(sample_sorted(&neg, take_neg, &mut rng));
    keep.sort_unstable();
    (keep, warning)
}

/// Cleans a raw URL corpus: label mapping, lowercasing, duplicate removal
/// (first kept), length and emptiness filters, then a seeded subsample to
/// `url_target_size` that keeps the class ratio.
pub fn preprocess_urls(records: &[RawUrlRecord], config: &PrepConfig) -> Result<Prepared<UrlRecord>> {
    let labeled = records
        .iter()
        .map(|r| {
            Ok(UrlRecord {
                url: r.url.clone(),
                label: map_url_label(&r.kind)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(clean_urls(&labeled, config))
}

/// The label-independent part of [`preprocess_urls`], for already mapped records.
pub fn clean_urls(records: &[UrlRecord], config: &PrepConfig) -> Prepared<UrlRecord> {
    let mut seen = HashSet::new();
    let cleaned: Vec<UrlRecord> = records
        .iter()
        .map(|r| UrlRecord {
            url: r.url.trim().to_lowercase(),
            label: r.label,
        })
        .filter(|r| seen.insert(r.url.clone()))
        .filter(|r| r.url.chars().count() >= config.min_url_len)
        .filter(|r| !r.url.is_empty())
        .filter(|r| !config.require_dot || r.url.contains('.'))
        .collect();

    if cleaned.len() <= config.url_target_size {
        return Prepared {
            records: cleaned,
            warnings: Vec::new(),
        };
    }

    let labels: Vec<u8> = cleaned.iter().map(|r| r.label).collect();
    let (neg, pos) = class_indices(&labels);
    let target = config.url_target_size;
    let take_pos = ((target as f64 * pos.len() as f64 / cleaned.len() as f64).round() as usize)
        .min(pos.len());
    let take_neg = (target - take_pos).min(neg.len());

    let mut rng = rng::seeded(config.seed);
    let mut keep = sample_sorted(&pos, take_pos, &mut rng);
    keep.extend(sample_sorted(&neg, take_neg, &mut rng));
    keep.sort_unstable();
    Prepared {
        records: keep.into_iter().map(|i| cleaned[i].clone()).collect(),
        warnings: Vec::new(),
    }
}

/// Seeded train/test partition of `0..n` with `floor(ratio * n)` training
/// indices. Indices are shuffled with Fisher-Yates; the first
/// `floor(ratio * n)` shuffled positions form the training set.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} records; need at least 2")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let n_train = (ratio * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let test_indices = order.split_off(n_train);
    Ok(DatasetSplit {
        train_indices: order,
        test_indices,
    })
}
