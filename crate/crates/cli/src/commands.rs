use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use phishguard::corpus::{self, EmailRecord, UrlRecord};
use phishguard::eval::{self, compare_models, ComparisonTable, MetricsReport};
use phishguard::forest::train_forest;
use phishguard::fusion::{classify_email, UrlModel, UrlPipeline, VerdictReport};
use phishguard::linear::train_logreg;
use phishguard::textmodel::{self, build_vocab, train_text, TextModel, WordPieceVocab};
use phishguard::tfidf::{self, TfidfModel};
use phishguard::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::{self, RunManifest};
use crate::{Command, Failure, PrepKind, UrlModelKind, UsageError};

pub const FORMAT_VERSION: u32 = 1;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const TEXT_MODEL_FILE: &str = "text_model.json";
pub const TFIDF_FILE: &str = "tfidf.json";
pub const URL_MODEL_FILE: &str = "url_model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPaths {
    pub vocab: PathBuf,
    pub text_model: PathBuf,
    pub tfidf: PathBuf,
    pub url_model: PathBuf,
}

/// A command with its inputs resolved to absolute paths; everything
/// tunable lives in [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Prep {
        kind: PrepKind,
        input: PathBuf,
        output: String,
    },
    TrainUrl {
        model: UrlModelKind,
        input: PathBuf,
    },
    TrainText {
        input: PathBuf,
        vocab: Option<PathBuf>,
    },
    Classify {
        path: PathBuf,
        models: ModelPaths,
    },
    Eval {
        predictions: Vec<(String, PathBuf)>,
        url_models: Vec<PathBuf>,
        urls: Option<PathBuf>,
        text_models: Vec<PathBuf>,
        emails: Option<PathBuf>,
    },
}

fn absolute(p: &Path) -> Result<PathBuf, UsageError> {
    std::path::absolute(p).map_err(|e| UsageError(format!("bad path {}: {e}", p.display())))
}

fn model_path(explicit: &Option<PathBuf>, dir: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf, UsageError> {
    match (explicit, dir) {
        (Some(p), _) => absolute(p),
        (None, Some(d)) => absolute(&d.join(name)),
        (None, None) => Err(UsageError(format!("--models or --{flag} is required"))),
    }
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Prep { .. } => "prep",
            Invocation::TrainUrl { .. } => "train-url",
            Invocation::TrainText { .. } => "train-text",
            Invocation::Classify { .. } => "classify",
            Invocation::Eval { .. } => "eval",
        }
    }

    pub fn from_cli(cmd: &Command) -> Result<Self, UsageError> {
        Ok(match cmd {
            Command::Prep(a) => Invocation::Prep {
                kind: a.kind,
                input: absolute(&a.input)?,
                output: a.output.clone().unwrap_or_else(|| {
                    match a.kind {
                        PrepKind::Emails => "emails.csv",
                        PrepKind::Urls => "urls.csv",
                    }
                    .to_string()
                }),
            },
            Command::TrainUrl(a) => Invocation::TrainUrl {
                model: a.model,
                input: absolute(&a.input)?,
            },
            Command::TrainText(a) => Invocation::TrainText {
                input: absolute(&a.input)?,
                vocab: a.vocab.as_deref().map(absolute).transpose()?,
            },
            Command::Classify(a) => Invocation::Classify {
                path: absolute(&a.path)?,
                models: ModelPaths {
                    vocab: model_path(&a.vocab, &a.models, VOCAB_FILE, "vocab")?,
                    text_model: model_path(&a.text_model, &a.models, TEXT_MODEL_FILE, "text-model")?,
                    tfidf: model_path(&a.tfidf, &a.models, TFIDF_FILE, "tfidf")?,
                    url_model: model_path(&a.url_model, &a.models, URL_MODEL_FILE, "url-model")?,
                },
            },
            Command::Eval(a) => {
                let predictions = a
                    .predictions
                    .iter()
                    .map(|spec| {
                        let (name, file) = spec
                            .split_once('=')
                            .filter(|(n, f)| !n.is_empty() && !f.is_empty())
                            .ok_or_else(|| UsageError(format!("--predictions expects NAME=FILE, got {spec:?}")))?;
                        Ok((name.to_string(), absolute(Path::new(file))?))
                    })
                    .collect::<Result<Vec<_>, UsageError>>()?;
                if !a.url_models.is_empty() && a.urls.is_none() {
                    return Err(UsageError("--url-models needs --urls".into()));
                }
                if !a.text_models.is_empty() && a.emails.is_none() {
                    return Err(UsageError("--text-models needs --emails".into()));
                }
                if predictions.is_empty() && a.url_models.is_empty() && a.text_models.is_empty() {
                    return Err(UsageError(
                        "nothing to evaluate; pass --predictions, --url-models or --text-models".into(),
                    ));
                }
                Invocation::Eval {
                    predictions,
                    url_models: a.url_models.iter().map(|p| absolute(p)).collect::<Result<_, _>>()?,
                    urls: a.urls.as_deref().map(absolute).transpose()?,
                    text_models: a.text_models.iter().map(|p| absolute(p)).collect::<Result<_, _>>()?,
                    emails: a.emails.as_deref().map(absolute).transpose()?,
                }
            }
            Command::Replay(_) => unreachable!("replay is dispatched before resolution"),
        })
    }
}

/// Files a run read and wrote.
#[derive(Default)]
struct Outputs {
    inputs: Vec<PathBuf>,
    written: Vec<String>,
}

struct Out<'a> {
    dir: &'a Path,
    record: Outputs,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.record.written.push(name.to_string());
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: &str) -> phishguard::Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))
    }

    fn create(&mut self, name: &str) -> phishguard::Result<BufWriter<File>> {
        let p = self.path(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Error::io(&p, e))
    }

    fn input(&mut self, p: &Path) {
        self.record.inputs.push(p.to_path_buf());
    }
}

pub fn execute(inv: &Invocation, config: &RunConfig, out_dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started = Instant::now();
    let mut out = Out {
        dir: out_dir,
        record: Outputs::default(),
    };
    match inv {
        Invocation::Prep { kind, input, output } => prep(*kind, input, output, config, &mut out)?,
        Invocation::TrainUrl { model, input } => train_url(*model, input, config, &mut out)?,
        Invocation::TrainText { input, vocab } => train_text_cmd(input, vocab.as_deref(), config, &mut out)?,
        Invocation::Classify { path, models } => classify(path, models, config, &mut out)?,
        Invocation::Eval {
            predictions,
            url_models,
            urls,
            text_models,
            emails,
        } => eval_cmd(
            predictions,
            url_models,
            urls.as_deref(),
            text_models,
            emails.as_deref(),
            config,
            &mut out,
        )?,
    }
    let m = RunManifest::new(
        inv.clone(),
        config.clone(),
        &out.record.inputs,
        out.record.written.clone(),
        started.elapsed().as_secs_f64(),
    )?;
    manifest::write(&m, out_dir)?;
    Ok(())
}

fn prep(kind: PrepKind, input: &Path, output: &str, config: &RunConfig, out: &mut Out) -> phishguard::Result<()> {
    out.input(input);
    let (n_in, n_out, warnings) = match kind {
        PrepKind::Emails => {
            let records = corpus::load_email_csv(input)?;
            let prepared = corpus::preprocess_emails(&records, &config.prep);
            corpus::write_email_csv(out.create(output)?, &prepared.records)?;
            (records.len(), prepared.records.len(), prepared.warnings)
        }
        PrepKind::Urls => {
            let records = corpus::load_raw_url_csv(input)?;
            let prepared = corpus::preprocess_urls(&records, &config.prep)?;
            corpus::write_url_csv(out.create(output)?, &prepared.records)?;
            (records.len(), prepared.records.len(), prepared.warnings)
        }
    };
    for w in warnings {
        warn!("{w}");
    }
    println!("prep: kept {n_out} of {n_in} records -> {}", out.dir.join(output).display());
    Ok(())
}

fn split_records<T: Clone>(records: &[T], config: &RunConfig) -> phishguard::Result<(Vec<T>, Vec<T>)> {
    let s = corpus::split(records.len(), config.split_ratio, config.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&s.train_indices), pick(&s.test_indices)))
}

fn score(probs: &[f64], labels: &[u8], threshold: f64) -> phishguard::Result<(Vec<u8>, MetricsReport)> {
    let preds: Vec<u8> = probs.iter().map(|&p| (p >= threshold) as u8).collect();
    let m = eval::metrics(&eval::confusion(&preds, labels)?)?;
    Ok((preds, m))
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    format_version: u32,
    /// Model names, best F1 first.
    ranking: Vec<&'a str>,
    models: serde_json::Value,
}

fn metrics_json(table: &ComparisonTable) -> phishguard::Result<String> {
    let file = MetricsFile {
        format_version: FORMAT_VERSION,
        ranking: table.rows.iter().map(|r| r.0.as_str()).collect(),
        models: serde_json::from_str(&table.to_json()?)?,
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

fn write_predictions(
    w: impl std::io::Write,
    key: &str,
    keys: &[String],
    labels: &[u8],
    probs: &[f64],
    preds: &[u8],
) -> phishguard::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let map = |e: csv::Error| Error::Format(format!("writing predictions: {e}"));
    csv.write_record([key, "label", "prob", "prediction"]).map_err(map)?;
    for i in 0..keys.len() {
        csv.write_record([
            keys[i].as_str(),
            &labels[i].to_string(),
            &format!("{:?}", probs[i]),
            &preds[i].to_string(),
        ])
        .map_err(map)?;
    }
    csv.flush().map_err(|e| Error::Format(format!("writing predictions: {e}")))
}

fn train_url(kind: UrlModelKind, input: &Path, config: &RunConfig, out: &mut Out) -> phishguard::Result<()> {
    out.input(input);
    let records: Vec<UrlRecord> = corpus::load_url_csv(input)?
        .into_iter()
        .map(|r| UrlRecord {
            url: r.url.trim().to_lowercase(),
            label: r.label,
        })
        .collect();
    let (train, test) = split_records(&records, config)?;
    let urls = |rs: &[UrlRecord]| rs.iter().map(|r| r.url.clone()).collect::<Vec<_>>();
    let labels = |rs: &[UrlRecord]| rs.iter().map(|r| r.label).collect::<Vec<_>>();
    let (train_urls, test_urls) = (urls(&train), urls(&test));
    let (y_train, y_test) = (labels(&train), labels(&test));

    let started = Instant::now();
    let vectorizer = tfidf::fit(&train_urls, &config.tfidf)?;
    let x_train = vectorizer.transform_many(&train_urls);
    let x_test = vectorizer.transform_many(&test_urls);
    info!(
        "tf-idf: {} grams from {} training URLs in {:.2?}",
        vectorizer.n_features(),
        train_urls.len(),
        started.elapsed()
    );

    let started = Instant::now();
    let nf = vectorizer.n_features();
    let (model, name) = match kind {
        UrlModelKind::Logreg => (
            UrlModel::LogReg(train_logreg(&x_train, &y_train, nf, &config.linear)?),
            "tfidf+logreg",
        ),
        UrlModelKind::Rf => (
            UrlModel::Forest(train_forest(&x_train, &y_train, nf, &config.forest)?),
            "tfidf+rf",
        ),
    };
    info!("{name}: trained in {:.2?}", started.elapsed());

    let predict = |x: &[phishguard::tfidf::SparseVector]| -> phishguard::Result<Vec<f64>> {
        x.par_iter().map(|v| model.predict_proba(v)).collect()
    };
    let test_probs = predict(&x_test)?;
    let (test_preds, test_metrics) = score(&test_probs, &y_test, config.decision_threshold)?;
    let (_, train_metrics) = score(&predict(&x_train)?, &y_train, config.decision_threshold)?;

    out.write(TFIDF_FILE, &vectorizer.to_json()?)?;
    out.write(URL_MODEL_FILE, &model.to_json()?)?;
    let table = compare_models(&[(name.to_string(), test_metrics)]);
    out.write("metrics.json", &metrics_json(&table)?)?;
    out.write(
        "train_metrics.json",
        &metrics_json(&compare_models(&[(name.to_string(), train_metrics)]))?,
    )?;
    write_predictions(out.create("predictions.csv")?, "url", &test_urls, &y_test, &test_probs, &test_preds)?;
    println!("held-out {} of {} URLs:\n{}", test.len(), records.len(), table.to_text());
    Ok(())
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    format_version: u32,
    best_epoch: usize,
    train_size: usize,
    validation_size: usize,
    epochs: &'a [textmodel::EpochRecord],
}

fn train_text_cmd(input: &Path, vocab_path: Option<&Path>, config: &RunConfig, out: &mut Out) -> phishguard::Result<()> {
    out.input(input);
    let records = corpus::load_email_csv(input)?;
    let (train, test) = split_records(&records, config)?;
    let texts = |rs: &[EmailRecord]| rs.iter().map(|r| r.text.clone()).collect::<Vec<_>>();
    let labels = |rs: &[EmailRecord]| rs.iter().map(|r| r.label).collect::<Vec<_>>();
    let (train_texts, test_texts) = (texts(&train), texts(&test));
    let (y_train, y_test) = (labels(&train), labels(&test));

    let vocab = match vocab_path {
        Some(p) => {
            out.input(p);
            WordPieceVocab::load(p)?
        }
        None => build_vocab(&train_texts, config.vocab_size)?,
    };
    let enc = config.encoder.with_vocab(vocab.len());
    let data = textmodel::tokenize_labeled(&vocab, &train_texts, &y_train, enc.max_len)?;
    let started = Instant::now();
    let outcome = train_text(&data, &enc, &config.text)?;
    info!(
        "encoder: {} parameters, best epoch {} of {}, {:.2?}",
        outcome.params.n_params(),
        outcome.best_epoch,
        config.text.epochs,
        started.elapsed()
    );
    let history = HistoryFile {
        format_version: FORMAT_VERSION,
        best_epoch: outcome.best_epoch,
        train_size: outcome.train_size,
        validation_size: outcome.validation_size,
        epochs: &outcome.history,
    };
    let model = TextModel::new(vocab, outcome.params)?;

    let test_probs = model.predict_many(&test_texts)?;
    let (test_preds, test_metrics) = score(&test_probs, &y_test, config.decision_threshold)?;
    let (_, train_metrics) = score(&model.predict_many(&train_texts)?, &y_train, config.decision_threshold)?;

    let vocab_file = out.path(VOCAB_FILE);
    let model_file = out.path(TEXT_MODEL_FILE);
    model.save(&vocab_file, &model_file)?;
    let name = "encoder";
    let table = compare_models(&[(name.to_string(), test_metrics)]);
    out.write("metrics.json", &metrics_json(&table)?)?;
    out.write(
        "train_metrics.json",
        &metrics_json(&compare_models(&[(name.to_string(), train_metrics)]))?,
    )?;
    out.write("history.json", &(serde_json::to_string_pretty(&history)? + "\n"))?;
    let ids: Vec<String> = test.iter().map(|r| r.id.to_string()).collect();
    write_predictions(out.create("predictions.csv")?, "id", &ids, &y_test, &test_probs, &test_preds)?;
    println!(
        "train accuracy {:.4}; held-out {} of {} emails:\n{}",
        train_metrics.accuracy,
        test.len(),
        records.len(),
        table.to_text()
    );
    Ok(())
}

fn read_file(p: &Path) -> phishguard::Result<String> {
    fs::read_to_string(p).map_err(|e| Error::io(p, e))
}

fn load_url_pipeline(tfidf_path: &Path, model_path: &Path) -> phishguard::Result<UrlPipeline> {
    let vectorizer = TfidfModel::from_json(&read_file(tfidf_path)?)?;
    let model = UrlModel::from_json(&read_file(model_path)?)?;
    UrlPipeline::new(vectorizer, model)
}

/// Regular, non-hidden files of `dir` in file-name order, or `path` itself.
fn email_files(path: &Path) -> phishguard::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if p.is_file() && !hidden {
            files.push(p);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

#[derive(Serialize, Deserialize)]
pub struct FileVerdict {
    pub format_version: u32,
    pub file: String,
    #[serde(flatten)]
    pub report: VerdictReport,
}

fn classify(path: &Path, models: &ModelPaths, config: &RunConfig, out: &mut Out) -> phishguard::Result<()> {
    let text_model = TextModel::load(&models.vocab, &models.text_model)?;
    let urls = load_url_pipeline(&models.tfidf, &models.url_model)?;
    let fusion = config.fusion.build()?;
    for p in [&models.vocab, &models.text_model, &models.tfidf, &models.url_model] {
        out.input(p);
    }
    let files = email_files(path)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("no email files in {}", path.display())));
    }
    for f in &files {
        out.input(f);
    }
    let verdicts = files
        .par_iter()
        .map(|f| {
            let raw = fs::read(f).map_err(|e| Error::io(f, e))?;
            Ok(FileVerdict {
                format_version: FORMAT_VERSION,
                file: f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                report: classify_email(&raw, &text_model, &urls, &fusion)?,
            })
        })
        .collect::<phishguard::Result<Vec<_>>>()?;
    for v in &verdicts {
        println!("{}", serde_json::to_string(v)?);
    }
    out.write("verdicts.json", &(serde_json::to_string_pretty(&verdicts)? + "\n"))?;
    Ok(())
}

/// Reads `label` and `prediction` columns from a CSV.
fn read_predictions(path: &Path) -> phishguard::Result<(Vec<u8>, Vec<u8>)> {
    let name = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{name}: {e}")))?;
    let headers = rdr.headers().map_err(|e| Error::Format(format!("{name}: {e}")))?.clone();
    let col = |c: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(c))
            .ok_or_else(|| Error::Format(format!("{name}: missing column {c:?}")))
    };
    let (li, pi) = (col("label")?, col("prediction")?);
    let (mut labels, mut preds) = (Vec::new(), Vec::new());
    for (i, row) in rdr.records().enumerate() {
        let row_no = i as u64 + 2;
        let row = row.map_err(|e| Error::Row {
            source_name: name.clone(),
            row: row_no,
            message: e.to_string(),
        })?;
        let bit = |idx: usize, what: &str| match row.get(idx).map(str::trim) {
            Some("0") => Ok(0u8),
            Some("1") => Ok(1u8),
            other => Err(Error::Row {
                source_name: name.clone(),
                row: row_no,
                message: format!("{what} must be 0 or 1, got {other:?}"),
            }),
        };
        labels.push(bit(li, "label")?);
        preds.push(bit(pi, "prediction")?);
    }
    Ok((labels, preds))
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    predictions: &[(String, PathBuf)],
    url_models: &[PathBuf],
    urls: Option<&Path>,
    text_models: &[PathBuf],
    emails: Option<&Path>,
    config: &RunConfig,
    out: &mut Out,
) -> phishguard::Result<()> {
    let mut results: Vec<(String, MetricsReport)> = Vec::new();
    for (name, path) in predictions {
        out.input(path);
        let (labels, preds) = read_predictions(path)?;
        results.push((name.clone(), eval::metrics(&eval::confusion(&preds, &labels)?)?));
    }
    if let Some(urls_path) = urls {
        out.input(urls_path);
        let records = corpus::load_url_csv(urls_path)?;
        let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
        for dir in url_models {
            let pipeline = load_url_pipeline(&dir.join(TFIDF_FILE), &dir.join(URL_MODEL_FILE))?;
            let probs = records
                .par_iter()
                .map(|r| pipeline.predict(&r.url))
                .collect::<phishguard::Result<Vec<_>>>()?;
            results.push((dir_name(dir), score(&probs, &labels, config.decision_threshold)?.1));
        }
    }
    if let Some(emails_path) = emails {
        out.input(emails_path);
        let records = corpus::load_email_csv(emails_path)?;
        let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
        let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
        for dir in text_models {
            let model = TextModel::load(&dir.join(VOCAB_FILE), &dir.join(TEXT_MODEL_FILE))?;
            let probs = model.predict_many(&texts)?;
            results.push((dir_name(dir), score(&probs, &labels, config.decision_threshold)?.1));
        }
    }
    let mut seen = std::collections::HashSet::new();
    if let Some((dup, _)) = results.iter().find(|(n, _)| !seen.insert(n.clone())) {
        return Err(Error::invalid(format!("model name {dup:?} is used twice")));
    }
    let table = compare_models(&results);
    out.write("metrics.json", &metrics_json(&table)?)?;
    out.write("comparison.txt", &table.to_text())?;
    print!("{}", table.to_text());
    Ok(())
}
