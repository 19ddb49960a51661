//! `phishguard` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phishguard::forest::MaxFeatures;
use phishguard::fusion::UrlAggregation;

use config::{RunConfig, TextMode};

/// Invalid flags, config keys or values.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(UsageError),
    Data(phishguard::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

impl From<phishguard::Error> for Failure {
    fn from(e: phishguard::Error) -> Self {
        Failure::Data(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "phishguard", version, about = "Dual-path phishing detection: email text and URLs")]
struct Cli {
    /// Master seed; every seeded component derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// File of key=value lines overriding the resolved configuration
    /// (dotted keys such as forest.n_estimators=50).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Pin every setting the paper states (n-grams 2-6, 100 trees, 3 epochs,
    /// lr 2e-5, batch 8, 80/20 split, 256 tokens). Explicit flags still win.
    #[arg(long, global = true)]
    paper_defaults: bool,

    /// Directory for artifacts and the run manifest.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    output_dir: PathBuf,

    /// Log progress to stderr (-vv for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean and subsample a raw email or URL CSV.
    Prep(PrepArgs),
    /// Fit TF-IDF and a URL classifier on an 80/20 split.
    TrainUrl(TrainUrlArgs),
    /// Build a WordPiece vocabulary and train the text encoder.
    TrainText(TrainTextArgs),
    /// Classify one email file or every file in a directory.
    Classify(ClassifyArgs),
    /// Score prediction files or trained models and compare them.
    Eval(EvalArgs),
    /// Re-run a command exactly as recorded in its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrepKind {
    Emails,
    Urls,
}

#[derive(Args, Debug)]
struct PrepArgs {
    #[arg(value_enum)]
    kind: PrepKind,
    /// Raw CSV (`text,label` for emails, `url,type` for URLs).
    #[arg(long)]
    input: PathBuf,
    /// Output file name inside the output directory.
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    target_size: Option<usize>,
    /// Minimum text (emails) or URL length in characters.
    #[arg(long)]
    min_len: Option<usize>,
    /// Class-balanced email subsample (default).
    #[arg(long, overrides_with = "no_balance")]
    balance: bool,
    #[arg(long)]
    no_balance: bool,
    /// Drop URLs without a dot.
    #[arg(long)]
    require_dot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UrlModelKind {
    Logreg,
    Rf,
}

#[derive(Args, Debug)]
struct TrainUrlArgs {
    #[arg(long, value_enum)]
    model: UrlModelKind,
    /// URL CSV with `url,type` or `url,label` columns.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    ngram_min: Option<usize>,
    #[arg(long)]
    ngram_max: Option<usize>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    n_estimators: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// `sqrt`, `all` or a count.
    #[arg(long, value_parser = parse_max_features)]
    max_features: Option<MaxFeatures>,
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
}

fn parse_max_features(s: &str) -> Result<MaxFeatures, String> {
    match s {
        "sqrt" => Ok(MaxFeatures::Sqrt),
        "all" => Ok(MaxFeatures::All),
        n => n
            .parse::<usize>()
            .map(MaxFeatures::Count)
            .map_err(|_| format!("expected sqrt, all or a count, got {n:?}")),
    }
}

#[derive(Args, Debug)]
struct TrainTextArgs {
    /// Email CSV with `text,label` columns.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<TextMode>,
    /// Reuse an existing vocabulary file instead of building one.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// An email file, or a directory whose files are classified in name order.
    path: PathBuf,
    /// Directory holding vocab.txt, text_model.json, tfidf.json and
    /// url_model.json.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    text_model: Option<PathBuf>,
    #[arg(long)]
    tfidf: Option<PathBuf>,
    #[arg(long)]
    url_model: Option<PathBuf>,
    #[arg(long)]
    w_text: Option<f64>,
    #[arg(long)]
    w_url: Option<f64>,
    #[arg(long, value_enum)]
    aggregation: Option<Aggregation>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Aggregation {
    Max,
    Mean,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// NAME=FILE; a CSV with `label` and `prediction` columns. Repeatable.
    #[arg(long = "predictions", value_name = "NAME=FILE")]
    predictions: Vec<String>,
    /// Directory with tfidf.json and url_model.json, scored on --urls.
    #[arg(long)]
    url_models: Vec<PathBuf>,
    #[arg(long)]
    urls: Option<PathBuf>,
    /// Directory with vocab.txt and text_model.json, scored on --emails.
    #[arg(long)]
    text_models: Vec<PathBuf>,
    #[arg(long)]
    emails: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, UsageError> {
    let mut c = RunConfig::default();
    if let Command::TrainText(a) = &cli.command {
        if let Some(mode) = a.mode {
            c.set_text_mode(mode);
        }
    }
    if let Some(path) = &cli.config {
        c.apply_override_file(path)?;
    }
    if cli.paper_defaults {
        c.apply_paper_defaults();
    }
    match &cli.command {
        Command::Prep(a) => {
            match a.kind {
                PrepKind::Emails => {
                    set(&mut c.prep.email_target_size, a.target_size);
                    set(&mut c.prep.min_text_len, a.min_len);
                }
                PrepKind::Urls => {
                    set(&mut c.prep.url_target_size, a.target_size);
                    set(&mut c.prep.min_url_len, a.min_len);
                }
            }
            if a.balance {
                c.prep.balance = true;
            }
            if a.no_balance {
                c.prep.balance = false;
            }
            if a.require_dot {
                c.prep.require_dot = true;
            }
        }
        Command::TrainUrl(a) => {
            set(&mut c.tfidf.n_min, a.ngram_min);
            set(&mut c.tfidf.n_max, a.ngram_max);
            set(&mut c.split_ratio, a.split);
            set(&mut c.forest.n_estimators, a.n_estimators);
            if a.max_depth.is_some() {
                c.forest.max_depth = a.max_depth;
            }
            set(&mut c.forest.max_features, a.max_features);
            set(&mut c.forest.min_samples_leaf, a.min_samples_leaf);
            set(&mut c.linear.learning_rate, a.lr);
            set(&mut c.linear.epochs, a.epochs);
            set(&mut c.linear.l2_lambda, a.l2);
        }
        Command::TrainText(a) => {
            set(&mut c.vocab_size, a.vocab_size);
            set(&mut c.text.epochs, a.epochs);
            set(&mut c.text.learning_rate, a.lr);
            set(&mut c.text.batch_size, a.batch_size);
            set(&mut c.text.momentum, a.momentum);
            set(&mut c.text.validation_fraction, a.validation_fraction);
            set(&mut c.split_ratio, a.split);
            set(&mut c.encoder.num_layers, a.layers);
            set(&mut c.encoder.num_heads, a.heads);
            set(&mut c.encoder.d_model, a.d_model);
            set(&mut c.encoder.d_ff, a.d_ff);
            set(&mut c.encoder.max_len, a.max_len);
            set(&mut c.encoder.dropout_rate, a.dropout);
        }
        Command::Classify(a) => {
            set(&mut c.fusion.w_text, a.w_text);
            set(&mut c.fusion.w_url, a.w_url);
            set(&mut c.fusion.threshold, a.threshold);
            if let Some(agg) = a.aggregation {
                c.fusion.url_aggregation = match agg {
                    Aggregation::Max => UrlAggregation::Max,
                    Aggregation::Mean => UrlAggregation::Mean,
                };
            }
        }
        Command::Eval(_) | Command::Replay(_) => {}
    }
    set(&mut c.seed, cli.seed);
    c.propagate_seed();
    c.validate()?;
    Ok(c)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Replay(a) = &cli.command {
        return manifest::replay(&a.manifest, &cli.output_dir);
    }
    let config = resolve_config(&cli)?;
    let invocation = commands::Invocation::from_cli(&cli.command)?;
    commands::execute(&invocation, &config, &cli.output_dir)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Data(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("internal error: the command panicked");
            ExitCode::from(3)
        }
    }
}
