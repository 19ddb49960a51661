mod support {
    pub mod tfidf_oracle;
}

use phishguard::tfidf::{self, Norm, TfidfParams};
use proptest::prelude::*;
use support::tfidf_oracle;

fn params(norm: Norm) -> TfidfParams {
    TfidfParams {
        norm,
        ..TfidfParams::default()
    }
}

fn assert_matches_oracle(corpus: &[&str], probes: &[&str], norm: Norm) {
    let model = tfidf::fit(corpus, &params(norm)).unwrap();
    let oracle = tfidf_oracle::fit(corpus, 2, 6);
    assert_eq!(model.n_features(), oracle.grams.len());
    for (i, g) in oracle.grams.iter().enumerate() {
        assert_eq!(model.vocabulary().gram(i), g);
        assert!((model.idf()[i] - oracle.idf[i]).abs() < 1e-12);
    }
    for s in corpus.iter().chain(probes) {
        let got = model.transform(s).to_dense(model.n_features());
        let want = tfidf_oracle::transform(&oracle, s, 2, 6, norm == Norm::L2);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{s:?}: {a} vs {b}");
        }
    }
}

#[test]
fn fixture_corpora_match_dense_oracle() {
    for corpus in tfidf_oracle::FIXTURE_CORPORA {
        assert_matches_oracle(corpus, &["", "abcxyz", "login.secure", "q"], Norm::L2);
        assert_matches_oracle(corpus, &["abcxyz"], Norm::None);
    }
}

#[test]
fn hand_computed_three_doc_weights() {
    let model = tfidf::fit(&["abc", "abd", "xyz"], &params(Norm::None)).unwrap();
    let v = model.transform("abc");
    let w = |g: &str| v.get(model.vocabulary().index_of(g).unwrap());
    assert!((w("ab") - 1.287_68).abs() < 1e-5);
    // "bc" occurs only in "abc", so df = 1 like "abc" itself.
    assert!((w("bc") - 1.693_15).abs() < 1e-5);
    assert!((w("abc") - 1.693_15).abs() < 1e-5);
    assert_eq!(v.nnz(), 3);
}

fn small_corpus() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-e./:0-9]{0,12}", 1..=10)
}

proptest! {
    #[test]
    fn random_corpora_match_dense_oracle(corpus in small_corpus(), probe in "[a-f./]{0,12}") {
        let refs: Vec<&str> = corpus.iter().map(String::as_str).collect();
        assert_matches_oracle(&refs, &[probe.as_str()], Norm::L2);
    }

    #[test]
    fn fit_ignores_document_order(corpus in small_corpus(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = corpus.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = tfidf::fit(&corpus, &TfidfParams::default()).unwrap();
        let b = tfidf::fit(&shuffled, &TfidfParams::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn nnz_bounded_and_unit_norm(corpus in small_corpus(), probe in "[a-e./]{0,16}") {
        let model = tfidf::fit(&corpus, &TfidfParams::default()).unwrap();
        let v = model.transform(&probe);
        let distinct_known: std::collections::HashSet<&str> = tfidf::char_ngrams(&probe, 2, 6)
            .into_iter()
            .filter(|g| model.vocabulary().index_of(g).is_some())
            .collect();
        prop_assert!(v.nnz() <= distinct_known.len());
        if !v.is_empty() {
            prop_assert!((v.dot(&v) - 1.0).abs() < 1e-9);
            prop_assert!(v.values().iter().all(|&x| x > 0.0));
        }
    }
}
