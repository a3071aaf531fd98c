//! Cross-module properties of the before -> after regression chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conflict_discourse::regress::{apply_scaler, fit_ols, fit_scaler, predict, ScalerKind};
use conflict_discourse::textprep::TokenizedDoc;
use conflict_discourse::toxicity::{
    document_toxicity, score_terms, LexiconScorer, NgramAggregation, ToxicityLexicon,
};
use conflict_discourse::vectorize::{build_vocabulary, transform, MinDf, VocabSettings};

const NEUTRAL: [&str; 8] = ["border", "treaty", "river", "valley", "harbor", "summit", "council", "village"];
const TOXIC: [&str; 4] = ["hate", "bomb", "evil", "idiot"];

fn settings() -> VocabSettings {
    VocabSettings {
        ngram_min: 2,
        ngram_max: 3,
        min_df: MinDf::Absolute(2),
        max_df: 1.0,
        max_features: 500,
    }
}

fn synth_docs(n: usize, toxic_rate: f64, seed: u64, prefix: &str) -> Vec<TokenizedDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let tokens: Vec<String> = (0..30)
                .map(|_| {
                    if rng.gen_bool(toxic_rate) {
                        TOXIC[rng.gen_range(0..TOXIC.len())].to_string()
                    } else {
                        NEUTRAL[rng.gen_range(0..NEUTRAL.len())].to_string()
                    }
                })
                .collect();
            TokenizedDoc {
                doc_id: format!("{prefix}{i:04}"),
                tokens,
            }
        })
        .collect()
}

fn lexicon() -> &'static ToxicityLexicon {
    ToxicityLexicon::bundled()
}

fn doc_scores(matrix: &conflict_discourse::vectorize::TermDocMatrix, vocab: &conflict_discourse::vectorize::Vocabulary) -> Vec<f64> {
    let scorer = LexiconScorer::new(lexicon(), NgramAggregation::Max);
    let tox = score_terms(&vocab.term_strings(), &scorer, 100).unwrap();
    (0..matrix.doc_count())
        .map(|i| document_toxicity(matrix.row(i), vocab, &tox).score)
        .collect()
}

#[test]
fn after_segment_with_triple_toxic_rate_scores_higher() {
    let before = synth_docs(300, 0.05, 1, "b");
    let after = synth_docs(300, 0.15, 2, "a");
    let vb = build_vocabulary(&before, &settings()).unwrap();
    let va = build_vocabulary(&after, &settings()).unwrap();
    let mb = transform(&before, &vb);
    let ma = transform(&after, &va);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let before_mean = mean(&doc_scores(&mb, &vb));
    let after_mean = mean(&doc_scores(&ma, &va));
    assert!(
        after_mean > before_mean,
        "after {after_mean} should exceed before {before_mean}"
    );
}

#[test]
fn novel_after_terms_do_not_influence_predictions() {
    let before = synth_docs(200, 0.08, 3, "b");
    let vocab = build_vocabulary(&before, &settings()).unwrap();
    let mb = transform(&before, &vocab);
    let y = doc_scores(&mb, &vocab);

    let x = mb.to_dense();
    let scaler = fit_scaler(&x, ScalerKind::Robust);
    let xs = apply_scaler(&x, &scaler).unwrap();
    let model = fit_ols(&xs, &y, true, scaler).unwrap();

    let after = synth_docs(80, 0.2, 4, "a");
    let mut after_with_novel = after.clone();
    for doc in &mut after_with_novel {
        // Words the before vocabulary has never seen.
        doc.tokens.push("zyx".to_string());
        doc.tokens.push("wvu".to_string());
    }
    let plain = predict(&model, &transform(&after, &vocab).to_dense()).unwrap();
    let with_novel = predict(&model, &transform(&after_with_novel, &vocab).to_dense()).unwrap();
    // Appending tokens also creates new windows over old words at the seam;
    // only windows made purely of unseen words are guaranteed absent from the
    // vocabulary, and those exert zero influence.
    assert_eq!(plain.len(), with_novel.len());
    for (a, b) in plain.iter().zip(&with_novel) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn end_to_end_matches_naive_dense_reimplementation() {
    let before = synth_docs(150, 0.1, 5, "b");
    let after = synth_docs(60, 0.2, 6, "a");
    let vocab = build_vocabulary(&before, &settings()).unwrap();
    let mb = transform(&before, &vocab);
    let ma = transform(&after, &vocab);
    let y = doc_scores(&mb, &vocab);

    let x = mb.to_dense();
    let scaler = fit_scaler(&x, ScalerKind::MaxAbs);
    let xs = apply_scaler(&x, &scaler).unwrap();
    let model = fit_ols(&xs, &y, true, scaler.clone()).unwrap();
    let fast = predict(&model, &ma.to_dense()).unwrap();

    // Naive dense path: explicit loops over every entry.
    let v = vocab.len();
    let mut naive = Vec::new();
    for d in 0..ma.doc_count() {
        let mut dense_row = vec![0.0f64; v];
        for &(col, count) in ma.row(d) {
            dense_row[col as usize] = count as f64;
        }
        let mut pred = model.intercept;
        for j in 0..v {
            let scaled = (dense_row[j] - scaler.center[j]) / scaler.scale[j];
            pred += scaled * model.weights[j];
        }
        naive.push(pred);
    }
    for (a, b) in fast.iter().zip(&naive) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn training_mse_is_small_on_learnable_synthetic_data() {
    let before = synth_docs(400, 0.06, 7, "b");
    let vocab = build_vocabulary(&before, &settings()).unwrap();
    let mb = transform(&before, &vocab);
    let y = doc_scores(&mb, &vocab);
    let x = mb.to_dense();
    let scaler = fit_scaler(&x, ScalerKind::Robust);
    let xs = apply_scaler(&x, &scaler).unwrap();
    let model = fit_ols(&xs, &y, true, scaler).unwrap();
    let fitted = predict(&model, &x).unwrap();
    let mse = conflict_discourse::evaluate::mse(&y, &fitted).unwrap();
    assert!(mse < 0.005, "training mse {mse}");
}
