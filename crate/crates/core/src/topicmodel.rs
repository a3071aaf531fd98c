//! LDA topic modeling by collapsed Gibbs sampling.
//!
//! Counts are expanded into individual token instances. Each sweep resamples
//! every token's topic from
//!
//! ```text
//! p(z = k) ∝ (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)
//! ```
//!
//! with the token's own assignment excluded from the counts. After the final
//! sweep the smoothed distributions are
//! `phi[k][w] = (n_kw + beta) / (n_k + V * beta)` and
//! `theta[d][k] = (n_dk + alpha) / (n_d + K * alpha)`.
//! The chain is fully determined by the seed.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectorize::{TermDocMatrix, Vocabulary};

#[derive(Debug, Error)]
pub enum TopicModelError {
    #[error("topic count must be at least 1")]
    ZeroTopics,
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("priors must be positive, got alpha={alpha}, beta={beta}")]
    NonPositivePrior { alpha: f64, beta: f64 },
    #[error("corpus has no token instances")]
    ZeroTokens,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: u32,
    pub seed: u64,
}

impl LdaParams {
    /// Standard heuristics: `alpha = 50 / K`, `beta = 0.01`.
    pub fn with_default_priors(topics: usize, iterations: u32, seed: u64) -> Self {
        LdaParams {
            topics,
            alpha: 50.0 / topics.max(1) as f64,
            beta: 0.01,
            iterations,
            seed,
        }
    }

    fn validate(&self) -> Result<(), TopicModelError> {
        if self.topics == 0 {
            return Err(TopicModelError::ZeroTopics);
        }
        if self.iterations == 0 {
            return Err(TopicModelError::ZeroIterations);
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(TopicModelError::NonPositivePrior {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }
}

/// Fitted LDA state. `phi` is K x V row-stochastic, `theta` is D x K
/// row-stochastic; both are smoothed by the priors so every entry is
/// strictly positive. `assignments` holds the final per-token topics in
/// document order (not serialized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: u32,
    pub seed: u64,
    pub vocab_size: usize,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    #[serde(skip)]
    pub assignments: Vec<u32>,
}

impl TopicModel {
    pub fn doc_count(&self) -> usize {
        self.theta.len()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), TopicModelError> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, TopicModelError> {
        Ok(serde_json::from_reader(r)?)
    }
}

struct GibbsState {
    topics: usize,
    vocab_size: usize,
    /// Word id per token instance, grouped by document.
    token_word: Vec<u32>,
    /// Document id per token instance.
    token_doc: Vec<u32>,
    z: Vec<u32>,
    n_dk: Vec<u32>,
    n_kw: Vec<u32>,
    n_k: Vec<u32>,
    n_d: Vec<u32>,
    doc_count: usize,
}

impl GibbsState {
    fn init(matrix: &TermDocMatrix, params: &LdaParams, rng: &mut ChaCha8Rng) -> Result<Self, TopicModelError> {
        let total = matrix.total_count();
        if total == 0 {
            return Err(TopicModelError::ZeroTokens);
        }
        let k = params.topics;
        let v = matrix.vocab_size();
        let d = matrix.doc_count();
        if k > v {
            log::warn!("topic count {k} exceeds vocabulary size {v}");
        }
        let mut token_word = Vec::with_capacity(total as usize);
        let mut token_doc = Vec::with_capacity(total as usize);
        for (doc, row) in matrix.rows().enumerate() {
            for &(col, count) in row {
                for _ in 0..count {
                    token_word.push(col);
                    token_doc.push(doc as u32);
                }
            }
        }
        let mut state = GibbsState {
            topics: k,
            vocab_size: v,
            z: vec![0; token_word.len()],
            token_word,
            token_doc,
            n_dk: vec![0; d * k],
            n_kw: vec![0; k * v],
            n_k: vec![0; k],
            n_d: vec![0; d],
            doc_count: d,
        };
        for i in 0..state.z.len() {
            let topic = rng.gen_range(0..k) as u32;
            state.z[i] = topic;
            state.bump(i, topic, 1);
        }
        Ok(state)
    }

    fn bump(&mut self, token: usize, topic: u32, delta: i32) {
        let d = self.token_doc[token] as usize;
        let w = self.token_word[token] as usize;
        let k = topic as usize;
        let apply = |c: &mut u32| {
            *c = (*c as i64 + delta as i64) as u32;
        };
        apply(&mut self.n_dk[d * self.topics + k]);
        apply(&mut self.n_kw[k * self.vocab_size + w]);
        apply(&mut self.n_k[k]);
        apply(&mut self.n_d[d]);
    }

    fn sweep(&mut self, alpha: f64, beta: f64, rng: &mut ChaCha8Rng, weights: &mut Vec<f64>) {
        let v_beta = self.vocab_size as f64 * beta;
        for i in 0..self.z.len() {
            let old = self.z[i];
            self.bump(i, old, -1);
            let d = self.token_doc[i] as usize;
            let w = self.token_word[i] as usize;
            weights.clear();
            let mut total = 0.0;
            for k in 0..self.topics {
                let weight = (self.n_dk[d * self.topics + k] as f64 + alpha)
                    * (self.n_kw[k * self.vocab_size + w] as f64 + beta)
                    / (self.n_k[k] as f64 + v_beta);
                total += weight;
                weights.push(weight);
            }
            let mut pick = rng.gen::<f64>() * total;
            let mut new = self.topics - 1;
            for (k, &weight) in weights.iter().enumerate() {
                pick -= weight;
                if pick <= 0.0 {
                    new = k;
                    break;
                }
            }
            let new = new as u32;
            self.z[i] = new;
            self.bump(i, new, 1);
        }
    }

    fn phi(&self, beta: f64) -> Vec<Vec<f64>> {
        let v_beta = self.vocab_size as f64 * beta;
        (0..self.topics)
            .map(|k| {
                let denom = self.n_k[k] as f64 + v_beta;
                (0..self.vocab_size)
                    .map(|w| (self.n_kw[k * self.vocab_size + w] as f64 + beta) / denom)
                    .collect()
            })
            .collect()
    }

    fn theta(&self, alpha: f64) -> Vec<Vec<f64>> {
        let k_alpha = self.topics as f64 * alpha;
        (0..self.doc_count)
            .map(|d| {
                let denom = self.n_d[d] as f64 + k_alpha;
                (0..self.topics)
                    .map(|k| (self.n_dk[d * self.topics + k] as f64 + alpha) / denom)
                    .collect()
            })
            .collect()
    }
}

/// Read-only view of the sampler handed to [`fit_lda_observed`] callbacks
/// after each completed sweep.
pub struct SweepView<'a> {
    state: &'a GibbsState,
    params: &'a LdaParams,
    /// 1-based index of the sweep that just completed.
    pub sweep: u32,
}

impl SweepView<'_> {
    pub fn doc_topic_count(&self, doc: usize, topic: usize) -> u32 {
        self.state.n_dk[doc * self.state.topics + topic]
    }

    pub fn topic_word_count(&self, topic: usize, word: usize) -> u32 {
        self.state.n_kw[topic * self.state.vocab_size + word]
    }

    pub fn topic_count(&self, topic: usize) -> u32 {
        self.state.n_k[topic]
    }

    pub fn doc_length(&self, doc: usize) -> u32 {
        self.state.n_d[doc]
    }

    pub fn doc_count(&self) -> usize {
        self.state.doc_count
    }

    pub fn topics(&self) -> usize {
        self.state.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.state.vocab_size
    }

    /// Count conservation: per-document topic counts must sum to the document
    /// length, and per-topic word counts must sum to the topic total.
    pub fn counts_conserved(&self) -> bool {
        let s = self.state;
        let docs_ok = (0..s.doc_count).all(|d| {
            (0..s.topics)
                .map(|k| s.n_dk[d * s.topics + k])
                .sum::<u32>()
                == s.n_d[d]
        });
        let topics_ok = (0..s.topics).all(|k| {
            (0..s.vocab_size)
                .map(|w| s.n_kw[k * s.vocab_size + w])
                .sum::<u32>()
                == s.n_k[k]
        });
        docs_ok && topics_ok
    }

    /// Materialize the smoothed model as it stands after this sweep.
    pub fn snapshot(&self) -> TopicModel {
        TopicModel {
            topics: self.params.topics,
            alpha: self.params.alpha,
            beta: self.params.beta,
            iterations: self.sweep,
            seed: self.params.seed,
            vocab_size: self.state.vocab_size,
            phi: self.state.phi(self.params.beta),
            theta: self.state.theta(self.params.alpha),
            assignments: self.state.z.clone(),
        }
    }
}

pub fn fit_lda(matrix: &TermDocMatrix, params: &LdaParams) -> Result<TopicModel, TopicModelError> {
    fit_lda_observed(matrix, params, |_| {})
}

/// Fit LDA, invoking `observer` after every completed sweep. Used for
/// invariant checks and mid-chain snapshots; the observer cannot perturb
/// the chain.
pub fn fit_lda_observed(
    matrix: &TermDocMatrix,
    params: &LdaParams,
    mut observer: impl FnMut(&SweepView<'_>),
) -> Result<TopicModel, TopicModelError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = GibbsState::init(matrix, params, &mut rng)?;
    let mut weights = Vec::with_capacity(params.topics);
    for sweep in 1..=params.iterations {
        state.sweep(params.alpha, params.beta, &mut rng, &mut weights);
        observer(&SweepView {
            state: &state,
            params,
            sweep,
        });
    }
    Ok(TopicModel {
        topics: params.topics,
        alpha: params.alpha,
        beta: params.beta,
        iterations: params.iterations,
        seed: params.seed,
        vocab_size: state.vocab_size,
        phi: state.phi(params.beta),
        theta: state.theta(params.alpha),
        assignments: state.z,
    })
}

/// Map of documents to topics under the association threshold. Documents are
/// identified by their row index in the fitted matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub threshold: f64,
    /// `topics[k]` lists the rows assigned to topic `k`.
    pub topics: Vec<Vec<usize>>,
    pub unassigned: Vec<usize>,
}

/// Assign each document to the argmax topic of its theta row iff that maximum
/// reaches `threshold`; ties break toward the lowest topic index.
pub fn assign_documents(model: &TopicModel, threshold: f64) -> TopicAssignment {
    let mut topics: Vec<Vec<usize>> = vec![Vec::new(); model.topics];
    let mut unassigned = Vec::new();
    for (doc, row) in model.theta.iter().enumerate() {
        let (mut best_k, mut best) = (0usize, f64::NEG_INFINITY);
        for (k, &p) in row.iter().enumerate() {
            if p > best {
                best = p;
                best_k = k;
            }
        }
        if best >= threshold {
            topics[best_k].push(doc);
        } else {
            unassigned.push(doc);
        }
    }
    TopicAssignment {
        threshold,
        topics,
        unassigned,
    }
}

/// Per-topic term lists: every term that occurs in at least one document
/// assigned to the topic, weighted by the summed counts over those documents.
/// Topics with no assigned documents keep an empty list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTermDictionary {
    pub topics: Vec<Vec<(String, u64)>>,
}

pub fn topic_term_dictionary(
    assignment: &TopicAssignment,
    matrix: &TermDocMatrix,
    vocab: &Vocabulary,
) -> TopicTermDictionary {
    let mut topics = Vec::with_capacity(assignment.topics.len());
    for docs in &assignment.topics {
        let mut sums: Vec<u64> = vec![0; vocab.len()];
        for &doc in docs {
            for &(col, count) in matrix.row(doc) {
                sums[col as usize] += count as u64;
            }
        }
        let mut entries: Vec<(String, u64)> = sums
            .into_iter()
            .enumerate()
            .filter(|&(_, n)| n > 0)
            .map(|(col, n)| (vocab.term(col).to_string(), n))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        topics.push(entries);
    }
    TopicTermDictionary { topics }
}

/// The `n` highest-probability terms of a topic, descending, ties broken
/// lexicographically. Returns all `V` entries when `n` exceeds the
/// vocabulary.
pub fn top_terms(model: &TopicModel, vocab: &Vocabulary, topic: usize, n: usize) -> Vec<(String, f64)> {
    assert!(topic < model.topics, "topic index out of range");
    let row = &model.phi[topic];
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| {
        row[b]
            .partial_cmp(&row[a])
            .unwrap()
            .then_with(|| vocab.term(a).cmp(vocab.term(b)))
    });
    order
        .into_iter()
        .take(n.min(row.len()))
        .map(|col| (vocab.term(col).to_string(), row[col]))
        .collect()
}

/// Per-token held-out log-likelihood under a fitted model. Each held-out
/// document is folded in by Gibbs sweeps that keep phi fixed
/// (`p(z = k) ∝ (n_dk + alpha) * phi[k][w]`), after which the token
/// likelihood is `sum_k theta_dk * phi[k][w]`.
pub fn heldout_log_likelihood(
    model: &TopicModel,
    heldout: &TermDocMatrix,
    fold_in_sweeps: u32,
    seed: u64,
) -> f64 {
    let k = model.topics;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total_ll = 0.0;
    let mut total_tokens = 0u64;
    for row in heldout.rows() {
        let mut words: Vec<u32> = Vec::new();
        for &(col, count) in row {
            for _ in 0..count {
                words.push(col);
            }
        }
        if words.is_empty() {
            continue;
        }
        let mut z: Vec<usize> = Vec::with_capacity(words.len());
        let mut n_dk = vec![0u32; k];
        for _ in 0..words.len() {
            let t = rng.gen_range(0..k);
            z.push(t);
            n_dk[t] += 1;
        }
        let mut weights = vec![0.0; k];
        for _ in 0..fold_in_sweeps {
            for (i, &w) in words.iter().enumerate() {
                n_dk[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let weight = (n_dk[t] as f64 + model.alpha) * model.phi[t][w as usize];
                    weights[t] = weight;
                    total += weight;
                }
                let mut pick = rng.gen::<f64>() * total;
                let mut new = k - 1;
                for (t, &weight) in weights.iter().enumerate() {
                    pick -= weight;
                    if pick <= 0.0 {
                        new = t;
                        break;
                    }
                }
                z[i] = new;
                n_dk[new] += 1;
            }
        }
        let denom = words.len() as f64 + k as f64 * model.alpha;
        let theta: Vec<f64> = n_dk
            .iter()
            .map(|&c| (c as f64 + model.alpha) / denom)
            .collect();
        for &w in &words {
            let p: f64 = (0..k).map(|t| theta[t] * model.phi[t][w as usize]).sum();
            total_ll += p.ln();
        }
        total_tokens += words.len() as u64;
    }
    total_ll / total_tokens.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::{build_vocabulary, transform, MinDf, VocabSettings};
    use crate::textprep::TokenizedDoc;

    fn matrix_from_rows(v: usize, rows: Vec<Vec<(u32, u32)>>) -> TermDocMatrix {
        TermDocMatrix::from_rows(v, rows)
    }

    /// 3 disjoint 20-term topic vocabularies, `docs_per_topic` docs of
    /// `doc_len` tokens drawn uniformly from the planted topic's vocabulary.
    pub(crate) fn planted_corpus(
        docs_per_topic: usize,
        doc_len: usize,
        seed: u64,
    ) -> (TermDocMatrix, Vec<usize>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for topic in 0..3usize {
            for _ in 0..docs_per_topic {
                let mut counts = vec![0u32; 60];
                for _ in 0..doc_len {
                    let w = topic * 20 + rng.gen_range(0..20);
                    counts[w] += 1;
                }
                let row: Vec<(u32, u32)> = counts
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, n)| n > 0)
                    .map(|(w, n)| (w as u32, n))
                    .collect();
                rows.push(row);
                labels.push(topic);
            }
        }
        (matrix_from_rows(60, rows), labels)
    }

    /// Best one-to-one topic matching purity: fraction of documents whose
    /// argmax topic maps to the planted label under the best permutation.
    pub(crate) fn best_matching_purity(model: &TopicModel, labels: &[usize]) -> f64 {
        let k = model.topics;
        let argmax: Vec<usize> = model
            .theta
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .unwrap()
                    .0
            })
            .collect();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0usize;
        permute(&mut perm, 0, &mut |p| {
            let hits = argmax
                .iter()
                .zip(labels)
                .filter(|&(&a, &l)| p[a] == l)
                .count();
            best = best.max(hits);
        });
        best as f64 / labels.len() as f64
    }

    fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
        if start == items.len() {
            visit(items);
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            permute(items, start + 1, visit);
            items.swap(start, i);
        }
    }

    #[test]
    fn k_equals_one_forces_degenerate_distributions() {
        let m = matrix_from_rows(3, vec![vec![(0, 2), (1, 1)], vec![(2, 4)]]);
        let params = LdaParams {
            topics: 1,
            alpha: 0.5,
            beta: 0.01,
            iterations: 5,
            seed: 1,
        };
        let model = fit_lda(&m, &params).unwrap();
        for row in &model.theta {
            assert_eq!(row.len(), 1);
            assert!((row[0] - 1.0).abs() < 1e-12);
        }
        // phi row = smoothed normalized corpus term frequencies.
        let total = 7.0;
        let v_beta = 3.0 * 0.01;
        for (w, &count) in [2.0, 1.0, 4.0].iter().enumerate() {
            let expect = (count + 0.01) / (total + v_beta);
            assert!((model.phi[0][w] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_topics_are_recovered() {
        let (matrix, labels) = planted_corpus(40, 30, 11);
        let params = LdaParams {
            topics: 3,
            alpha: 0.5,
            beta: 0.01,
            iterations: 100,
            seed: 13,
        };
        let model = fit_lda(&matrix, &params).unwrap();
        let purity = best_matching_purity(&model, &labels);
        assert!(purity >= 0.9, "purity {purity}");
    }

    #[test]
    fn seed_determinism_bit_identical() {
        let (matrix, _) = planted_corpus(10, 20, 3);
        let params = LdaParams {
            topics: 3,
            alpha: 0.5,
            beta: 0.01,
            iterations: 30,
            seed: 42,
        };
        let a = fit_lda(&matrix, &params).unwrap();
        let b = fit_lda(&matrix, &params).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.theta, b.theta);
        let c = fit_lda(
            &matrix,
            &LdaParams {
                seed: 43,
                ..params
            },
        )
        .unwrap();
        assert_ne!(a.assignments, c.assignments);
    }

    #[test]
    fn counts_conserved_and_rows_stochastic_every_sweep() {
        let (matrix, _) = planted_corpus(10, 15, 5);
        let params = LdaParams {
            topics: 3,
            alpha: 0.5,
            beta: 0.01,
            iterations: 20,
            seed: 9,
        };
        let mut sweeps = 0u32;
        let model = fit_lda_observed(&matrix, &params, |view| {
            sweeps += 1;
            assert!(view.counts_conserved(), "sweep {}", view.sweep);
            let snap = view.snapshot();
            for row in &snap.phi {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p > 0.0));
            }
            for row in &snap.theta {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p > 0.0));
            }
        })
        .unwrap();
        assert_eq!(sweeps, 20);
        assert_eq!(model.iterations, 20);
    }

    #[test]
    fn zero_token_corpus_is_an_error() {
        let m = matrix_from_rows(4, vec![vec![], vec![]]);
        let err = fit_lda(&m, &LdaParams::with_default_priors(2, 10, 1)).unwrap_err();
        assert!(matches!(err, TopicModelError::ZeroTokens));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let m = matrix_from_rows(2, vec![vec![(0, 1)]]);
        assert!(matches!(
            fit_lda(&m, &LdaParams { topics: 0, alpha: 1.0, beta: 1.0, iterations: 1, seed: 0 }),
            Err(TopicModelError::ZeroTopics)
        ));
        assert!(matches!(
            fit_lda(&m, &LdaParams { topics: 1, alpha: 0.0, beta: 1.0, iterations: 1, seed: 0 }),
            Err(TopicModelError::NonPositivePrior { .. })
        ));
        assert!(matches!(
            fit_lda(&m, &LdaParams { topics: 1, alpha: 1.0, beta: 1.0, iterations: 0, seed: 0 }),
            Err(TopicModelError::ZeroIterations)
        ));
    }

    #[test]
    fn assignment_matches_brute_force_scan() {
        let (matrix, _) = planted_corpus(4, 25, 21);
        let model = fit_lda(
            &matrix,
            &LdaParams {
                topics: 3,
                alpha: 0.5,
                beta: 0.01,
                iterations: 50,
                seed: 2,
            },
        )
        .unwrap();
        let assignment = assign_documents(&model, 0.8);
        // Independent scan over theta rows.
        for (doc, row) in model.theta.iter().enumerate() {
            let mut best_k = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best_k] {
                    best_k = k;
                }
            }
            if row[best_k] >= 0.8 {
                assert!(assignment.topics[best_k].contains(&doc));
                for (k, docs) in assignment.topics.iter().enumerate() {
                    if k != best_k {
                        assert!(!docs.contains(&doc));
                    }
                }
            } else {
                assert!(assignment.unassigned.contains(&doc));
            }
        }
    }

    #[test]
    fn assignment_threshold_rules() {
        let model = TopicModel {
            topics: 3,
            alpha: 0.1,
            beta: 0.1,
            iterations: 1,
            seed: 0,
            vocab_size: 2,
            phi: vec![vec![0.5, 0.5]; 3],
            theta: vec![vec![0.85, 0.10, 0.05], vec![0.5, 0.5, 0.0], vec![0.1, 0.8, 0.1]],
            assignments: Vec::new(),
        };
        let a = assign_documents(&model, 0.8);
        assert_eq!(a.topics[0], vec![0]);
        assert_eq!(a.topics[1], vec![2]);
        assert_eq!(a.unassigned, vec![1]);
        // Exact tie at the threshold goes to the lowest topic index.
        let tie = TopicModel {
            theta: vec![vec![0.5, 0.5]],
            topics: 2,
            phi: vec![vec![1.0], vec![1.0]],
            vocab_size: 1,
            ..model
        };
        let a = assign_documents(&tie, 0.5);
        assert_eq!(a.topics[0], vec![0]);
        assert!(a.topics[1].is_empty());
    }

    fn tdoc(id: &str, tokens: &[&str]) -> TokenizedDoc {
        TokenizedDoc {
            doc_id: id.into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn dictionary_single_doc_single_term() {
        let docs = vec![
            tdoc("d0", &["gaza", "strip", "gaza", "strip", "gaza", "strip"]),
            tdoc("d1", &["west", "bank"]),
        ];
        let settings = VocabSettings {
            ngram_min: 2,
            ngram_max: 2,
            min_df: MinDf::Absolute(1),
            max_df: 1.0,
            max_features: 100,
        };
        let vocab = build_vocabulary(&docs, &settings).unwrap();
        let matrix = transform(&docs, &vocab);
        let assignment = TopicAssignment {
            threshold: 0.8,
            topics: vec![vec![0], vec![]],
            unassigned: vec![1],
        };
        let dict = topic_term_dictionary(&assignment, &matrix, &vocab);
        // "gaza strip" has 3 non-overlapping occurrences... the sliding
        // window also counts "strip gaza" twice.
        let topic0: std::collections::HashMap<&str, u64> =
            dict.topics[0].iter().map(|(t, n)| (t.as_str(), *n)).collect();
        assert_eq!(topic0["gaza strip"], 3);
        assert_eq!(topic0["strip gaza"], 2);
        // Unassigned docs contribute nothing; empty topics stay empty.
        assert!(dict.topics[1].is_empty());
        assert!(!dict.topics[0].iter().any(|(t, _)| t == "west bank"));
    }

    #[test]
    fn dictionary_sums_match_raw_matrix() {
        let (matrix, _) = planted_corpus(5, 12, 33);
        let docs0: Vec<usize> = vec![0, 1, 2];
        let docs1: Vec<usize> = vec![3, 4, 10];
        // A fake two-topic assignment over a synthetic vocab of 60 columns.
        let terms: Vec<TokenizedDoc> = (0..2)
            .map(|i| {
                let toks: Vec<String> = (0..61).map(|w| format!("w{w:02}")).collect();
                TokenizedDoc {
                    doc_id: format!("v{i}"),
                    tokens: toks,
                }
            })
            .collect();
        let vocab = build_vocabulary(
            &terms,
            &VocabSettings {
                ngram_min: 2,
                ngram_max: 2,
                min_df: MinDf::Absolute(1),
                max_df: 1.0,
                max_features: 60,
            },
        )
        .unwrap();
        assert_eq!(vocab.len(), 60);
        let assignment = TopicAssignment {
            threshold: 0.8,
            topics: vec![docs0.clone(), docs1.clone()],
            unassigned: Vec::new(),
        };
        let dict = topic_term_dictionary(&assignment, &matrix, &vocab);
        for (topic, docs) in [(0usize, &docs0), (1usize, &docs1)] {
            for (term, weight) in &dict.topics[topic] {
                let col = vocab.index_of(term).unwrap() as u32;
                let expect: u64 = docs
                    .iter()
                    .map(|&d| {
                        matrix
                            .row(d)
                            .iter()
                            .find(|&&(c, _)| c == col)
                            .map(|&(_, n)| n as u64)
                            .unwrap_or(0)
                    })
                    .sum();
                assert_eq!(*weight, expect);
            }
        }
    }

    #[test]
    fn top_terms_sorted_and_complete() {
        let docs = vec![tdoc("d", &["a", "b", "a", "b", "a"])];
        let vocab = build_vocabulary(
            &docs,
            &VocabSettings {
                ngram_min: 2,
                ngram_max: 2,
                min_df: MinDf::Absolute(1),
                max_df: 1.0,
                max_features: 10,
            },
        )
        .unwrap();
        let matrix = transform(&docs, &vocab);
        let model = fit_lda(&matrix, &LdaParams::with_default_priors(1, 5, 7)).unwrap();
        // n = V: full phi row sorted, probabilities summing to 1.
        let all = top_terms(&model, &vocab, 0, vocab.len());
        assert_eq!(all.len(), vocab.len());
        assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
        let sum: f64 = all.iter().map(|(_, p)| p).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        // n > V clips to V entries.
        assert_eq!(top_terms(&model, &vocab, 0, 99).len(), vocab.len());
        // Highest-count bigram ranks first.
        assert_eq!(all[0].0, "a b");
    }

    #[test]
    fn heldout_likelihood_improves_with_training() {
        // Trend check across 20 seeds: per-token held-out log-likelihood at
        // iteration 200 must beat iteration 10 in at least 18 of them.
        let mut passes = 0;
        for seed in 0..20u64 {
            let (full, _) = planted_corpus(100, 50, 1000 + seed);
            // 10% held out: every 10th document.
            let mut train_rows = Vec::new();
            let mut held_rows = Vec::new();
            for (i, row) in full.rows().enumerate() {
                if i % 10 == 0 {
                    held_rows.push(row.to_vec());
                } else {
                    train_rows.push(row.to_vec());
                }
            }
            let train = TermDocMatrix::from_rows(60, train_rows);
            let held = TermDocMatrix::from_rows(60, held_rows);
            let params = LdaParams {
                topics: 3,
                alpha: 0.5,
                beta: 0.01,
                iterations: 200,
                seed,
            };
            let mut snap10 = None;
            let model = fit_lda_observed(&train, &params, |view| {
                if view.sweep == 10 {
                    snap10 = Some(view.snapshot());
                }
            })
            .unwrap();
            let ll10 = heldout_log_likelihood(&snap10.unwrap(), &held, 20, 77);
            let ll200 = heldout_log_likelihood(&model, &held, 20, 77);
            if ll200 >= ll10 {
                passes += 1;
            }
        }
        assert!(passes >= 18, "only {passes}/20 seeds improved");
    }

    #[test]
    fn model_json_roundtrip_is_bit_exact() {
        let (matrix, _) = planted_corpus(5, 10, 17);
        let model = fit_lda(&matrix, &LdaParams::with_default_priors(3, 10, 5)).unwrap();
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let loaded = TopicModel::read_json(&buf[..]).unwrap();
        assert_eq!(loaded.phi, model.phi);
        assert_eq!(loaded.theta, model.theta);
        assert_eq!(loaded.topics, model.topics);
        assert_eq!(loaded.seed, model.seed);
        // Serialization is deterministic byte for byte.
        let mut buf2 = Vec::new();
        loaded.write_json(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
