//! Term and document toxicity scoring.
//!
//! Scores live in `[0, 1]` (0 = not toxic, 1 = extremely toxic). Terms are
//! scored through a pluggable [`TermScorer`]: the bundled lexicon scorer works
//! offline and deterministically; the remote scorer client speaks a small
//! HTTP protocol so a neural model can be stood up behind the same interface.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::fs::OpenOptions;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topicmodel::TopicTermDictionary;
use crate::vectorize::Vocabulary;

#[derive(Debug, Error)]
pub enum ToxicityError {
    #[error("no terms to score")]
    NoTerms,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("remote scorer failed on batch {batch}: {message}")]
    RemoteScorer { batch: usize, message: String },
    #[error("scorer contract violation on batch {batch}: {detail}")]
    ScorerContract { batch: usize, detail: String },
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {problem}")]
    BadLexiconLine {
        path: String,
        line: usize,
        problem: String,
    },
    #[error("cache io error at {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed cache line")]
    BadCacheLine { path: String, line: usize },
}

/// How a batch attempt failed, reported by scorer implementations.
/// `Transport` failures are retryable; `Contract` violations are not.
#[derive(Debug, Clone)]
pub enum ScorerFailure {
    Transport(String),
    Contract(String),
}

/// Scores batches of n-gram terms. Implementations must return one score per
/// input term, positionally aligned, each within `[0, 1]`.
pub trait TermScorer {
    fn id(&self) -> &str;
    fn score_batch(&self, terms: &[&str]) -> Result<Vec<f64>, ScorerFailure>;
}

/// Unigram word -> score lookup loaded from a `word<TAB>score` file.
#[derive(Debug, Clone, Default)]
pub struct ToxicityLexicon {
    scores: HashMap<String, f64>,
}

impl ToxicityLexicon {
    pub fn load(path: &Path) -> Result<Self, ToxicityError> {
        let text = fs::read_to_string(path).map_err(|source| ToxicityError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn parse(text: &str, path: &str) -> Result<Self, ToxicityError> {
        let mut scores = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |problem: &str| ToxicityError::BadLexiconLine {
                path: path.to_string(),
                line: i + 1,
                problem: problem.to_string(),
            };
            let (word, score) = line.split_once('\t').ok_or_else(|| bad("expected word<TAB>score"))?;
            let score: f64 = score.trim().parse().map_err(|_| bad("score is not a number"))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(bad(&format!("score {score} outside [0, 1]")));
            }
            scores.insert(word.trim().to_string(), score);
        }
        Ok(ToxicityLexicon { scores })
    }

    pub fn from_entries<I: IntoIterator<Item = (String, f64)>>(entries: I) -> Self {
        ToxicityLexicon {
            scores: entries.into_iter().collect(),
        }
    }

    pub fn bundled() -> &'static ToxicityLexicon {
        static LEX: OnceLock<ToxicityLexicon> = OnceLock::new();
        LEX.get_or_init(|| {
            ToxicityLexicon::parse(include_str!("../data/toxicity_lexicon.tsv"), "bundled")
                .expect("bundled lexicon is valid")
        })
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.scores.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Digest over the sorted entries; distinguishes lexicons in cache keys.
    fn digest8(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        let sorted: BTreeMap<&str, u64> = self
            .scores
            .iter()
            .map(|(w, &s)| (w.as_str(), s.to_bits()))
            .collect();
        for (w, bits) in sorted {
            hasher.update(w.as_bytes());
            hasher.update(bits.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// How to combine constituent word scores into one n-gram score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NgramAggregation {
    /// A single toxic word makes the n-gram toxic (default).
    Max,
    Mean,
}

/// Score one n-gram against a lexicon: aggregate over its space-separated
/// words, scoring missing words 0.0.
pub fn lexicon_score(term: &str, lexicon: &ToxicityLexicon, aggregation: NgramAggregation) -> f64 {
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for word in term.split_whitespace() {
        let s = lexicon.get(word).unwrap_or(0.0);
        max = max.max(s);
        sum += s;
        n += 1;
    }
    match aggregation {
        NgramAggregation::Max => max,
        NgramAggregation::Mean => {
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        }
    }
}

/// Offline deterministic [`TermScorer`] backed by a [`ToxicityLexicon`].
pub struct LexiconScorer<'a> {
    lexicon: &'a ToxicityLexicon,
    aggregation: NgramAggregation,
    id: String,
}

impl<'a> LexiconScorer<'a> {
    pub fn new(lexicon: &'a ToxicityLexicon, aggregation: NgramAggregation) -> Self {
        let agg = match aggregation {
            NgramAggregation::Max => "max",
            NgramAggregation::Mean => "mean",
        };
        let id = format!("lexicon-{agg}-{}", lexicon.digest8());
        LexiconScorer {
            lexicon,
            aggregation,
            id,
        }
    }
}

impl TermScorer for LexiconScorer<'_> {
    fn id(&self) -> &str {
        &self.id
    }

    fn score_batch(&self, terms: &[&str]) -> Result<Vec<f64>, ScorerFailure> {
        Ok(terms
            .iter()
            .map(|t| lexicon_score(t, self.lexicon, self.aggregation))
            .collect())
    }
}

/// HTTP client for a remote scoring service.
///
/// Protocol: `POST <endpoint>/score` with body `{"terms": [...]}` answered by
/// `{"scores": [...]}`, positionally aligned. Non-200 responses and transport
/// errors are retried with exponential backoff; malformed responses are
/// contract violations and fail immediately.
pub struct RemoteScorer {
    url: String,
    id: String,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl RemoteScorer {
    pub fn new(endpoint: &str) -> Self {
        Self::with_options(endpoint, Duration::from_secs(30), 3, Duration::from_millis(500))
    }

    pub fn with_options(endpoint: &str, timeout: Duration, retries: u32, backoff: Duration) -> Self {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/score") {
            base.to_string()
        } else {
            format!("{base}/score")
        };
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        RemoteScorer {
            id: format!("remote:{url}"),
            url,
            agent,
            retries,
            backoff,
        }
    }

    fn attempt(&self, body: &str, expected: usize) -> Result<Vec<f64>, ScorerFailure> {
        #[derive(Deserialize)]
        struct ScoreResponse {
            scores: Vec<f64>,
        }
        let response = self
            .agent
            .post(&self.url)
            .set("content-type", "application/json")
            .send_string(body)
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => ScorerFailure::Transport(format!("HTTP {code}")),
                ureq::Error::Transport(t) => ScorerFailure::Transport(t.to_string()),
            })?;
        let text = response
            .into_string()
            .map_err(|e| ScorerFailure::Transport(format!("failed reading response: {e}")))?;
        let parsed: ScoreResponse = serde_json::from_str(&text)
            .map_err(|e| ScorerFailure::Contract(format!("unparseable response: {e}")))?;
        if parsed.scores.len() != expected {
            return Err(ScorerFailure::Contract(format!(
                "expected {expected} scores, got {}",
                parsed.scores.len()
            )));
        }
        Ok(parsed.scores)
    }
}

impl TermScorer for RemoteScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score_batch(&self, terms: &[&str]) -> Result<Vec<f64>, ScorerFailure> {
        #[derive(Serialize)]
        struct ScoreRequest<'a> {
            terms: &'a [&'a str],
        }
        let body = serde_json::to_string(&ScoreRequest { terms }).expect("terms serialize");
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&body, terms.len()) {
                Ok(scores) => return Ok(scores),
                Err(ScorerFailure::Contract(c)) => return Err(ScorerFailure::Contract(c)),
                Err(transport) => last = Some(transport),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Term -> score dictionary produced by a scorer run, tagged with the scorer
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermToxicityMap {
    pub scorer_id: String,
    scores: BTreeMap<String, f64>,
}

impl TermToxicityMap {
    pub fn new(scorer_id: String) -> Self {
        TermToxicityMap {
            scorer_id,
            scores: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, term: String, score: f64) {
        self.scores.insert(term, score);
    }

    pub fn get(&self, term: &str) -> Option<f64> {
        self.scores.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scores.iter().map(|(t, &s)| (t.as_str(), s))
    }

    /// True when every vocabulary term has a score.
    pub fn covers(&self, vocab: &Vocabulary) -> bool {
        vocab.terms().all(|t| self.scores.contains_key(&t.term))
    }
}

fn validate_batch(
    batch_index: usize,
    terms: &[&str],
    scores: &[f64],
) -> Result<(), ToxicityError> {
    if scores.len() != terms.len() {
        return Err(ToxicityError::ScorerContract {
            batch: batch_index,
            detail: format!("expected {} scores, got {}", terms.len(), scores.len()),
        });
    }
    for (term, &score) in terms.iter().zip(scores) {
        if !(0.0..=1.0).contains(&score) || score.is_nan() {
            return Err(ToxicityError::ScorerContract {
                batch: batch_index,
                detail: format!("score {score} for {term:?} outside [0, 1]"),
            });
        }
    }
    Ok(())
}

fn failure_to_error(batch: usize, failure: ScorerFailure) -> ToxicityError {
    match failure {
        ScorerFailure::Transport(message) => ToxicityError::RemoteScorer { batch, message },
        ScorerFailure::Contract(detail) => ToxicityError::ScorerContract { batch, detail },
    }
}

/// Score all terms in consecutive batches of at most `batch_size`. Batching
/// is transport-only: the resulting map does not depend on the batch size.
/// Any batch failure aborts the whole run; partial results are discarded.
pub fn score_terms(
    terms: &[String],
    scorer: &dyn TermScorer,
    batch_size: usize,
) -> Result<TermToxicityMap, ToxicityError> {
    if terms.is_empty() {
        return Err(ToxicityError::NoTerms);
    }
    if batch_size == 0 {
        return Err(ToxicityError::ZeroBatchSize);
    }
    let mut map = TermToxicityMap::new(scorer.id().to_string());
    for (batch_index, chunk) in terms.chunks(batch_size).enumerate() {
        let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
        let scores = scorer
            .score_batch(&refs)
            .map_err(|f| failure_to_error(batch_index, f))?;
        validate_batch(batch_index, &refs, &scores)?;
        for (term, score) in chunk.iter().zip(scores) {
            map.insert(term.clone(), score);
        }
    }
    Ok(map)
}

/// Like [`score_terms`] but with up to `max_in_flight` batches scored
/// concurrently. The result is identical to the sequential version; on
/// failure the error for the lowest-numbered failing batch is reported.
pub fn score_terms_concurrent(
    terms: &[String],
    scorer: &(dyn TermScorer + Sync),
    batch_size: usize,
    max_in_flight: usize,
) -> Result<TermToxicityMap, ToxicityError> {
    if terms.is_empty() {
        return Err(ToxicityError::NoTerms);
    }
    if batch_size == 0 {
        return Err(ToxicityError::ZeroBatchSize);
    }
    let chunks: Vec<&[String]> = terms.chunks(batch_size).collect();
    let workers = max_in_flight.max(1).min(chunks.len());
    if workers <= 1 {
        return score_terms(terms, scorer, batch_size);
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<Vec<f64>, ToxicityError>>>> =
        Mutex::new((0..chunks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let batch_index = next.fetch_add(1, Ordering::Relaxed);
                if batch_index >= chunks.len() {
                    break;
                }
                let chunk = chunks[batch_index];
                let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
                let outcome = scorer
                    .score_batch(&refs)
                    .map_err(|f| failure_to_error(batch_index, f))
                    .and_then(|scores| {
                        validate_batch(batch_index, &refs, &scores)?;
                        Ok(scores)
                    });
                if outcome.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                results.lock().unwrap()[batch_index] = Some(outcome);
            });
        }
    });

    let results = results.into_inner().unwrap();
    if results.iter().any(|r| matches!(r, Some(Err(_)))) {
        // Lowest-numbered failure wins for a deterministic error.
        for result in results {
            if let Some(Err(e)) = result {
                return Err(e);
            }
        }
        unreachable!();
    }
    let mut map = TermToxicityMap::new(scorer.id().to_string());
    for (chunk, result) in chunks.iter().zip(results) {
        // No failure happened, so the abort flag never fired and every
        // batch was attempted.
        let scores = result
            .expect("all batches attempted")
            .expect("no failures recorded");
        for (term, score) in chunk.iter().zip(scores) {
            map.insert(term.clone(), score);
        }
    }
    Ok(map)
}

/// A document's toxicity: the unweighted mean score over the distinct
/// vocabulary terms present in it. Documents with no vocabulary terms score
/// 0.0 and are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DocumentToxicity {
    pub score: f64,
    pub no_features: bool,
}

pub fn document_toxicity(
    doc_row: &[(u32, u32)],
    vocab: &Vocabulary,
    tox: &TermToxicityMap,
) -> DocumentToxicity {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(col, count) in doc_row {
        if count == 0 {
            continue;
        }
        let term = vocab.term(col as usize);
        debug_assert!(tox.get(term).is_some(), "toxicity map must cover the vocabulary");
        sum += tox.get(term).unwrap_or(0.0);
        n += 1;
    }
    if n == 0 {
        DocumentToxicity {
            score: 0.0,
            no_features: true,
        }
    } else {
        DocumentToxicity {
            score: sum / n as f64,
            no_features: false,
        }
    }
}

/// Aggregates over one topic's distinct member terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicToxicity {
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    pub total: f64,
}

/// Mean and population standard deviation of a score list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-topic toxicity aggregates plus optional segment-level document-score
/// stats. Topics with no terms carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityStats {
    pub topics: Vec<Option<TopicToxicity>>,
    pub segment: Option<ScoreStats>,
}

/// Population mean/std (divide by N) over document scores.
pub fn score_stats(scores: &[f64]) -> Option<ScoreStats> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Some(ScoreStats {
        mean,
        std: var.sqrt(),
    })
}

/// Per-topic min/max/avg/total over the topic's distinct member terms.
pub fn topic_toxicity_stats(dict: &TopicTermDictionary, tox: &TermToxicityMap) -> ToxicityStats {
    let topics = dict
        .topics
        .iter()
        .map(|terms| {
            if terms.is_empty() {
                return None;
            }
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut total = 0.0;
            for (term, _) in terms {
                let s = tox.get(term).unwrap_or(0.0);
                min = min.min(s);
                max = max.max(s);
                total += s;
            }
            Some(TopicToxicity {
                min,
                max,
                avg: total / terms.len() as f64,
                total,
            })
        })
        .collect();
    ToxicityStats {
        topics,
        segment: None,
    }
}

/// Append-only on-disk cache of `(scorer_id, term) -> score`, so interrupted
/// remote scoring runs can resume without re-submitting scored terms.
pub struct ScoreCache {
    path: PathBuf,
    entries: HashMap<(String, String), f64>,
}

impl ScoreCache {
    /// Open (or create) a cache file and load its entries.
    pub fn open(path: &Path) -> Result<Self, ToxicityError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|source| ToxicityError::Cache {
                path: path.display().to_string(),
                source,
            })?;
            for (i, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let bad = || ToxicityError::BadCacheLine {
                    path: path.display().to_string(),
                    line: i + 1,
                };
                let mut parts = line.splitn(3, '\t');
                let scorer = parts.next().ok_or_else(bad)?;
                let term = parts.next().ok_or_else(bad)?;
                let score: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                entries.insert((scorer.to_string(), term.to_string()), score);
            }
        }
        Ok(ScoreCache {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn get(&self, scorer_id: &str, term: &str) -> Option<f64> {
        self.entries
            .get(&(scorer_id.to_string(), term.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append entries to the file and to the in-memory view.
    pub fn append(&mut self, scorer_id: &str, scored: &[(String, f64)]) -> Result<(), ToxicityError> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|source| ToxicityError::Cache {
                path: self.path.display().to_string(),
                source,
            })?;
        let mut buf = String::new();
        for (term, score) in scored {
            buf.push_str(scorer_id);
            buf.push('\t');
            buf.push_str(term);
            buf.push('\t');
            buf.push_str(&score.to_string());
            buf.push('\n');
            self.entries
                .insert((scorer_id.to_string(), term.clone()), *score);
        }
        file.write_all(buf.as_bytes())
            .map_err(|source| ToxicityError::Cache {
                path: self.path.display().to_string(),
                source,
            })
    }
}
