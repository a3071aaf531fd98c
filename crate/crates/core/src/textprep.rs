//! Text normalization and tokenization.
//!
//! The preprocessing pipeline runs in a fixed order: extract hashtags,
//! segment each hashtag into words, normalize the remaining text, tokenize
//! on whitespace, drop stopwords, lemmatize. Hashtags are handled first
//! because normalization would destroy the `#` markers.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Document;

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unigram model needs at least two words, got {0}")]
    ModelTooSmall(usize),
    #[error("{path}:{line}: expected \"form<TAB>lemma\"")]
    BadLemmaLine { path: String, line: usize },
}

/// A document reduced to lowercase ASCII lemma tokens, in original text order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

/// Out-of-vocabulary chunks pay a steep per-character price so that any
/// in-vocabulary split beats an unknown chunk of length >= 2.
const OOV_COST_PER_CHAR: f64 = 10.0;

/// Word-frequency model for hashtag segmentation. Words are ranked 1-based by
/// descending corpus frequency; the cost of a word is `ln(rank * ln V)`, which
/// grows strictly with rank.
#[derive(Debug, Clone)]
pub struct UnigramModel {
    ranks: HashMap<String, usize>,
    vocab_size: usize,
    ln_v: f64,
}

impl UnigramModel {
    /// Build from a ranked word list (most frequent first). Duplicates keep
    /// their first (best) rank.
    pub fn from_ranked_words<I, S>(words: I) -> Result<Self, TextprepError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ranks = HashMap::new();
        let mut rank = 0usize;
        for w in words {
            let w = w.as_ref().trim().to_lowercase();
            if w.is_empty() || !w.chars().all(|c| c.is_ascii_lowercase()) {
                continue;
            }
            if !ranks.contains_key(&w) {
                rank += 1;
                ranks.insert(w, rank);
            }
        }
        if rank < 2 {
            return Err(TextprepError::ModelTooSmall(rank));
        }
        Ok(UnigramModel {
            ranks,
            vocab_size: rank,
            ln_v: (rank as f64).ln(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, TextprepError> {
        let text = fs::read_to_string(path).map_err(|source| TextprepError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_ranked_words(text.lines())
    }

    /// Model parsed from the word list shipped with the crate.
    pub fn bundled() -> &'static UnigramModel {
        static MODEL: OnceLock<UnigramModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            UnigramModel::from_ranked_words(include_str!("../data/unigrams.txt").lines())
                .expect("bundled unigram list is valid")
        })
    }

    pub fn len(&self) -> usize {
        self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.vocab_size == 0
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.ranks.get(word).copied()
    }

    /// `ln(rank * ln V)` for known words.
    pub fn word_cost(&self, word: &str) -> Option<f64> {
        self.rank(word).map(|r| (r as f64 * self.ln_v).ln())
    }

    /// `10 * len + ln(V * ln V)` for unknown chunks.
    pub fn oov_cost(&self, chunk_len: usize) -> f64 {
        OOV_COST_PER_CHAR * chunk_len as f64 + (self.vocab_size as f64 * self.ln_v).ln()
    }
}

/// Split a hashtag body (no `#`) into the word sequence minimizing total cost,
/// by dynamic programming over suffix positions. Ties break toward fewer
/// words, then the lexicographically smallest word sequence. The output
/// always concatenates back to the input.
pub fn segment_hashtag(tag: &str, model: &UnigramModel) -> Vec<String> {
    let chars: Vec<char> = tag.to_lowercase().chars().collect();
    let n = chars.len();
    if n == 0 {
        return Vec::new();
    }

    #[derive(Clone)]
    struct Best {
        cost: f64,
        words: usize,
        split: usize, // end index of the first word starting here
    }
    // best[i] describes the optimal segmentation of chars[i..].
    let mut best: Vec<Option<Best>> = vec![None; n + 1];
    best[n] = Some(Best {
        cost: 0.0,
        words: 0,
        split: n,
    });

    let word_at = |i: usize, j: usize| -> String { chars[i..j].iter().collect() };

    for i in (0..n).rev() {
        let mut current: Option<Best> = None;
        for j in i + 1..=n {
            let rest = match &best[j] {
                Some(b) => b,
                None => continue,
            };
            let piece = word_at(i, j);
            let piece_cost = model
                .word_cost(&piece)
                .unwrap_or_else(|| model.oov_cost(j - i));
            let cand = Best {
                cost: piece_cost + rest.cost,
                words: 1 + rest.words,
                split: j,
            };
            let better = match &current {
                None => true,
                Some(cur) => {
                    cand.cost < cur.cost
                        || (cand.cost == cur.cost
                            && (cand.words < cur.words
                                || (cand.words == cur.words
                                    && word_at(i, cand.split) < word_at(i, cur.split))))
                }
            };
            if better {
                current = Some(cand);
            }
        }
        best[i] = current;
    }

    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let b = best[i].as_ref().expect("every position is reachable");
        out.push(word_at(i, b.split));
        i = b.split;
    }
    out
}

/// Token-to-lemma lookup table with rule fallback.
#[derive(Debug, Clone, Default)]
pub struct LemmaTable {
    map: HashMap<String, String>,
}

impl LemmaTable {
    pub fn new(map: HashMap<String, String>) -> Self {
        LemmaTable { map }
    }

    pub fn load(path: &Path) -> Result<Self, TextprepError> {
        let text = fs::read_to_string(path).map_err(|source| TextprepError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn parse(text: &str, path: &str) -> Result<Self, TextprepError> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (form, lemma) = line.split_once('\t').ok_or_else(|| TextprepError::BadLemmaLine {
                path: path.to_string(),
                line: i + 1,
            })?;
            map.insert(form.trim().to_string(), lemma.trim().to_string());
        }
        Ok(LemmaTable { map })
    }

    pub fn bundled() -> &'static LemmaTable {
        static TABLE: OnceLock<LemmaTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            LemmaTable::parse(include_str!("../data/lemma_table.tsv"), "bundled")
                .expect("bundled lemma table is valid")
        })
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.map.get(token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Stopword set. Entries are normalized on load so that forms like `don't`
/// match the `dont` produced by [`normalize`].
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    pub fn from_lines<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut words = HashSet::new();
        for line in lines {
            let cleaned: String = line
                .as_ref()
                .to_lowercase()
                .chars()
                .filter(|c| c.is_ascii_lowercase())
                .collect();
            if !cleaned.is_empty() {
                words.insert(cleaned);
            }
        }
        Stopwords { words }
    }

    pub fn load(path: &Path) -> Result<Self, TextprepError> {
        let text = fs::read_to_string(path).map_err(|source| TextprepError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_lines(text.lines()))
    }

    /// The standard 179-entry English list shipped with the crate.
    pub fn bundled() -> &'static Stopwords {
        static WORDS: OnceLock<Stopwords> = OnceLock::new();
        WORDS.get_or_init(|| Stopwords::from_lines(include_str!("../data/stopwords.txt").lines()))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn is_url_like(token: &str) -> bool {
    let lower = token.to_lowercase();
    lower.contains("http://") || lower.contains("https://") || lower.starts_with("www.")
}

/// Normalize raw text: delete URLs, fold accents to ASCII base letters,
/// lowercase, delete everything that is neither a letter a-z nor whitespace,
/// and collapse whitespace runs to single spaces. Idempotent.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    let mut started = false;
    for token in text.split_whitespace() {
        if is_url_like(token) {
            continue;
        }
        // NFKD exposes the base letter of accented characters; combining
        // marks are dropped afterwards.
        let mut wrote = false;
        for c in token.nfkd() {
            if is_combining_mark(c) {
                continue;
            }
            for l in c.to_lowercase() {
                if l.is_ascii_lowercase() {
                    if pending_space && started {
                        out.push(' ');
                    }
                    pending_space = false;
                    started = true;
                    out.push(l);
                    wrote = true;
                }
            }
        }
        if wrote {
            pending_space = true;
        }
    }
    out
}

const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| VOWELS.contains(&c))
}

/// Reduce a token to a lemma: exact table lookup first, then ordered suffix
/// rules (`ies`->`y`, `sses`->`ss`, trailing `s` when longer than 3, `ing`/`ed`
/// when a vowel remains in the stem), else the token itself.
pub fn lemmatize(token: &str, table: &LemmaTable) -> String {
    if let Some(lemma) = table.get(token) {
        return lemma.to_string();
    }
    if let Some(stem) = token.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = token.strip_suffix("sses") {
        return format!("{stem}ss");
    }
    if token.len() > 3 {
        if let Some(stem) = token.strip_suffix('s') {
            return stem.to_string();
        }
    }
    if let Some(stem) = token.strip_suffix("ing") {
        if has_vowel(stem) {
            return stem.to_string();
        }
    }
    if let Some(stem) = token.strip_suffix("ed") {
        if has_vowel(stem) {
            return stem.to_string();
        }
    }
    token.to_string()
}

/// Split text into hashtag bodies and plain spans, preserving order. A `#`
/// only starts a hashtag at the beginning of a whitespace-delimited token,
/// so URL fragments do not count.
fn split_hashtags(text: &str) -> Vec<(bool, String)> {
    let mut spans: Vec<(bool, String)> = Vec::new();
    let mut plain = String::new();
    for token in text.split_whitespace() {
        if let Some(body) = token.strip_prefix('#') {
            let end = body
                .char_indices()
                .find(|(_, c)| !c.is_alphanumeric() && *c != '_')
                .map(|(i, _)| i)
                .unwrap_or(body.len());
            let (tag, rest) = body.split_at(end);
            if !tag.is_empty() {
                if !plain.is_empty() {
                    spans.push((false, std::mem::take(&mut plain)));
                }
                spans.push((true, tag.to_string()));
            }
            if !rest.is_empty() {
                plain.push_str(rest);
                plain.push(' ');
            }
        } else {
            plain.push_str(token);
            plain.push(' ');
        }
    }
    if !plain.is_empty() {
        spans.push((false, plain));
    }
    spans
}

/// Run the full preprocessing pipeline on one document. Text that reduces to
/// zero tokens still yields a (empty) `TokenizedDoc` so that document counts
/// stay aligned across stages.
pub fn preprocess(
    doc: &Document,
    stopwords: &Stopwords,
    model: &UnigramModel,
    table: &LemmaTable,
) -> TokenizedDoc {
    let mut raw_tokens: Vec<String> = Vec::new();
    for (is_hashtag, span) in split_hashtags(&doc.text) {
        if is_hashtag {
            let tag: String = span
                .to_lowercase()
                .chars()
                .filter(|c| c.is_ascii_lowercase())
                .collect();
            raw_tokens.extend(segment_hashtag(&tag, model));
        } else {
            raw_tokens.extend(normalize(&span).split_whitespace().map(str::to_string));
        }
    }
    let tokens = raw_tokens
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .map(|t| lemmatize(&t, table))
        // A lemma can itself be a stopword ("doing" -> "do"); the invariant
        // that no output token is a stopword wins over the raw stage order.
        .filter(|t| !stopwords.contains(t))
        .collect();
    TokenizedDoc {
        doc_id: doc.id.clone(),
        tokens,
    }
}
