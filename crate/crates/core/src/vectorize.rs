//! N-gram vocabulary construction and sparse term-document count matrices.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::TokenizedDoc;

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("n-gram range must satisfy 2 <= min <= max <= 4, got ({0}, {1})")]
    BadNgramRange(usize, usize),
    #[error("min_df fraction must lie in (0, 1], got {0}")]
    BadMinDfFraction(f64),
    #[error("max_df must lie in (0, 1], got {0}")]
    BadMaxDf(f64),
    #[error("max_features must be positive")]
    ZeroMaxFeatures,
    #[error("no documents to vectorize")]
    EmptyCorpus,
    #[error("all terms were filtered out by the df bounds")]
    EmptyVocabulary,
    #[error("matrix file is malformed: {0}")]
    BadMatrixFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Minimum document frequency: an absolute document count, or a fraction of
/// the corpus size resolved as `ceil(fraction * D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MinDf {
    Absolute(u32),
    Fraction(f64),
}

impl MinDf {
    pub fn resolve(self, doc_count: usize) -> u32 {
        match self {
            MinDf::Absolute(n) => n,
            MinDf::Fraction(f) => (f * doc_count as f64).ceil() as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabSettings {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub min_df: MinDf,
    pub max_df: f64,
    pub max_features: usize,
}

impl Default for VocabSettings {
    fn default() -> Self {
        VocabSettings {
            ngram_min: 2,
            ngram_max: 4,
            min_df: MinDf::Absolute(5),
            max_df: 0.85,
            max_features: 5000,
        }
    }
}

impl VocabSettings {
    pub fn validate(&self) -> Result<(), VectorizeError> {
        if !(2 <= self.ngram_min && self.ngram_min <= self.ngram_max && self.ngram_max <= 4) {
            return Err(VectorizeError::BadNgramRange(self.ngram_min, self.ngram_max));
        }
        if let MinDf::Fraction(f) = self.min_df {
            if !(f > 0.0 && f <= 1.0) {
                return Err(VectorizeError::BadMinDfFraction(f));
            }
        }
        if !(self.max_df > 0.0 && self.max_df <= 1.0) {
            return Err(VectorizeError::BadMaxDf(self.max_df));
        }
        if self.max_features == 0 {
            return Err(VectorizeError::ZeroMaxFeatures);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub term: String,
    pub df: u32,
    pub total_count: u64,
}

/// Capped n-gram feature space. Terms are space-joined token windows, sorted
/// lexicographically; `index` maps a term to its column.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub settings: VocabSettings,
    pub doc_count: usize,
    terms: Vec<TermEntry>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    settings: VocabSettings,
    doc_count: usize,
    terms: Vec<TermEntry>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, col: usize) -> &str {
        &self.terms[col].term
    }

    pub fn entry(&self, col: usize) -> &TermEntry {
        &self.terms[col]
    }

    pub fn terms(&self) -> impl Iterator<Item = &TermEntry> {
        self.terms.iter()
    }

    pub fn term_strings(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.term.clone()).collect()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<u32> {
        self.index_of(term).map(|i| self.terms[i].df)
    }

    /// SHA-256 over the newline-joined term list; used to guard regression
    /// models against a mismatched vocabulary.
    pub fn sha256_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for t in &self.terms {
            hasher.update(t.term.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), VectorizeError> {
        let file = VocabularyFile {
            settings: self.settings.clone(),
            doc_count: self.doc_count,
            terms: self.terms.clone(),
        };
        serde_json::to_writer_pretty(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, VectorizeError> {
        let file: VocabularyFile = serde_json::from_reader(r)?;
        let index = file
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.term.clone(), i))
            .collect();
        Ok(Vocabulary {
            settings: file.settings,
            doc_count: file.doc_count,
            terms: file.terms,
            index,
        })
    }
}

/// Sparse D x V count matrix. Row `i` holds document `i`'s `(column, count)`
/// pairs sorted by column; zero counts are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TermDocMatrix {
    doc_count: usize,
    vocab_size: usize,
    rows: Vec<Vec<(u32, u32)>>,
}

impl TermDocMatrix {
    pub fn from_rows(vocab_size: usize, rows: Vec<Vec<(u32, u32)>>) -> Self {
        for row in &rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0), "columns must be sorted");
            debug_assert!(row.iter().all(|&(c, n)| (c as usize) < vocab_size && n > 0));
        }
        TermDocMatrix {
            doc_count: rows.len(),
            vocab_size,
            rows,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn row(&self, doc: usize) -> &[(u32, u32)] {
        &self.rows[doc]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(u32, u32)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    /// Total token instances (sum of all counts).
    pub fn total_count(&self) -> u64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|&(_, n)| n as u64)
            .sum()
    }

    /// Document frequency of a column recomputed from the stored rows.
    pub fn column_df(&self, col: u32) -> u32 {
        self.rows
            .iter()
            .filter(|r| r.binary_search_by_key(&col, |&(c, _)| c).is_ok())
            .count() as u32
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.doc_count, self.vocab_size);
        for (i, row) in self.rows.iter().enumerate() {
            for &(col, count) in row {
                m[(i, col as usize)] = count as f64;
            }
        }
        m
    }

    /// Coordinate text format: a JSON header line `{"d":..,"v":..}` followed
    /// by one `row col count` line per stored entry, row-major.
    pub fn write_coord<W: Write>(&self, mut w: W) -> Result<(), VectorizeError> {
        writeln!(w, "{{\"d\":{},\"v\":{}}}", self.doc_count, self.vocab_size)?;
        for (i, row) in self.rows.iter().enumerate() {
            for &(col, count) in row {
                writeln!(w, "{i} {col} {count}")?;
            }
        }
        Ok(())
    }

    pub fn read_coord<R: Read>(r: R) -> Result<Self, VectorizeError> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| VectorizeError::BadMatrixFile("missing header".into()))??;
        #[derive(Deserialize)]
        struct Header {
            d: usize,
            v: usize,
        }
        let header: Header = serde_json::from_str(&header)
            .map_err(|e| VectorizeError::BadMatrixFile(format!("bad header: {e}")))?;
        let mut rows: Vec<Vec<(u32, u32)>> = vec![Vec::new(); header.d];
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_ascii_whitespace();
            let parse = |s: Option<&str>| -> Result<u64, VectorizeError> {
                s.and_then(|x| x.parse::<u64>().ok())
                    .ok_or_else(|| VectorizeError::BadMatrixFile(format!("bad line {line:?}")))
            };
            let row = parse(parts.next())? as usize;
            let col = parse(parts.next())? as u32;
            let count = parse(parts.next())? as u32;
            if row >= header.d || col as usize >= header.v || count == 0 {
                return Err(VectorizeError::BadMatrixFile(format!("entry out of range: {line:?}")));
            }
            rows[row].push((col, count));
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
        }
        Ok(TermDocMatrix::from_rows(header.v, rows))
    }
}

fn ngrams_of(tokens: &[String], ngram_min: usize, ngram_max: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in ngram_min..=ngram_max {
        if tokens.len() < n {
            break;
        }
        for window in tokens.windows(n) {
            out.push(window.join(" "));
        }
    }
    out
}

/// Build a vocabulary over all n-grams in `docs`, keeping terms whose document
/// frequency satisfies the bounds, and capping to `max_features` by highest
/// total count (ties break to the lexicographically smaller term). The final
/// term order is lexicographic.
pub fn build_vocabulary(
    docs: &[TokenizedDoc],
    settings: &VocabSettings,
) -> Result<Vocabulary, VectorizeError> {
    settings.validate()?;
    if docs.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    let doc_count = docs.len();

    let mut df: HashMap<String, u32> = HashMap::new();
    let mut total: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        let grams = ngrams_of(&doc.tokens, settings.ngram_min, settings.ngram_max);
        let mut seen: HashSet<&str> = HashSet::new();
        for g in &grams {
            *total.entry(g.clone()).or_insert(0) += 1;
            if seen.insert(g) {
                *df.entry(g.clone()).or_insert(0) += 1;
            }
        }
    }

    let min_df = settings.min_df.resolve(doc_count);
    let max_df_count = settings.max_df * doc_count as f64;
    let mut kept: Vec<TermEntry> = df
        .into_iter()
        .filter(|&(_, d)| d >= min_df && (d as f64) <= max_df_count)
        .map(|(term, d)| {
            let total_count = total[&term];
            TermEntry {
                term,
                df: d,
                total_count,
            }
        })
        .collect();
    if kept.is_empty() {
        return Err(VectorizeError::EmptyVocabulary);
    }
    if kept.len() > settings.max_features {
        kept.sort_unstable_by(|a, b| b.total_count.cmp(&a.total_count).then(a.term.cmp(&b.term)));
        kept.truncate(settings.max_features);
    }
    kept.sort_unstable_by(|a, b| a.term.cmp(&b.term));

    let index = kept
        .iter()
        .enumerate()
        .map(|(i, t)| (t.term.clone(), i))
        .collect();
    Ok(Vocabulary {
        settings: settings.clone(),
        doc_count,
        terms: kept,
        index,
    })
}

/// Count vocabulary n-grams per document. Terms outside the vocabulary are
/// ignored; every input document occupies a row even when all-zero.
pub fn transform(docs: &[TokenizedDoc], vocab: &Vocabulary) -> TermDocMatrix {
    let mut rows: Vec<Vec<(u32, u32)>> = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for gram in ngrams_of(&doc.tokens, vocab.settings.ngram_min, vocab.settings.ngram_max) {
            if let Some(col) = vocab.index_of(&gram) {
                *counts.entry(col as u32).or_insert(0) += 1;
            }
        }
        let mut row: Vec<(u32, u32)> = counts.into_iter().collect();
        row.sort_unstable_by_key(|&(c, _)| c);
        rows.push(row);
    }
    TermDocMatrix::from_rows(vocab.len(), rows)
}
