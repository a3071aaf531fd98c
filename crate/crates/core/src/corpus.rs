//! Corpus ingestion and onset segmentation.
//!
//! Raw post dumps (JSONL or CSV) are validated into [`Document`]s, partitioned
//! at the conflict-onset instant into before/after [`CorpusSegment`]s, and
//! optionally down-sampled with proportional stratification.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: required column {column:?} missing from CSV header")]
    MissingColumn { path: String, column: String },
    #[error("{path}: {malformed} of {total} records malformed (more than half)")]
    MostlyMalformed {
        path: String,
        malformed: usize,
        total: usize,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// Platform a document came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Twitter,
    Reddit,
    Other,
}

impl Source {
    pub fn parse(s: &str) -> Source {
        match s.to_ascii_lowercase().as_str() {
            "twitter" => Source::Twitter,
            "reddit" => Source::Reddit,
            _ => Source::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Twitter => "twitter",
            Source::Reddit => "reddit",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single timestamped post. `id` is unique within a loaded corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub source: Source,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentLabel {
    Before,
    After,
}

impl SegmentLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentLabel::Before => "before",
            SegmentLabel::After => "after",
        }
    }
}

/// Documents on one side of the conflict onset. `date_range` is half-open:
/// inclusive start, exclusive end. A before segment always ends at the onset
/// instant; an after segment always starts there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSegment {
    pub label: SegmentLabel,
    pub conflict: String,
    pub documents: Vec<Document>,
    pub date_range: (DateTime<Utc>, DateTime<Utc>),
}

impl CorpusSegment {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Ingestion tally, emitted as JSON next to the loaded corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

/// Logical-to-physical field names. The four source dumps this toolkit was
/// built around all use different schemas, so the mapping is configurable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    pub id: String,
    pub text: String,
    pub timestamp: String,
    /// Column holding the platform name; documents default to `other` when
    /// the column is absent or unmapped.
    pub source: Option<String>,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: "id".into(),
            text: "text".into(),
            timestamp: "timestamp".into(),
            source: Some("source".into()),
        }
    }
}

/// Parse the timestamp formats that show up in practice: RFC 3339, naive
/// `YYYY-MM-DD HH:MM:SS`, bare dates, and unix epoch seconds. Naive values
/// are taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(Utc.from_utc_datetime(&naive));
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0)?));
    }
    if let Ok(secs) = raw.parse::<i64>() {
        return Utc.timestamp_opt(secs, 0).single();
    }
    None
}

fn json_value_to_string(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn document_from_json(obj: &serde_json::Map<String, serde_json::Value>, fields: &FieldMap) -> Option<Document> {
    let id = obj.get(&fields.id).map(json_value_to_string)?;
    if id.is_empty() {
        return None;
    }
    let text = match obj.get(&fields.text)? {
        serde_json::Value::String(s) => s.clone(),
        _ => return None,
    };
    let timestamp = match obj.get(&fields.timestamp)? {
        serde_json::Value::String(s) => parse_timestamp(s)?,
        serde_json::Value::Number(n) => Utc.timestamp_opt(n.as_i64()?, 0).single()?,
        _ => return None,
    };
    let source = fields
        .source
        .as_ref()
        .and_then(|k| obj.get(k))
        .map(|v| Source::parse(&json_value_to_string(v)))
        .unwrap_or(Source::Other);

    let mut meta = BTreeMap::new();
    let mapped: HashSet<&str> = [
        Some(fields.id.as_str()),
        Some(fields.text.as_str()),
        Some(fields.timestamp.as_str()),
        fields.source.as_deref(),
    ]
    .into_iter()
    .flatten()
    .collect();
    for (k, v) in obj {
        if !mapped.contains(k.as_str()) {
            meta.insert(k.clone(), json_value_to_string(v));
        }
    }
    Some(Document {
        id,
        text,
        timestamp,
        source,
        meta,
    })
}

struct Dedup {
    seen: HashSet<String>,
    duplicates: usize,
}

impl Dedup {
    fn new() -> Self {
        Dedup {
            seen: HashSet::new(),
            duplicates: 0,
        }
    }

    /// True when the id has not been seen before (keep-first policy).
    fn admit(&mut self, id: &str) -> bool {
        if self.seen.insert(id.to_string()) {
            true
        } else {
            self.duplicates += 1;
            false
        }
    }
}

/// Load a raw post dump. Malformed records are skipped and counted; duplicate
/// ids keep the first occurrence. Fails outright when the file is unreadable
/// or when more than half of the records are malformed.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    fields: &FieldMap,
) -> Result<(Vec<Document>, LoadReport), CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        CorpusFormat::Jsonl => load_jsonl(path, file, fields),
        CorpusFormat::Csv => load_csv(path, file, fields),
    }
}

fn check_malformed_ratio(path: &Path, skipped: usize, total: usize) -> Result<(), CorpusError> {
    if skipped * 2 > total {
        Err(CorpusError::MostlyMalformed {
            path: path.display().to_string(),
            malformed: skipped,
            total,
        })
    } else {
        Ok(())
    }
}

fn load_jsonl(
    path: &Path,
    file: File,
    fields: &FieldMap,
) -> Result<(Vec<Document>, LoadReport), CorpusError> {
    let reader = BufReader::new(file);
    let mut docs = Vec::new();
    let mut dedup = Dedup::new();
    let mut skipped = 0usize;
    let mut total = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|source| CorpusError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed = serde_json::from_str::<serde_json::Value>(&line)
            .ok()
            .and_then(|v| v.as_object().and_then(|o| document_from_json(o, fields)));
        match parsed {
            Some(doc) => {
                if dedup.admit(&doc.id) {
                    docs.push(doc);
                }
            }
            None => skipped += 1,
        }
    }
    check_malformed_ratio(path, skipped, total)?;
    let report = LoadReport {
        loaded: docs.len(),
        skipped,
        duplicates: dedup.duplicates,
    };
    Ok((docs, report))
}

fn load_csv(
    path: &Path,
    file: impl Read,
    fields: &FieldMap,
) -> Result<(Vec<Document>, LoadReport), CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| CorpusError::Csv {
            path: path.display().to_string(),
            source,
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| CorpusError::MissingColumn {
            path: path.display().to_string(),
            column: name.to_string(),
        })
    };
    let id_col = required(&fields.id)?;
    let text_col = required(&fields.text)?;
    let ts_col = required(&fields.timestamp)?;
    let source_col = fields.source.as_deref().and_then(col);

    let mut docs = Vec::new();
    let mut dedup = Dedup::new();
    let mut skipped = 0usize;
    let mut total = 0usize;
    for record in reader.records() {
        total += 1;
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let id = record.get(id_col).unwrap_or("").to_string();
        let text = record.get(text_col).unwrap_or("").to_string();
        let timestamp = record.get(ts_col).and_then(parse_timestamp);
        let (id, timestamp) = match (id.is_empty(), timestamp) {
            (false, Some(ts)) => (id, ts),
            _ => {
                skipped += 1;
                continue;
            }
        };
        let source = source_col
            .and_then(|c| record.get(c))
            .map(Source::parse)
            .unwrap_or(Source::Other);
        let mut meta = BTreeMap::new();
        for (i, value) in record.iter().enumerate() {
            if i != id_col && i != text_col && i != ts_col && Some(i) != source_col {
                if let Some(name) = headers.get(i) {
                    meta.insert(name.to_string(), value.to_string());
                }
            }
        }
        if dedup.admit(&id) {
            docs.push(Document {
                id,
                text,
                timestamp,
                source,
                meta,
            });
        }
    }
    check_malformed_ratio(path, skipped, total)?;
    let report = LoadReport {
        loaded: docs.len(),
        skipped,
        duplicates: dedup.duplicates,
    };
    Ok((docs, report))
}

/// Partition documents at the onset instant: `timestamp < onset` goes before,
/// `timestamp >= onset` after. Either side may come out empty.
pub fn segment_by_onset(
    docs: Vec<Document>,
    onset: DateTime<Utc>,
    conflict: &str,
) -> (CorpusSegment, CorpusSegment) {
    let mut before = Vec::new();
    let mut after = Vec::new();
    for doc in docs {
        if doc.timestamp < onset {
            before.push(doc);
        } else {
            after.push(doc);
        }
    }
    let before_start = before.iter().map(|d| d.timestamp).min().unwrap_or(onset);
    let after_end = after
        .iter()
        .map(|d| d.timestamp)
        .max()
        .map(|ts| ts + Duration::nanoseconds(1))
        .unwrap_or(onset);
    (
        CorpusSegment {
            label: SegmentLabel::Before,
            conflict: conflict.to_string(),
            documents: before,
            date_range: (before_start, onset),
        },
        CorpusSegment {
            label: SegmentLabel::After,
            conflict: conflict.to_string(),
            documents: after,
            date_range: (onset, after_end),
        },
    )
}

fn stratum_value(doc: &Document, key: &str) -> String {
    if key == "source" {
        doc.source.as_str().to_string()
    } else {
        doc.meta
            .get(key)
            .cloned()
            .unwrap_or_else(|| "unknown".to_string())
    }
}

/// Largest-remainder apportionment of `target` across strata sized `sizes`.
/// Ties on remainder break toward the earlier stratum.
fn largest_remainder_quotas(sizes: &[usize], target: usize) -> Vec<usize> {
    let total: u128 = sizes.iter().map(|&n| n as u128).sum();
    debug_assert!(total >= target as u128);
    let mut quotas: Vec<usize> = Vec::with_capacity(sizes.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(sizes.len());
    let mut assigned = 0usize;
    for (i, &n) in sizes.iter().enumerate() {
        let num = target as u128 * n as u128;
        let base = (num / total) as usize;
        quotas.push(base);
        assigned += base;
        remainders.push((num % total, i));
    }
    // Highest remainder first; stable order keeps ties deterministic.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(target - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Down-sample a segment to `target_size` documents without replacement.
/// With a `strata_key`, per-stratum counts are proportional to stratum sizes
/// (largest-remainder rounding); documents missing the key form an implicit
/// "unknown" stratum. Returns the segment unchanged when already small enough.
/// The same seed always yields the same document list.
pub fn sample_segment(
    segment: &CorpusSegment,
    target_size: usize,
    strata_key: Option<&str>,
    seed: u64,
) -> CorpusSegment {
    assert!(target_size >= 1, "target_size must be positive");
    if segment.documents.len() <= target_size {
        return segment.clone();
    }

    // Group document positions by stratum, in deterministic key order.
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    match strata_key {
        Some(key) => {
            for (i, doc) in segment.documents.iter().enumerate() {
                strata.entry(stratum_value(doc, key)).or_default().push(i);
            }
        }
        None => {
            strata.insert(String::new(), (0..segment.documents.len()).collect());
        }
    }

    let sizes: Vec<usize> = strata.values().map(|v| v.len()).collect();
    let quotas = largest_remainder_quotas(&sizes, target_size);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(target_size);
    for (positions, &quota) in strata.values().zip(quotas.iter()) {
        let picked = rand::seq::index::sample(&mut rng, positions.len(), quota);
        for p in picked.iter() {
            chosen.push(positions[p]);
        }
    }
    // Keep the original document order in the output.
    chosen.sort_unstable();
    let documents: Vec<Document> = chosen
        .into_iter()
        .map(|i| segment.documents[i].clone())
        .collect();
    CorpusSegment {
        label: segment.label,
        conflict: segment.conflict.clone(),
        documents,
        date_range: segment.date_range,
    }
}
