//! Prediction evaluation: error metrics, threshold-accuracy sweeps, and
//! report artifacts (JSON, CSVs, and a scatter SVG with the y = x diagonal).

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::toxicity::{score_stats, ScoreStats, TopicToxicity};

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("vectors must be nonempty")]
    Empty,
    #[error("thresholds must be finite")]
    NonFiniteThreshold,
    #[error("cannot write to {path}: {source}")]
    Unwritable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<(), EvaluateError> {
    if y.len() != y_hat.len() {
        return Err(EvaluateError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(EvaluateError::Empty);
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64, EvaluateError> {
    check_pair(y, y_hat)?;
    let sum: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / y.len() as f64)
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64, EvaluateError> {
    check_pair(y, y_hat)?;
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / y.len() as f64)
}

/// Binarize both vectors at each threshold (`>= t` is toxic) and report the
/// fraction of agreeing classifications.
pub fn threshold_accuracy(
    y: &[f64],
    y_hat: &[f64],
    thresholds: &[f64],
) -> Result<Vec<f64>, EvaluateError> {
    check_pair(y, y_hat)?;
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(EvaluateError::NonFiniteThreshold);
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let agree = y
                .iter()
                .zip(y_hat)
                .filter(|&(&a, &p)| (a >= t) == (p >= t))
                .count();
            agree as f64 / y.len() as f64
        })
        .collect())
}

/// The default threshold sweep: statistics of the actual score distribution
/// (`std`, `mean`, `mean+std`, `mean+2std`) plus a uniform grid over
/// `[0.05, 0.50]` in steps of 0.05, plus any extra values from configuration.
pub fn default_thresholds(actual: &[f64], extra: &[f64]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    if let Some(stats) = score_stats(actual) {
        out.push(("std".to_string(), stats.std));
        out.push(("mean".to_string(), stats.mean));
        out.push(("mean+std".to_string(), stats.mean + stats.std));
        out.push(("mean+2std".to_string(), stats.mean + 2.0 * stats.std));
    }
    for i in 1..=10 {
        let t = i as f64 * 0.05;
        out.push((format!("grid-{t:.2}"), t));
    }
    for (i, &t) in extra.iter().enumerate() {
        out.push((format!("custom-{i}"), t));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub name: String,
    pub value: f64,
    pub accuracy: f64,
}

/// Per-topic toxicity aggregates for one segment, as written to
/// `topic_stats.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTopicRow {
    pub segment: String,
    pub topic: usize,
    pub stats: Option<TopicToxicity>,
}

/// Everything the evaluation stage produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    pub thresholds: Vec<ThresholdResult>,
    /// `(actual, predicted)` pairs.
    pub scatter: Vec<(f64, f64)>,
    /// Mean/std of the actual after-segment document scores.
    pub segment_stats: ScoreStats,
    pub topic_stats: Vec<SegmentTopicRow>,
    /// Fraction of scatter points under the diagonal among those with actual
    /// score above 0.4. Reported, never asserted: it is dataset-specific.
    pub underestimation: Option<f64>,
}

/// Fraction of points with `actual > cutoff` whose prediction falls below the
/// diagonal. `None` when no point qualifies.
pub fn underestimation_fraction(scatter: &[(f64, f64)], cutoff: f64) -> Option<f64> {
    let high: Vec<&(f64, f64)> = scatter.iter().filter(|(a, _)| *a > cutoff).collect();
    if high.is_empty() {
        return None;
    }
    let below = high.iter().filter(|(a, p)| p < a).count();
    Some(below as f64 / high.len() as f64)
}

/// Build a report from actual/predicted vectors plus the topic rows.
pub fn build_report(
    actual: &[f64],
    predicted: &[f64],
    threshold_values: &[(String, f64)],
    topic_stats: Vec<SegmentTopicRow>,
) -> Result<EvalReport, EvaluateError> {
    let values: Vec<f64> = threshold_values.iter().map(|(_, v)| *v).collect();
    let accuracies = threshold_accuracy(actual, predicted, &values)?;
    let thresholds = threshold_values
        .iter()
        .zip(accuracies)
        .map(|((name, value), accuracy)| ThresholdResult {
            name: name.clone(),
            value: *value,
            accuracy,
        })
        .collect();
    let scatter: Vec<(f64, f64)> = actual.iter().copied().zip(predicted.iter().copied()).collect();
    Ok(EvalReport {
        mse: mse(actual, predicted)?,
        mae: mae(actual, predicted)?,
        thresholds,
        segment_stats: score_stats(actual).ok_or(EvaluateError::Empty)?,
        underestimation: underestimation_fraction(&scatter, 0.4),
        scatter,
        topic_stats,
    })
}

impl EvalReport {
    pub fn read_json<R: Read>(r: R) -> Result<Self, EvaluateError> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn load(path: &Path) -> Result<Self, EvaluateError> {
        Ok(serde_json::from_reader(fs::File::open(path)?)?)
    }
}

fn scatter_svg(scatter: &[(f64, f64)]) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 40.0;
    let plot = SIZE - 2.0 * MARGIN;
    let max = scatter
        .iter()
        .flat_map(|&(a, p)| [a, p])
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let px = |v: f64| MARGIN + v / max * plot;
    let py = |v: f64| SIZE - MARGIN - v / max * plot;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = SIZE - MARGIN,
        r = SIZE - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = SIZE - MARGIN
    ));
    // y = x reference diagonal
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n",
        px(0.0),
        py(0.0),
        px(max),
        py(max)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">actual</text>\n",
        SIZE / 2.0 - 18.0,
        SIZE - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\">predicted</text>\n",
        SIZE / 2.0 + 24.0,
        SIZE / 2.0 + 24.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\">{max}</text>\n",
        SIZE - MARGIN - 10.0,
        SIZE - MARGIN + 14.0
    ));
    for &(a, p) in scatter {
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"steelblue\" fill-opacity=\"0.5\"/>\n",
            px(a),
            py(p)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write `report.json`, `scatter.csv`, `thresholds.csv`, `topic_stats.csv`,
/// and `scatter.svg` under `out_dir`. Floats are written in shortest
/// round-trip form, so the CSVs are loss-free. Returns the written paths.
pub fn emit_report(report: &EvalReport, out_dir: &Path) -> Result<Vec<PathBuf>, EvaluateError> {
    fs::create_dir_all(out_dir).map_err(|source| EvaluateError::Unwritable {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();

    let json_path = out_dir.join("report.json");
    let file = fs::File::create(&json_path).map_err(|source| EvaluateError::Unwritable {
        path: json_path.display().to_string(),
        source,
    })?;
    serde_json::to_writer_pretty(file, report)?;
    written.push(json_path);

    let scatter_path = out_dir.join("scatter.csv");
    {
        let mut w = csv::Writer::from_path(&scatter_path)?;
        w.write_record(["actual", "predicted"])?;
        for &(a, p) in &report.scatter {
            w.write_record([a.to_string(), p.to_string()])?;
        }
        w.flush()?;
    }
    written.push(scatter_path);

    let thresholds_path = out_dir.join("thresholds.csv");
    {
        let mut w = csv::Writer::from_path(&thresholds_path)?;
        w.write_record(["name", "value", "accuracy"])?;
        for t in &report.thresholds {
            w.write_record([t.name.clone(), t.value.to_string(), t.accuracy.to_string()])?;
        }
        w.flush()?;
    }
    written.push(thresholds_path);

    let topic_path = out_dir.join("topic_stats.csv");
    {
        let mut w = csv::Writer::from_path(&topic_path)?;
        w.write_record(["segment", "topic", "min", "max", "avg", "total"])?;
        for row in &report.topic_stats {
            match &row.stats {
                Some(s) => w.write_record([
                    row.segment.clone(),
                    row.topic.to_string(),
                    s.min.to_string(),
                    s.max.to_string(),
                    s.avg.to_string(),
                    s.total.to_string(),
                ])?,
                None => w.write_record([
                    row.segment.clone(),
                    row.topic.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?,
            }
        }
        w.flush()?;
    }
    written.push(topic_path);

    let svg_path = out_dir.join("scatter.svg");
    fs::write(&svg_path, scatter_svg(&report.scatter)).map_err(|source| {
        EvaluateError::Unwritable {
            path: svg_path.display().to_string(),
            source,
        }
    })?;
    written.push(svg_path);

    Ok(written)
}
