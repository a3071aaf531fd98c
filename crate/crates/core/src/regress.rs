//! Feature scaling and ordinary least squares.
//!
//! The regressor is trained on the before segment (scaled term counts against
//! document toxicity) and applied to after-segment documents vectorized with
//! the before vocabulary. Least squares is solved through an SVD, so
//! rank-deficient systems get the minimum-norm solution.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("matrix has {got} columns, scaler expects {expected}")]
    ScalerDimensionMismatch { expected: usize, got: usize },
    #[error("matrix has {got} columns, model expects {expected}")]
    ModelDimensionMismatch { expected: usize, got: usize },
    #[error("target length {got} does not match {expected} rows")]
    TargetLengthMismatch { expected: usize, got: usize },
    #[error("inputs contain non-finite values")]
    NonFinite,
    #[error("cannot fit on an empty matrix")]
    Empty,
    #[error("least-squares solve failed: {0}")]
    Solve(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    /// `(x - median) / IQR`; outlier-resistant.
    Robust,
    /// `x / max|x|`; preserves zeros.
    MaxAbs,
}

/// Fitted per-feature scaling parameters. `center` is all zeros for maxabs;
/// degenerate features (zero spread) get scale 1 so they map to zero instead
/// of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub kind: ScalerKind,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ScalerParams {
    pub fn features(&self) -> usize {
        self.scale.len()
    }

    /// Identity scaler, occasionally useful in tests and small pipelines.
    pub fn identity(features: usize) -> Self {
        ScalerParams {
            kind: ScalerKind::MaxAbs,
            center: vec![0.0; features],
            scale: vec![1.0; features],
        }
    }
}

/// Quantile with linear interpolation between order statistics, matching the
/// common default convention. `sorted` must be ascending and nonempty.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Fit per-feature scaling parameters on a D x V matrix.
pub fn fit_scaler(x: &DMatrix<f64>, kind: ScalerKind) -> ScalerParams {
    let (rows, cols) = x.shape();
    assert!(rows >= 1, "need at least one row");
    let mut center = vec![0.0; cols];
    let mut scale = vec![1.0; cols];
    match kind {
        ScalerKind::Robust => {
            let mut column = vec![0.0; rows];
            for j in 0..cols {
                for i in 0..rows {
                    column[i] = x[(i, j)];
                }
                column.sort_by(|a, b| a.partial_cmp(b).unwrap());
                center[j] = quantile_sorted(&column, 0.5);
                let iqr = quantile_sorted(&column, 0.75) - quantile_sorted(&column, 0.25);
                scale[j] = if iqr > 0.0 { iqr } else { 1.0 };
            }
        }
        ScalerKind::MaxAbs => {
            for j in 0..cols {
                let mut max_abs = 0.0f64;
                for i in 0..rows {
                    max_abs = max_abs.max(x[(i, j)].abs());
                }
                scale[j] = if max_abs > 0.0 { max_abs } else { 1.0 };
            }
        }
    }
    ScalerParams {
        kind,
        center,
        scale,
    }
}

/// Apply fitted scaling: robust maps to `(x - center) / scale`, maxabs to
/// `x / scale`.
pub fn apply_scaler(x: &DMatrix<f64>, params: &ScalerParams) -> Result<DMatrix<f64>, RegressError> {
    let (rows, cols) = x.shape();
    if cols != params.features() {
        return Err(RegressError::ScalerDimensionMismatch {
            expected: params.features(),
            got: cols,
        });
    }
    let mut out = x.clone();
    for j in 0..cols {
        let center = params.center[j];
        let scale = params.scale[j];
        for i in 0..rows {
            out[(i, j)] = (out[(i, j)] - center) / scale;
        }
    }
    Ok(out)
}

/// Ordinary least squares model over scaled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub fit_intercept: bool,
    pub scaler: ScalerParams,
}

/// Minimum-norm least-squares solve of `a * w = b` via SVD. Singular values
/// below `max_sv * max(rows, cols) * eps` count as zero.
fn lstsq_min_norm(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, RegressError> {
    let (rows, cols) = a.shape();
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = max_sv * rows.max(cols) as f64 * f64::EPSILON;
    svd.solve(b, eps).map_err(RegressError::Solve)
}

/// Fit OLS on already-scaled features. With `fit_intercept`, features and
/// target are centered first and the intercept recovered afterwards, which
/// matches the usual predictor behavior (a constant target yields zero
/// weights regardless of the design matrix).
pub fn fit_ols(
    x_scaled: &DMatrix<f64>,
    y: &[f64],
    fit_intercept: bool,
    scaler: ScalerParams,
) -> Result<OlsModel, RegressError> {
    let (rows, cols) = x_scaled.shape();
    if rows == 0 {
        return Err(RegressError::Empty);
    }
    if y.len() != rows {
        return Err(RegressError::TargetLengthMismatch {
            expected: rows,
            got: y.len(),
        });
    }
    if x_scaled.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite);
    }

    let y_vec = DVector::from_column_slice(y);
    let (weights, intercept) = if fit_intercept {
        let x_mean: Vec<f64> = (0..cols).map(|j| x_scaled.column(j).mean()).collect();
        let y_mean = y_vec.mean();
        let mut centered = x_scaled.clone();
        for j in 0..cols {
            for i in 0..rows {
                centered[(i, j)] -= x_mean[j];
            }
        }
        let w = lstsq_min_norm(centered, &y_vec.add_scalar(-y_mean))?;
        let b = y_mean - x_mean.iter().zip(w.iter()).map(|(m, wi)| m * wi).sum::<f64>();
        (w, b)
    } else {
        (lstsq_min_norm(x_scaled.clone(), &y_vec)?, 0.0)
    };

    Ok(OlsModel {
        weights: weights.iter().copied().collect(),
        intercept,
        fit_intercept,
        scaler,
    })
}

/// Predict document toxicity from raw counts: apply the stored scaler, then
/// `X' * w + b`. Outputs are intentionally not clamped to `[0, 1]` — raw
/// regression output is what gets analyzed downstream.
pub fn predict(model: &OlsModel, x_counts: &DMatrix<f64>) -> Result<Vec<f64>, RegressError> {
    if x_counts.ncols() != model.weights.len() {
        return Err(RegressError::ModelDimensionMismatch {
            expected: model.weights.len(),
            got: x_counts.ncols(),
        });
    }
    let scaled = apply_scaler(x_counts, &model.scaler)?;
    let w = DVector::from_column_slice(&model.weights);
    let y = scaled * w;
    Ok(y.iter().map(|v| v + model.intercept).collect())
}

/// On-disk model schema. `vocab_hash` guards against predicting with a
/// mismatched vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: ScalerKind,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub fit_intercept: bool,
    pub vocab_hash: String,
}

impl ModelFile {
    pub fn from_model(model: &OlsModel, vocab_hash: String) -> Self {
        ModelFile {
            kind: model.scaler.kind,
            center: model.scaler.center.clone(),
            scale: model.scaler.scale.clone(),
            weights: model.weights.clone(),
            intercept: model.intercept,
            fit_intercept: model.fit_intercept,
            vocab_hash,
        }
    }

    pub fn into_model(self) -> (OlsModel, String) {
        (
            OlsModel {
                weights: self.weights,
                intercept: self.intercept,
                fit_intercept: self.fit_intercept,
                scaler: ScalerParams {
                    kind: self.kind,
                    center: self.center,
                    scale: self.scale,
                },
            },
            self.vocab_hash,
        )
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), RegressError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, RegressError> {
        Ok(serde_json::from_reader(r)?)
    }
}
