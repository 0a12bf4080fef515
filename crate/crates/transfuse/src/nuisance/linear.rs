//! Linear regression by rank-revealing least squares.
//!
//! Fits are computed through a singular-value decomposition, so rank-deficient
//! designs are handled gracefully (minimum-norm solution) instead of erroring.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A fitted linear model. Coefficients are in design-column order; callers
/// that put an intercept in column 0 get it back in `coefficients[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelFit {
    /// One coefficient per design column.
    pub coefficients: Vec<f64>,
}

impl LinearModelFit {
    /// Predicts for one design row (same layout as the rows passed to
    /// [`fit_linear`]).
    pub fn predict(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.coefficients.len());
        self.coefficients.iter().zip(row).map(|(c, v)| c * v).sum()
    }
}

/// Least-squares fit of `targets` on `rows` (each row one design vector,
/// including any intercept column the caller wants).
///
/// Uses an SVD with a relative singular-value cutoff, returning the
/// minimum-norm solution when the design is rank deficient.
pub fn fit_linear<R: AsRef<[f64]>>(rows: &[R], targets: &[f64]) -> Result<LinearModelFit> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("linear fit received no rows".into()));
    }
    if rows.len() != targets.len() {
        return Err(Error::Config(format!(
            "linear fit received {} rows but {} targets",
            rows.len(),
            targets.len()
        )));
    }
    let k = rows[0].as_ref().len();
    if k == 0 {
        return Err(Error::Config("linear fit received zero-width design rows".into()));
    }
    if rows.iter().any(|r| r.as_ref().len() != k) {
        return Err(Error::Config("linear fit received ragged design rows".into()));
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, k, |i, j| rows[i].as_ref()[j]);
    let b = DVector::from_column_slice(targets);
    let svd = x.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = max_sv * (n.max(k) as f64) * f64::EPSILON;
    let beta = svd
        .solve(&b, cutoff)
        .map_err(|e| Error::Numerical(format!("SVD solve failed: {e}")))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("linear fit produced non-finite coefficients".into()));
    }
    Ok(LinearModelFit { coefficients })
}
