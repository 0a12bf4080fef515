//! Error taxonomy for the whole crate.
//!
//! Every fallible operation returns [`Error`]; the CLI maps error categories to
//! process exit codes (see [`Error::exit_code`]): `2` for invalid requests and
//! configuration, `3` for data problems (parse/schema/validation), `4` for
//! numerical or statistical failures at run time, and `5` for strict-mode
//! efficiency-ordering violations.

use std::fmt;

/// A single record-level rule violation found by dataset validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Zero-based record index within the dataset (CSV data row order).
    pub record: usize,
    /// Human-readable description of the violated rule.
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}: {}", self.record, self.rule)
    }
}

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A CSV cell could not be parsed; reports the 1-based file line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// The file or dataset shape is wrong (missing columns, ragged rows,
    /// inconsistent covariate dimension, non-finite values).
    #[error("schema error: {0}")]
    Schema(String),

    /// The dataset lacks a structural requirement that no setting can repair
    /// (e.g. only one group present).
    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    /// The dataset does not satisfy the observability pattern required by the
    /// requested setting. Carries every violating record.
    #[error("{}", format_violations(.0))]
    Validation(Vec<Violation>),

    /// A model fit was requested on an empty (or too small) subpopulation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A classification fit received single-class labels.
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    /// During cross-fitting, some fold's training complement lacks a
    /// subpopulation needed by the nuisance recipe.
    #[error("fold starvation: training data for fold {fold} has no {subpopulation} records")]
    FoldStarvation { fold: usize, subpopulation: String },

    /// A variance-ratio fit was requested but an arm has no usable records in
    /// one of the groups.
    #[error("variance ratio unavailable: {0}")]
    RatioUnavailable(String),

    /// An influence function needed a value (treatment or outcome) that is
    /// missing from the record it was evaluated at.
    #[error("context incomplete: {0}")]
    ContextIncomplete(String),

    /// The estimand is not identified under the requested setting.
    #[error("not identifiable: {0}")]
    NotIdentifiable(String),

    /// The request itself is invalid (flag combinations, config files,
    /// malformed grids).
    #[error("invalid request: {0}")]
    Config(String),

    /// An iterative or algebraic routine failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Too many bootstrap replicates were dropped to trust the interval.
    #[error("bootstrap unstable: {dropped} of {total} replicates dropped")]
    BootstrapUnstable { dropped: usize, total: usize },

    /// The drift-calibration regression cannot be run on this dataset.
    #[error("drift range unavailable: {0}")]
    RangeUnavailable(String),

    /// Strict-mode bound comparison found a theorem-backed ordering violated.
    #[error("ordering violation: {0}")]
    OrderingViolation(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure for configs and reports.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(5).map(Violation::to_string).collect();
    let suffix = if violations.len() > 5 {
        format!(" (+{} more)", violations.len() - 5)
    } else {
        String::new()
    };
    format!(
        "dataset fails setting validation with {} violation(s): {}{}",
        violations.len(),
        shown.join("; "),
        suffix
    )
}

impl Error {
    /// Process exit code used by the command-line interface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::NotIdentifiable(_) => 2,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Degenerate(_)
            | Error::Validation(_) => 3,
            Error::OrderingViolation(_) => 5,
            _ => 4,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_display_truncates_long_lists() {
        let violations: Vec<Violation> = (0..8)
            .map(|i| Violation { record: i, rule: "missing y".into() })
            .collect();
        let msg = Error::Validation(violations).to_string();
        assert!(msg.contains("8 violation(s)"));
        assert!(msg.contains("(+3 more)"));
    }

    #[test]
    fn exit_codes_partition_the_taxonomy() {
        assert_eq!(Error::Config("bad".into()).exit_code(), 2);
        assert_eq!(Error::NotIdentifiable("att".into()).exit_code(), 2);
        assert_eq!(Error::Schema("no g".into()).exit_code(), 3);
        assert_eq!(Error::Parse { line: 3, message: "x".into() }.exit_code(), 3);
        assert_eq!(Error::Numerical("nan".into()).exit_code(), 4);
        assert_eq!(
            Error::FoldStarvation { fold: 1, subpopulation: "source treated".into() }.exit_code(),
            4
        );
        assert_eq!(Error::OrderingViolation("V_I < V_V".into()).exit_code(), 5);
    }
}
