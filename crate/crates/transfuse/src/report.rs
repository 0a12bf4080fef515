//! Report types and reproducible output plumbing.
//!
//! Every artifact the tool writes — single-estimate JSON reports and the
//! table CSVs produced by batch commands — embeds the fully resolved
//! configuration and the seed, so a run can be reproduced from its own
//! output. The timestamp is isolated (its own JSON field, its own `#` header
//! line) so byte-comparison of two runs only differs there.

use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::data::{DriftSummary, SettingSpec, Structure};
use crate::eif::Estimand;
use crate::error::Result;

/// Serializable description of a setting (structure + drift), used in report
/// headers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingSummary {
    /// Observability structure.
    pub structure: Structure,
    /// Roman-numeral label with `*` for non-identity drift.
    pub label: String,
    /// Drift description.
    pub drift: DriftSummary,
}

impl From<&SettingSpec> for SettingSummary {
    fn from(s: &SettingSpec) -> Self {
        SettingSummary { structure: s.structure, label: s.label(), drift: s.drift.summary() }
    }
}

/// Per-estimate numerical diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Sample mean of the centered influence function (should be ~0; the
    /// one-step point solves the estimating equation exactly).
    pub mean_centered_eif: f64,
    /// Fraction of records whose nuisance predictions were clipped.
    pub clip_fraction: f64,
    /// Nuisance method that produced the surface ("parametric", "forest",
    /// "oracle", or "injected").
    pub nuisance_method: String,
}

/// A single point estimate with its Wald interval and provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    /// Which causal quantity this estimates.
    pub estimand: Estimand,
    /// Setting under which it was computed.
    pub setting: SettingSummary,
    /// One-step point estimate.
    pub point: f64,
    /// Plug-in variance of the point estimate (second moment of the centered
    /// influence function over n).
    pub variance: f64,
    /// Lower Wald 95% limit.
    pub ci_low: f64,
    /// Upper Wald 95% limit.
    pub ci_high: f64,
    /// Number of records used.
    pub n: usize,
    /// Numerical diagnostics.
    pub diagnostics: Diagnostics,
}

/// Provenance block embedded in every output artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    /// Tool name.
    pub tool: String,
    /// Crate version.
    pub version: String,
    /// Base seed of the run.
    pub seed: u64,
    /// Fully resolved configuration echoed back.
    pub config: serde_json::Value,
    /// Unix timestamp (seconds) of report creation.
    pub timestamp: u64,
}

impl ReportMeta {
    /// Meta block for the current crate version and wall-clock time.
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        ReportMeta {
            tool: "transfuse".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            timestamp: unix_now(),
        }
    }
}

/// Seconds since the Unix epoch.
pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Wraps a payload with its meta block: `{"meta": ..., "result": ...}`.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T: Serialize> {
    /// Provenance.
    pub meta: ReportMeta,
    /// Command-specific payload.
    pub result: T,
}

/// Writes a pretty-printed JSON envelope to `path`.
pub fn write_json_report<T: Serialize>(path: &Path, meta: &ReportMeta, result: &T) -> Result<()> {
    let envelope = serde_json::json!({ "meta": meta, "result": result });
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &envelope)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// `#`-prefixed header lines embedding the meta block above a CSV table. The
/// timestamp gets its own line so everything else is byte-stable across runs.
pub fn comment_header(meta: &ReportMeta) -> String {
    let config = serde_json::to_string(&meta.config).unwrap_or_else(|_| "{}".into());
    format!(
        "# tool: {} v{}\n# seed: {}\n# config: {}\n# generated-at: {}\n",
        meta.tool, meta.version, meta.seed, config, meta.timestamp
    )
}

/// Writes a CSV table with the meta comment header, a column header, and one
/// line per row. Rows must match the header width.
pub fn write_table(
    path: &Path,
    meta: &ReportMeta,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    write_table_with_notes(path, meta, &[], columns, rows)
}

/// [`write_table`] with extra `# `-prefixed note lines between the meta
/// header and the column header (result-level annotations such as an
/// empirical drift range or ordering certificates).
pub fn write_table_with_notes(
    path: &Path,
    meta: &ReportMeta,
    notes: &[String],
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    for row in rows {
        if row.len() != columns.len() {
            return Err(crate::error::Error::Config(format!(
                "table row has {} cells, header has {}",
                row.len(),
                columns.len()
            )));
        }
    }
    let mut out = String::new();
    out.push_str(&comment_header(meta));
    for note in notes {
        out.push_str("# ");
        out.push_str(note);
        out.push('\n');
    }
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            tool: "transfuse".into(),
            version: "0.0.0".into(),
            seed: 7,
            config: serde_json::json!({"n": 10}),
            timestamp: 123,
        }
    }

    #[test]
    fn comment_header_isolates_the_timestamp() {
        let mut a = meta();
        let mut b = meta();
        a.timestamp = 1;
        b.timestamp = 2;
        let (ha, hb) = (comment_header(&a), comment_header(&b));
        let differing: Vec<(&str, &str)> =
            ha.lines().zip(hb.lines()).filter(|(x, y)| x != y).collect();
        assert_eq!(differing.len(), 1);
        assert!(differing[0].0.starts_with("# generated-at:"));
    }

    #[test]
    fn table_round_trips_through_a_comment_aware_csv_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_table(
            &path,
            &meta(),
            &["case", "value"],
            &[vec!["C1".into(), "1.5".into()], vec!["C2".into(), "2.5".into()]],
        )
        .unwrap();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(&path)
            .unwrap();
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[1][1], "2.5");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let err = write_table(&path, &meta(), &["a", "b"], &[vec!["1".into()]]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
