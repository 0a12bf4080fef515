//! Core data model: study records, datasets, observation settings, and
//! outcome-drift specifications.
//!
//! A *fused* dataset pools two studies:
//!
//! * the **source** study (`g = 1`), where covariates `x`, treatment `a`, and
//!   outcome `y` are always observed, and
//! * the **target** study (`g = 0`), where which of `a`/`y` are observed
//!   depends on the [`Structure`] of the setting.
//!
//! The inferential goal throughout the crate is an average treatment effect in
//! one of the populations, estimated by fusing both samples.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// One observation from either study.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Covariate vector; same length for every record in a dataset.
    pub x: Vec<f64>,
    /// Treatment indicator, when observed.
    pub a: Option<u8>,
    /// Outcome, when observed.
    pub y: Option<f64>,
    /// Study membership: `1` = source, `0` = target.
    pub g: u8,
}

/// A validated fused dataset.
///
/// Construction enforces the structural invariants that every downstream
/// routine relies on: a consistent covariate dimension, finite values, binary
/// `a`/`g`, complete source records, and both studies represented (so the
/// estimated sampling fraction lies strictly inside `(0, 1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct StudyDataset {
    records: Vec<SampleRecord>,
    p: usize,
    q_hat: f64,
}

impl StudyDataset {
    /// Builds a dataset, checking structural invariants.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Degenerate("dataset has no records".into()));
        }
        let p = records[0].x.len();
        if p == 0 {
            return Err(Error::Schema("records must have at least one covariate".into()));
        }
        let mut n_source = 0usize;
        for (i, r) in records.iter().enumerate() {
            if r.x.len() != p {
                return Err(Error::Schema(format!(
                    "record {i} has {} covariates, expected {p}",
                    r.x.len()
                )));
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("record {i} has a non-finite covariate")));
            }
            if let Some(y) = r.y {
                if !y.is_finite() {
                    return Err(Error::Schema(format!("record {i} has a non-finite outcome")));
                }
            }
            if r.g > 1 {
                return Err(Error::Schema(format!("record {i} has g = {}, expected 0 or 1", r.g)));
            }
            if let Some(a) = r.a {
                if a > 1 {
                    return Err(Error::Schema(format!("record {i} has a = {a}, expected 0 or 1")));
                }
            }
            if r.g == 1 {
                n_source += 1;
                if r.a.is_none() || r.y.is_none() {
                    return Err(Error::Schema(format!(
                        "source record {i} (g = 1) is missing a or y; source records must be complete"
                    )));
                }
            }
        }
        if n_source == 0 {
            return Err(Error::Degenerate("no source records (g = 1)".into()));
        }
        if n_source == records.len() {
            return Err(Error::Degenerate("no target records (g = 0)".into()));
        }
        let q_hat = n_source as f64 / records.len() as f64;
        Ok(Self { records, p, q_hat })
    }

    /// All records, in their original order.
    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    /// Number of records.
    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Covariate dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Estimated source-sampling fraction `#{g = 1} / n`; always in `(0, 1)`.
    pub fn q_hat(&self) -> f64 {
        self.q_hat
    }

    /// Copy with every covariate standardized to zero mean and unit variance
    /// using pooled (both-study) moments. Opt-in: estimation uses covariates
    /// as-is, since the benchmark processes are defined on the raw scale.
    ///
    /// Constant covariates are left untouched rather than divided by zero.
    pub fn standardized(&self) -> Self {
        let n = self.n() as f64;
        let mut mean = vec![0.0; self.p];
        for r in &self.records {
            for (m, &v) in mean.iter_mut().zip(&r.x) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; self.p];
        for r in &self.records {
            for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(&r.x) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale: Vec<f64> =
            var.iter().map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        let records = self
            .records
            .iter()
            .map(|r| SampleRecord {
                x: r.x
                    .iter()
                    .zip(mean.iter().zip(&scale))
                    .map(|(&v, (&m, &s))| (v - m) / s)
                    .collect(),
                ..r.clone()
            })
            .collect();
        StudyDataset { records, p: self.p, q_hat: self.q_hat }
    }

    /// New dataset formed by resampling `n` records with replacement.
    ///
    /// Fails (propagating the constructor error) if the resample happens to
    /// lose one of the two studies entirely.
    pub fn resample<R: rand::Rng>(&self, rng: &mut R) -> Result<Self> {
        let n = self.n();
        let records = (0..n)
            .map(|_| self.records[rng.gen_range(0..n)].clone())
            .collect();
        Self::new(records)
    }
}

/// Which variables the target study observes, and which identification
/// assumptions are in force.
///
/// The six settings are conventionally labeled with roman numerals I–VI (see
/// [`Structure::label`]); an asterisk on a setting label indicates non-identity
/// outcome drift (see [`DriftSpec`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    /// Setting I: target observes covariates only.
    #[serde(rename = "x-only")]
    XOnly,
    /// Setting II: target observes covariates and treatment.
    #[serde(rename = "x-a")]
    XA,
    /// Setting III: target observes covariates and outcome.
    #[serde(rename = "x-y")]
    XY,
    /// Setting IV: target observes covariates, treatment, and outcome, but the
    /// fused analysis still identifies effects through the source study alone.
    #[serde(rename = "x-a-y")]
    XAY,
    /// Setting V: target observes everything but enrolled controls only
    /// (`a = 0` for every target record).
    #[serde(rename = "x-a-y-controls-only")]
    XAYControlsOnly,
    /// Setting VI: target observes everything and treatment is unconfounded in
    /// the target study as well.
    #[serde(rename = "x-a-y-unconfounded")]
    XAYUnconfounded,
}

impl Structure {
    /// All six structures, in label order I–VI.
    pub const ALL: [Structure; 6] = [
        Structure::XOnly,
        Structure::XA,
        Structure::XY,
        Structure::XAY,
        Structure::XAYControlsOnly,
        Structure::XAYUnconfounded,
    ];

    /// Roman-numeral label (`"I"` … `"VI"`).
    pub fn label(self) -> &'static str {
        match self {
            Structure::XOnly => "I",
            Structure::XA => "II",
            Structure::XY => "III",
            Structure::XAY => "IV",
            Structure::XAYControlsOnly => "V",
            Structure::XAYUnconfounded => "VI",
        }
    }

    /// Parses a roman-numeral label (case-insensitive).
    pub fn from_label(label: &str) -> Option<Self> {
        match label.trim().to_ascii_uppercase().as_str() {
            "I" => Some(Structure::XOnly),
            "II" => Some(Structure::XA),
            "III" => Some(Structure::XY),
            "IV" => Some(Structure::XAY),
            "V" => Some(Structure::XAYControlsOnly),
            "VI" => Some(Structure::XAYUnconfounded),
            _ => None,
        }
    }

    /// Does the setting require `a` on target records?
    pub fn requires_a(self) -> bool {
        !matches!(self, Structure::XOnly | Structure::XY)
    }

    /// Does the setting require `y` on target records?
    pub fn requires_y(self) -> bool {
        !matches!(self, Structure::XOnly | Structure::XA)
    }

    /// Is the target study restricted to controls (`a = 0`)?
    pub fn controls_only(self) -> bool {
        matches!(self, Structure::XAYControlsOnly)
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Structure::from_label(s)
            .ok_or_else(|| Error::Config(format!("unknown setting label {s:?}; expected I..VI")))
    }
}

/// User-supplied drift maps for arms 0 and 1.
///
/// `psi` maps the source-study conditional mean of an arm to the target-study
/// conditional mean; `m` must be its derivative.
pub struct CustomDrift {
    /// Display label used in reports.
    pub label: String,
    /// Drift map for arm 0.
    pub psi0: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Drift map for arm 1.
    pub psi1: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Derivative of `psi0`.
    pub m0: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Derivative of `psi1`.
    pub m1: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDrift").field("label", &self.label).finish_non_exhaustive()
    }
}

/// How target-study conditional outcome means relate to source-study ones.
///
/// Under `Identity` the two studies share conditional means (pure covariate
/// shift). `Linear { eps0, eps1 }` scales each arm's source mean by a known
/// constant — the one-parameter-per-arm family used by the sensitivity
/// analysis. `Custom` carries arbitrary differentiable maps.
#[derive(Clone)]
pub enum DriftSpec {
    /// No drift: target and source share conditional means.
    Identity,
    /// Proportional drift `psi_a(u) = eps_a * u`.
    Linear {
        /// Scale applied to the arm-0 mean.
        eps0: f64,
        /// Scale applied to the arm-1 mean.
        eps1: f64,
    },
    /// Arbitrary differentiable drift maps.
    Custom(Arc<CustomDrift>),
}

impl DriftSpec {
    /// Applies the drift map for `arm` at source-mean value `u`.
    pub fn psi(&self, arm: u8, u: f64) -> f64 {
        match self {
            DriftSpec::Identity => u,
            DriftSpec::Linear { eps0, eps1 } => if arm == 1 { eps1 * u } else { eps0 * u },
            DriftSpec::Custom(c) => if arm == 1 { (c.psi1)(u) } else { (c.psi0)(u) },
        }
    }

    /// Derivative of the drift map for `arm` at `u`.
    pub fn m(&self, arm: u8, u: f64) -> f64 {
        match self {
            DriftSpec::Identity => 1.0,
            DriftSpec::Linear { eps0, eps1 } => if arm == 1 { *eps1 } else { *eps0 },
            DriftSpec::Custom(c) => if arm == 1 { (c.m1)(u) } else { (c.m0)(u) },
        }
    }

    /// `true` only for [`DriftSpec::Identity`].
    pub fn is_identity(&self) -> bool {
        matches!(self, DriftSpec::Identity)
    }

    /// Serializable summary (kind plus linear scales, if any).
    pub fn summary(&self) -> DriftSummary {
        match self {
            DriftSpec::Identity => DriftSummary {
                kind: "identity".into(),
                eps0: None,
                eps1: None,
                label: None,
            },
            DriftSpec::Linear { eps0, eps1 } => DriftSummary {
                kind: "linear".into(),
                eps0: Some(*eps0),
                eps1: Some(*eps1),
                label: None,
            },
            DriftSpec::Custom(c) => DriftSummary {
                kind: "custom".into(),
                eps0: None,
                eps1: None,
                label: Some(c.label.clone()),
            },
        }
    }
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSpec::Identity => f.write_str("Identity"),
            DriftSpec::Linear { eps0, eps1 } => {
                write!(f, "Linear {{ eps0: {eps0}, eps1: {eps1} }}")
            }
            DriftSpec::Custom(c) => write!(f, "Custom({:?})", c.label),
        }
    }
}

impl PartialEq for DriftSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (DriftSpec::Identity, DriftSpec::Identity) => true,
            (
                DriftSpec::Linear { eps0: a0, eps1: a1 },
                DriftSpec::Linear { eps0: b0, eps1: b1 },
            ) => a0 == b0 && a1 == b1,
            (DriftSpec::Custom(a), DriftSpec::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Serializable description of a [`DriftSpec`], embedded in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    /// `"identity"`, `"linear"`, or `"custom"`.
    pub kind: String,
    /// Arm-0 scale for linear drift.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    /// Arm-1 scale for linear drift.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    /// Label for custom drift.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A complete analysis setting: what the target observes plus how its outcome
/// means drift from the source's.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingSpec {
    /// Observability pattern and identification assumptions.
    pub structure: Structure,
    /// Outcome-mean drift between the studies.
    pub drift: DriftSpec,
}

impl SettingSpec {
    /// Setting with no drift (shared conditional means).
    pub fn identity(structure: Structure) -> Self {
        Self { structure, drift: DriftSpec::Identity }
    }

    /// Setting with proportional drift `psi_a(u) = eps_a * u`.
    pub fn linear(structure: Structure, eps0: f64, eps1: f64) -> Self {
        Self { structure, drift: DriftSpec::Linear { eps0, eps1 } }
    }

    /// Label such as `"VI"` (identity drift) or `"VI*"` (drifted).
    pub fn label(&self) -> String {
        if self.drift.is_identity() {
            self.structure.label().to_string()
        } else {
            format!("{}*", self.structure.label())
        }
    }

    /// `true` when the setting carries non-identity drift.
    pub fn is_starred(&self) -> bool {
        !self.drift.is_identity()
    }
}

impl fmt::Display for SettingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Collects every record that violates the observability pattern required by
/// `structure`. An empty vector means the dataset is valid for the setting.
pub fn dataset_violations(d: &StudyDataset, structure: Structure) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (i, r) in d.records().iter().enumerate() {
        if r.g == 1 {
            continue; // source records are complete by construction
        }
        if structure.requires_a() && r.a.is_none() {
            violations.push(Violation {
                record: i,
                rule: format!("target record must observe a under setting {}", structure.label()),
            });
        }
        if structure.requires_y() && r.y.is_none() {
            violations.push(Violation {
                record: i,
                rule: format!("target record must observe y under setting {}", structure.label()),
            });
        }
        if structure.controls_only() && r.a == Some(1) {
            violations.push(Violation {
                record: i,
                rule: "target study enrolls controls only, but record has a = 1".into(),
            });
        }
    }
    violations
}

/// Checks that `d` satisfies the observability pattern of `setting`,
/// returning every violating record on failure.
pub fn validate_dataset(d: &StudyDataset, setting: &SettingSpec) -> Result<()> {
    let violations = dataset_violations(d, setting.structure);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations))
    }
}

/// Maps dataset fields to CSV column names, for files that do not use the
/// standard `x1..xp, a, y, g` header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    /// Covariate columns, in order.
    pub x: Vec<String>,
    /// Treatment column, if the file has one.
    #[serde(default)]
    pub a: Option<String>,
    /// Outcome column, if the file has one.
    #[serde(default)]
    pub y: Option<String>,
    /// Study-membership column.
    pub g: String,
}

impl ColumnMap {
    /// Reads a column map from a JSON file.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let map: ColumnMap = serde_json::from_str(&text)?;
        if map.x.is_empty() {
            return Err(Error::Config("column map lists no covariate columns".into()));
        }
        Ok(map)
    }
}

struct ResolvedColumns {
    x: Vec<usize>,
    a: Option<usize>,
    y: Option<usize>,
    g: usize,
}

fn resolve_columns(headers: &csv::StringRecord, map: Option<&ColumnMap>) -> Result<ResolvedColumns> {
    let index_of = |name: &str| headers.iter().position(|h| h == name);
    match map {
        Some(map) => {
            let mut x = Vec::with_capacity(map.x.len());
            for name in &map.x {
                x.push(index_of(name).ok_or_else(|| {
                    Error::Schema(format!("mapped covariate column {name:?} not found in header"))
                })?);
            }
            let a = match &map.a {
                Some(name) => Some(index_of(name).ok_or_else(|| {
                    Error::Schema(format!("mapped treatment column {name:?} not found in header"))
                })?),
                None => None,
            };
            let y = match &map.y {
                Some(name) => Some(index_of(name).ok_or_else(|| {
                    Error::Schema(format!("mapped outcome column {name:?} not found in header"))
                })?),
                None => None,
            };
            let g = index_of(&map.g).ok_or_else(|| {
                Error::Schema(format!("mapped group column {:?} not found in header", map.g))
            })?;
            Ok(ResolvedColumns { x, a, y, g })
        }
        None => {
            // Standard schema: covariates are the complete run x1..xp.
            let mut numbered: Vec<(usize, usize)> = Vec::new();
            for (idx, h) in headers.iter().enumerate() {
                if let Some(rest) = h.strip_prefix('x') {
                    if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                        numbered.push((rest.parse::<usize>().unwrap(), idx));
                    }
                }
            }
            numbered.sort_unstable();
            if numbered.is_empty() {
                return Err(Error::Schema("no covariate columns x1..xp in header".into()));
            }
            let p = numbered.len();
            let complete = numbered.iter().map(|(k, _)| *k).eq(1..=p);
            if !complete {
                return Err(Error::Schema(format!(
                    "covariate columns must form a complete run x1..x{p}; found {:?}",
                    numbered.iter().map(|(k, _)| format!("x{k}")).collect::<Vec<_>>()
                )));
            }
            let x = numbered.into_iter().map(|(_, idx)| idx).collect();
            let g = index_of("g")
                .ok_or_else(|| Error::Schema("required column \"g\" not found in header".into()))?;
            Ok(ResolvedColumns { x, a: index_of("a"), y: index_of("y"), g })
        }
    }
}

fn cell<'r>(record: &'r csv::StringRecord, idx: usize) -> &'r str {
    record.get(idx).unwrap_or("").trim()
}

fn parse_finite(s: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} value {s:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("{what} value {s:?} is not finite") });
    }
    Ok(v)
}

fn parse_binary(s: &str, line: u64, what: &str) -> Result<u8> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::Parse {
            line,
            message: format!("cannot parse {what} value {s:?}; expected 0 or 1"),
        }),
    }
}

/// Loads a fused dataset from CSV.
///
/// Without a [`ColumnMap`], the header must contain `g` and a complete run of
/// covariate columns `x1..xp`; `a` and `y` columns are optional. Blank `a`/`y`
/// cells mean "not observed". Parse failures report the 1-based file line.
pub fn load_csv(path: impl AsRef<Path>, map: Option<&ColumnMap>) -> Result<StudyDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path.as_ref())
        .map_err(csv_to_error)?;
    let headers = reader.headers().map_err(csv_to_error)?.clone();
    let cols = resolve_columns(&headers, map)?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_to_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let mut x = Vec::with_capacity(cols.x.len());
        for (j, &idx) in cols.x.iter().enumerate() {
            let s = cell(&row, idx);
            if s.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("covariate x{} is empty; covariates may not be missing", j + 1),
                });
            }
            x.push(parse_finite(s, line, &format!("covariate x{}", j + 1))?);
        }
        let a = match cols.a {
            Some(idx) => {
                let s = cell(&row, idx);
                if s.is_empty() { None } else { Some(parse_binary(s, line, "treatment a")?) }
            }
            None => None,
        };
        let y = match cols.y {
            Some(idx) => {
                let s = cell(&row, idx);
                if s.is_empty() { None } else { Some(parse_finite(s, line, "outcome y")?) }
            }
            None => None,
        };
        let g = parse_binary(cell(&row, cols.g), line, "group g")?;
        records.push(SampleRecord { x, a, y, g });
    }
    StudyDataset::new(records)
}

fn csv_to_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
        }
        _ => {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        }
    }
}

/// Writes a dataset in the standard schema (`x1..xp, a, y, g`, UTF-8, LF).
///
/// Floating-point values are written in shortest round-trip form, so
/// `load_csv(save_csv(d)) == d` bit for bit.
pub fn save_csv(d: &StudyDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path.as_ref())
        .map_err(csv_to_error)?;
    let mut header: Vec<String> = (1..=d.p()).map(|j| format!("x{j}")).collect();
    header.extend(["a".to_string(), "y".to_string(), "g".to_string()]);
    writer.write_record(&header).map_err(csv_to_error)?;
    let mut row: Vec<String> = Vec::with_capacity(d.p() + 3);
    for r in d.records() {
        row.clear();
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.push(r.a.map(|a| a.to_string()).unwrap_or_default());
        row.push(r.y.map(|y| y.to_string()).unwrap_or_default());
        row.push(r.g.to_string());
        writer.write_record(&row).map_err(csv_to_error)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(x: Vec<f64>, a: Option<u8>, y: Option<f64>, g: u8) -> SampleRecord {
        SampleRecord { x, a, y, g }
    }

    fn toy_dataset() -> StudyDataset {
        StudyDataset::new(vec![
            rec(vec![0.1, -0.2], Some(1), Some(1.5), 1),
            rec(vec![1.0, 0.3], Some(0), Some(-0.5), 1),
            rec(vec![-0.4, 0.9], None, None, 0),
        ])
        .unwrap()
    }

    #[test]
    fn q_hat_is_source_fraction() {
        let d = toy_dataset();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 2);
        assert!((d.q_hat() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn construction_rejects_incomplete_source_records() {
        let err = StudyDataset::new(vec![
            rec(vec![0.0], Some(1), None, 1),
            rec(vec![0.0], None, None, 0),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn construction_rejects_single_group_data() {
        let err = StudyDataset::new(vec![
            rec(vec![0.0], Some(1), Some(1.0), 1),
            rec(vec![1.0], Some(0), Some(0.0), 1),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    #[test]
    fn construction_rejects_ragged_and_nonfinite_covariates() {
        let err = StudyDataset::new(vec![
            rec(vec![0.0, 1.0], Some(1), Some(1.0), 1),
            rec(vec![0.0], None, None, 0),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = StudyDataset::new(vec![
            rec(vec![f64::NAN], Some(1), Some(1.0), 1),
            rec(vec![0.0], None, None, 0),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn structure_labels_round_trip() {
        for s in Structure::ALL {
            assert_eq!(Structure::from_label(s.label()), Some(s));
        }
        assert_eq!(Structure::from_label("vi"), Some(Structure::XAYUnconfounded));
        assert!(Structure::from_label("VII").is_none());
    }

    #[test]
    fn setting_labels_mark_drift_with_a_star() {
        assert_eq!(SettingSpec::identity(Structure::XOnly).label(), "I");
        assert_eq!(SettingSpec::linear(Structure::XAYUnconfounded, 0.8, 0.8).label(), "VI*");
    }

    #[test]
    fn linear_drift_scales_means_and_has_constant_slope() {
        let drift = DriftSpec::Linear { eps0: 0.5, eps1: 2.0 };
        assert_eq!(drift.psi(0, 3.0), 1.5);
        assert_eq!(drift.psi(1, 3.0), 6.0);
        assert_eq!(drift.m(0, -7.0), 0.5);
        assert_eq!(drift.m(1, 123.0), 2.0);
        assert!(!drift.is_identity());
        assert!(DriftSpec::Identity.is_identity());
        assert_eq!(DriftSpec::Identity.psi(1, 3.25), 3.25);
        assert_eq!(DriftSpec::Identity.m(0, 3.25), 1.0);
    }

    #[test]
    fn controls_only_validation_flags_treated_target_records() {
        let d = StudyDataset::new(vec![
            rec(vec![0.0], Some(1), Some(1.0), 1),
            rec(vec![1.0], Some(1), Some(2.0), 0),
            rec(vec![2.0], Some(0), Some(0.5), 0),
        ])
        .unwrap();
        let violations = dataset_violations(&d, Structure::XAYControlsOnly);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].record, 1);
        assert!(validate_dataset(&d, &SettingSpec::identity(Structure::XAYUnconfounded)).is_ok());
        assert!(validate_dataset(&d, &SettingSpec::identity(Structure::XAYControlsOnly)).is_err());
    }

    #[test]
    fn x_only_accepts_bare_target_records() {
        let d = toy_dataset();
        assert!(validate_dataset(&d, &SettingSpec::identity(Structure::XOnly)).is_ok());
        for s in [Structure::XA, Structure::XY, Structure::XAY] {
            assert!(validate_dataset(&d, &SettingSpec::identity(s)).is_err());
        }
    }
}
