//! Sensitivity analysis over outcome-mean drift.
//!
//! When the two studies may disagree about conditional outcome means, the
//! proportional family `psi_a(u) = eps_a * u` indexes the disagreement by two
//! scalars. This module sweeps estimates and confidence intervals over a grid
//! of `(eps0, eps1)` values with the nuisance fits held fixed, and derives an
//! empirical plausible range for the factors by comparing control-arm mean
//! surfaces fitted separately in each study.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{SettingSpec, Structure, StudyDataset};
use crate::eif::{estimate_tau, EifContext};
use crate::error::{Error, Result};
use crate::nuisance::{cross_fit, fit_reg, NuisanceConfig, RatioFit};
use crate::report::EstimateReport;
use crate::rng::derive_seed;

/// Granularity to which the empirical range is rounded outward.
const RANGE_STEP: f64 = 0.05;
/// Robust-standard-error multiplier for the empirical range band.
const RANGE_BAND_SE: f64 = 2.0;

/// Estimates a plausible range for the drift factor by fitting the
/// control-arm mean surface separately in each study and regressing the
/// target fits on the source fits through the origin (the proportional
/// family has no intercept), both evaluated over the target covariate
/// sample. Returns `slope ± 2` heteroskedasticity-robust standard errors,
/// rounded outward to the nearest 0.05.
///
/// Requires target controls with observed outcomes; without them the
/// control-arm surface of the target study cannot be fit and the range is
/// unavailable.
pub fn epsilon_range(d: &StudyDataset, cfg: &NuisanceConfig) -> Result<(f64, f64)> {
    let mut source_x: Vec<&[f64]> = Vec::new();
    let mut source_y: Vec<f64> = Vec::new();
    let mut target_x: Vec<&[f64]> = Vec::new();
    let mut target_y: Vec<f64> = Vec::new();
    for rec in d.records() {
        if rec.a != Some(0) {
            continue;
        }
        let Some(y) = rec.y else { continue };
        if rec.g == 1 {
            source_x.push(&rec.x);
            source_y.push(y);
        } else {
            target_x.push(&rec.x);
            target_y.push(y);
        }
    }
    if target_x.len() < 2 {
        return Err(Error::RangeUnavailable(format!(
            "empirical drift range needs target controls with observed outcomes, found {}",
            target_x.len()
        )));
    }
    if source_x.len() < 2 {
        return Err(Error::RangeUnavailable(format!(
            "empirical drift range needs source controls, found {}",
            source_x.len()
        )));
    }
    let source_fit = fit_reg(&source_x, &source_y, cfg, derive_seed(cfg.seed, 7001))?;
    let target_fit = fit_reg(&target_x, &target_y, cfg, derive_seed(cfg.seed, 7002))?;

    // Origin regression of target fits on source fits over target records.
    let (mut sxx, mut sxy) = (0.0f64, 0.0f64);
    let eval: Vec<(f64, f64)> = d
        .records()
        .iter()
        .filter(|rec| rec.g == 0)
        .map(|rec| (source_fit.predict(&rec.x), target_fit.predict(&rec.x)))
        .collect();
    for &(s, t) in &eval {
        sxx += s * s;
        sxy += s * t;
    }
    if sxx <= f64::EPSILON {
        return Err(Error::RangeUnavailable(
            "source control-mean fits are identically zero on the target sample".into(),
        ));
    }
    let slope = sxy / sxx;
    let meat: f64 = eval
        .iter()
        .map(|&(s, t)| {
            let u = t - slope * s;
            s * s * u * u
        })
        .sum();
    let se = meat.sqrt() / sxx;
    if !slope.is_finite() || !se.is_finite() {
        return Err(Error::Numerical(
            "empirical drift range produced a non-finite slope or spread".into(),
        ));
    }
    let lo = slope - RANGE_BAND_SE * se;
    let hi = slope + RANGE_BAND_SE * se;
    Ok((
        (lo / RANGE_STEP + 1e-9).floor() * RANGE_STEP,
        (hi / RANGE_STEP - 1e-9).ceil() * RANGE_STEP,
    ))
}

/// Estimates and intervals swept over a drift-factor grid.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// Grid points, sorted lexicographically and deduplicated.
    pub grid: Vec<(f64, f64)>,
    /// Structures evaluated, in input order.
    pub structures: Vec<Structure>,
    /// One report per (grid point, structure), grid-major:
    /// `reports[g * structures.len() + s]`.
    pub reports: Vec<EstimateReport>,
    /// Empirical drift range, when target controls allow it.
    pub eps_range: Option<(f64, f64)>,
    /// Checksum of the shared nuisance surface per structure; grid changes
    /// never change these.
    pub surface_checksums: Vec<u64>,
}

impl SweepResult {
    /// The report at grid index `gi` for structure index `si`.
    pub fn report(&self, gi: usize, si: usize) -> &EstimateReport {
        &self.reports[gi * self.structures.len() + si]
    }

    /// Grid point of report index `k` (reports are grid-major).
    pub fn grid_point_of(&self, k: usize) -> (f64, f64) {
        self.grid[k / self.structures.len()]
    }
}

/// Sweeps the target-effect estimate over a grid of drift factors for each
/// requested structure. Nuisances are fit once per structure — with variance
/// ratios always fitted, since drifted evaluation needs them — and shared
/// across the whole grid; only the drift varies. The grid point `(1, 1)`
/// evaluates under identity drift, so it reproduces the no-drift estimate
/// exactly. The empirical drift range rides along when the data support it.
pub fn sensitivity_sweep(
    d: &StudyDataset,
    structures: &[Structure],
    grid: &[(f64, f64)],
    cfg: &NuisanceConfig,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Config("sensitivity sweep needs a non-empty grid".into()));
    }
    if structures.is_empty() {
        return Err(Error::Config("sensitivity sweep needs at least one structure".into()));
    }
    for &(e0, e1) in grid {
        if !(e0.is_finite() && e1.is_finite()) || e0 == 0.0 || e1 == 0.0 {
            return Err(Error::Config(format!(
                "drift factors must be finite and nonzero, got ({e0}, {e1})"
            )));
        }
    }
    let mut grid: Vec<(f64, f64)> = grid.to_vec();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    grid.dedup_by(|a, b| a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits());

    let mut sweep_cfg = cfg.clone();
    sweep_cfg.ratio_fit = RatioFit::Always;

    // One surface per structure, fit under a starred setting so every field
    // the drifted influence functions read is populated.
    let mut surfaces = Vec::with_capacity(structures.len());
    let mut surface_checksums = Vec::with_capacity(structures.len());
    for &structure in structures {
        let probe = grid
            .iter()
            .find(|&&(e0, e1)| e0 != 1.0 || e1 != 1.0)
            .copied()
            .unwrap_or((1.0, 1.0));
        let fit_setting = if probe == (1.0, 1.0) {
            SettingSpec::identity(structure)
        } else {
            SettingSpec::linear(structure, probe.0, probe.1)
        };
        let surface = cross_fit(d, &fit_setting, &sweep_cfg)?;
        surface_checksums.push(surface.checksum());
        surfaces.push(surface);
    }

    let points: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|gi| (0..structures.len()).map(move |si| (gi, si)))
        .collect();
    let reports: Vec<Result<EstimateReport>> = points
        .par_iter()
        .map(|&(gi, si)| {
            let (e0, e1) = grid[gi];
            let setting = if e0 == 1.0 && e1 == 1.0 {
                SettingSpec::identity(structures[si])
            } else {
                SettingSpec::linear(structures[si], e0, e1)
            };
            let ctx = EifContext::new(&setting, &surfaces[si], d.q_hat());
            estimate_tau(d, &ctx)
        })
        .collect();
    let reports: Vec<EstimateReport> = reports.into_iter().collect::<Result<_>>()?;

    let eps_range = match epsilon_range(d, cfg) {
        Ok(r) => Some(r),
        Err(Error::RangeUnavailable(_)) => None,
        Err(e) => return Err(e),
    };

    Ok(SweepResult { grid, structures: structures.to_vec(), reports, eps_range, surface_checksums })
}
