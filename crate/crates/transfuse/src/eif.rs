//! Efficient influence functions (EIFs) for the target-population average
//! treatment effect, and the one-step estimation machinery shared by every
//! estimand in the crate.
//!
//! Each EIF is linear in the estimand: `phi(t) = u - c * t` with a
//! record-level uncentered part `u` and coefficient `c`. The one-step point
//! estimate is the exact root `sum(u) / sum(c)` of the empirical estimating
//! equation; for every standard setting the coefficients average to exactly 1,
//! so this coincides with the mean of the uncentered EIF. The plug-in variance
//! is the empirical second moment of the centered EIF divided by `n`.
//!
//! Setting dispatch for the target-population effect:
//!
//! * structures I–IV share one EIF (all identification flows through the
//!   source study);
//! * structure V (controls-only target) pools control residuals across
//!   studies through the joint score `e1 * pi`;
//! * structure VI (unconfounded target) pools both arms through the mixture
//!   propensity `e0 * (1 - pi) + e1 * pi`;
//! * non-identity drift replaces each family with its drift-corrected version,
//!   which reweights residuals by the drift slopes `m_a` and the effective
//!   variance ratios `r_a = m_a^2 * r_a_circ`.

use serde::{Deserialize, Serialize};

use crate::data::{validate_dataset, SampleRecord, SettingSpec, Structure, StudyDataset};
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceConfig, NuisanceSurface};
use crate::report::{Diagnostics, EstimateReport};
use crate::rng::{derive_seed, make_rng};

/// Wald multiplier for 95% confidence intervals.
pub const DEFAULT_Z: f64 = 1.96;

/// Which causal quantity is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimand {
    /// Target-population average treatment effect.
    #[serde(rename = "tau")]
    Tau,
    /// Source-population average treatment effect.
    #[serde(rename = "beta")]
    Beta,
    /// Target-population effect on the treated.
    #[serde(rename = "tau_att")]
    TauAtt,
    /// Source-population effect on the treated.
    #[serde(rename = "beta_att")]
    BetaAtt,
}

impl Estimand {
    /// CLI/report identifier.
    pub fn name(self) -> &'static str {
        match self {
            Estimand::Tau => "tau",
            Estimand::Beta => "beta",
            Estimand::TauAtt => "tau_att",
            Estimand::BetaAtt => "beta_att",
        }
    }

    /// Parses `tau`, `beta`, `tau-att`/`tau_att`, `beta-att`/`beta_att`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "tau" => Ok(Estimand::Tau),
            "beta" => Ok(Estimand::Beta),
            "tau_att" => Ok(Estimand::TauAtt),
            "beta_att" => Ok(Estimand::BetaAtt),
            other => Err(Error::Config(format!("unknown estimand {other:?}"))),
        }
    }
}

impl std::fmt::Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to evaluate an EIF at a record: the setting (with its
/// drift), the fitted nuisance surface, and the sampling fraction.
#[derive(Debug, Clone)]
pub struct EifContext<'a> {
    /// Setting whose influence function is evaluated.
    pub setting: &'a SettingSpec,
    /// Per-record nuisance predictions aligned with the dataset.
    pub surface: &'a NuisanceSurface,
    /// Estimated (or known) source-sampling fraction.
    pub q_hat: f64,
    /// Replace `(1 - g)` by `(1 - pi_hat)` in the effect-dispersion term
    /// (the known-sampling-score variant; target-effect estimands only).
    pub known_pi: bool,
}

impl<'a> EifContext<'a> {
    /// Context with the standard (estimated sampling score) weighting.
    pub fn new(setting: &'a SettingSpec, surface: &'a NuisanceSurface, q_hat: f64) -> Self {
        Self { setting, surface, q_hat, known_pi: false }
    }

    /// Enables the known-sampling-score variant.
    pub fn with_known_pi(mut self) -> Self {
        self.known_pi = true;
        self
    }
}

/// EIF families by structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    /// Structures I–IV: identification through the source study only.
    Pooled,
    /// Structure V: controls-only target.
    ControlsOnly,
    /// Structure VI: unconfounded target.
    Unconfounded,
}

fn family(s: Structure) -> Family {
    match s {
        Structure::XOnly | Structure::XA | Structure::XY | Structure::XAY => Family::Pooled,
        Structure::XAYControlsOnly => Family::ControlsOnly,
        Structure::XAYUnconfounded => Family::Unconfounded,
    }
}

/// Per-record nuisance values plus drift-derived quantities.
struct At {
    pi: f64,
    e0: f64,
    e1: f64,
    mu0: f64,
    mu1: f64,
    /// Drifted arm means `psi_a(mu_a)`.
    psi0: f64,
    psi1: f64,
    /// Drift slopes `m_a(mu_a)`.
    m0: f64,
    m1: f64,
    /// Effective variance ratios `m_a^2 * r_a_circ`.
    r0: f64,
    r1: f64,
}

fn at(ctx: &EifContext<'_>, idx: usize) -> At {
    let s = ctx.surface;
    let drift = &ctx.setting.drift;
    let (mu0, mu1) = (s.mu0_hat[idx], s.mu1_hat[idx]);
    let (m0, m1) = (drift.m(0, mu0), drift.m(1, mu1));
    At {
        pi: s.pi_hat[idx],
        e0: s.e0_hat[idx],
        e1: s.e1_hat[idx],
        mu0,
        mu1,
        psi0: drift.psi(0, mu0),
        psi1: drift.psi(1, mu1),
        m0,
        m1,
        r0: m0 * m0 * s.r0_hat[idx],
        r1: m1 * m1 * s.r1_hat[idx],
    }
}

fn observed_ay(rec: &SampleRecord) -> Option<(f64, f64)> {
    match (rec.a, rec.y) {
        (Some(a), Some(y)) => Some((f64::from(a), y)),
        _ => None,
    }
}

fn incomplete(what: &str) -> Error {
    Error::ContextIncomplete(format!(
        "record lacks observed (a, y) required by the {what} influence function"
    ))
}

/// Uncentered part and estimand coefficient of the target-effect EIF.
pub(crate) fn tau_terms(
    ctx: &EifContext<'_>,
    idx: usize,
    rec: &SampleRecord,
) -> Result<(f64, f64)> {
    let w = at(ctx, idx);
    let q0 = 1.0 - ctx.q_hat;
    let g = f64::from(rec.g);
    let cate_weight = if ctx.known_pi { (1.0 - w.pi) / q0 } else { (1.0 - g) / q0 };
    let fam = family(ctx.setting.structure);
    let starred = ctx.setting.is_starred();

    let mut u;
    match (fam, starred) {
        (Family::Pooled, false) => {
            u = cate_weight * (w.mu1 - w.mu0);
            if rec.g == 1 {
                let (a, y) = observed_ay(rec).ok_or_else(|| incomplete("pooled-source"))?;
                let corr =
                    a * (y - w.mu1) / w.e1 - (1.0 - a) * (y - w.mu0) / (1.0 - w.e1);
                u += (1.0 - w.pi) / w.pi / q0 * corr;
            }
        }
        (Family::Pooled, true) => {
            u = cate_weight * (w.psi1 - w.psi0);
            if rec.g == 1 {
                let (a, y) = observed_ay(rec).ok_or_else(|| incomplete("pooled-source"))?;
                let corr = w.m1 * a * (y - w.mu1) / w.e1
                    - w.m0 * (1.0 - a) * (y - w.mu0) / (1.0 - w.e1);
                u += (1.0 - w.pi) / w.pi / q0 * corr;
            }
        }
        (Family::ControlsOnly, false) => {
            u = cate_weight * (w.mu1 - w.mu0);
            let joint = w.e1 * w.pi;
            let (a, y) =
                observed_ay(rec).ok_or_else(|| incomplete("controls-only-target"))?;
            let mut corr = -(1.0 - a) * (y - w.mu0) / (1.0 - joint);
            if rec.g == 1 {
                corr += a * (y - w.mu1) / joint;
            }
            u += (1.0 - w.pi) / q0 * corr;
        }
        (Family::ControlsOnly, true) => {
            u = cate_weight * (w.psi1 - w.psi0);
            let (a, y) =
                observed_ay(rec).ok_or_else(|| incomplete("controls-only-target"))?;
            let d0 = w.pi * (1.0 - w.e1) + (1.0 - w.pi) * w.r0;
            if rec.g == 1 {
                u += (1.0 - w.pi) / q0
                    * (w.m1 * a * (y - w.mu1) / (w.pi * w.e1)
                        - w.m0 * (1.0 - a) * (y - w.mu0) / d0);
            } else {
                u -= (1.0 - w.pi) / q0 * w.r0 * (1.0 - a) * (y - w.psi0) / d0;
            }
        }
        (Family::Unconfounded, false) => {
            u = cate_weight * (w.mu1 - w.mu0);
            let e = w.e0 * (1.0 - w.pi) + w.e1 * w.pi;
            let (a, y) = observed_ay(rec).ok_or_else(|| incomplete("unconfounded-target"))?;
            u += (1.0 - w.pi) / q0
                * (a * (y - w.mu1) / e - (1.0 - a) * (y - w.mu0) / (1.0 - e));
        }
        (Family::Unconfounded, true) => {
            u = cate_weight * (w.psi1 - w.psi0);
            let (a, y) = observed_ay(rec).ok_or_else(|| incomplete("unconfounded-target"))?;
            let omega1 = w.pi * w.e1 + (1.0 - w.pi) * w.e0 * w.r1;
            let omega0 = w.pi * (1.0 - w.e1) + (1.0 - w.pi) * (1.0 - w.e0) * w.r0;
            if rec.g == 1 {
                u += (1.0 - w.pi) / q0
                    * (w.m1 * a * (y - w.mu1) / omega1
                        - w.m0 * (1.0 - a) * (y - w.mu0) / omega0);
            } else {
                u += (1.0 - w.pi) / q0
                    * (w.r1 * a * (y - w.psi1) / omega1
                        - w.r0 * (1.0 - a) * (y - w.psi0) / omega0);
            }
        }
    }
    Ok((u, cate_weight))
}

/// Evaluates the target-effect EIF at one record, for the candidate value
/// `tau`. `idx` aligns the record with its row of the nuisance surface.
pub fn eif_tau(ctx: &EifContext<'_>, idx: usize, rec: &SampleRecord, tau: f64) -> Result<f64> {
    if !tau.is_finite() {
        return Err(Error::Config("tau must be finite".into()));
    }
    let (u, c) = tau_terms(ctx, idx, rec)?;
    Ok(u - c * tau)
}

/// Shared one-step estimation engine: accumulates `(u, c)` terms, solves for
/// the point, and computes the plug-in variance and centering diagnostic.
pub(crate) fn one_step<F>(d: &StudyDataset, terms: F) -> Result<(f64, f64, f64)>
where
    F: Fn(usize, &SampleRecord) -> Result<(f64, f64)>,
{
    let n = d.n();
    let mut pairs = Vec::with_capacity(n);
    let (mut su, mut sc) = (0.0, 0.0);
    for (i, rec) in d.records().iter().enumerate() {
        let (u, c) = terms(i, rec)?;
        if !u.is_finite() || !c.is_finite() {
            return Err(Error::Numerical(format!(
                "influence function is not finite at record {i}"
            )));
        }
        su += u;
        sc += c;
        pairs.push((u, c));
    }
    if sc.abs() < 1e-12 {
        return Err(Error::Numerical(
            "estimating-equation coefficient sums to zero; estimand not recoverable".into(),
        ));
    }
    let point = su / sc;
    let (mut ssq, mut scent) = (0.0, 0.0);
    for (u, c) in pairs {
        let phi = u - c * point;
        ssq += phi * phi;
        scent += phi;
    }
    let nf = n as f64;
    Ok((point, ssq / (nf * nf), scent / nf))
}

pub(crate) fn wald(point: f64, variance: f64, z: f64) -> (f64, f64) {
    let half = z * variance.max(0.0).sqrt();
    (point - half, point + half)
}

/// One-step estimate of the target-population average treatment effect.
pub fn estimate_tau(d: &StudyDataset, ctx: &EifContext<'_>) -> Result<EstimateReport> {
    validate_dataset(d, ctx.setting)?;
    ctx.surface.check(d.n())?;
    let (point, variance, mean_centered) = one_step(d, |i, r| tau_terms(ctx, i, r))?;
    let (ci_low, ci_high) = wald(point, variance, DEFAULT_Z);
    Ok(EstimateReport {
        estimand: Estimand::Tau,
        setting: ctx.setting.into(),
        point,
        variance,
        ci_low,
        ci_high,
        n: d.n(),
        diagnostics: Diagnostics {
            mean_centered_eif: mean_centered,
            clip_fraction: ctx.surface.clip_fraction,
            nuisance_method: ctx.surface.method.clone(),
        },
    })
}

/// Percentile bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapInterval {
    /// 2.5% percentile of the replicate estimates.
    pub ci_low: f64,
    /// 97.5% percentile of the replicate estimates.
    pub ci_high: f64,
    /// Replicates dropped (resample lost a study, or a refit starved).
    pub dropped: usize,
    /// Requested number of replicates.
    pub total: usize,
}

fn percentile(sorted: &[f64], alpha: f64) -> f64 {
    let m = sorted.len();
    debug_assert!(m > 0);
    let h = alpha * (m - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Nonparametric bootstrap for any estimand: resample records with
/// replacement, refit nuisances with the same recipe, re-estimate, and take
/// percentile limits. Replicates whose resample loses a study or whose refit
/// starves are dropped and counted; more than 10% dropped is an error.
pub fn bootstrap_ci(
    d: &StudyDataset,
    setting: &SettingSpec,
    cfg: &NuisanceConfig,
    estimand: Estimand,
    known_pi: bool,
    b: usize,
    seed: u64,
) -> Result<BootstrapInterval> {
    use rayon::prelude::*;
    if b < 100 {
        return Err(Error::Config(format!("bootstrap needs B >= 100, got {b}")));
    }
    validate_dataset(d, setting)?;
    let outcomes: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = make_rng(derive_seed(seed, rep as u64));
            let resampled = match d.resample(&mut rng) {
                Ok(rd) => rd,
                Err(_) => return None,
            };
            let mut rep_cfg = cfg.clone();
            rep_cfg.seed = derive_seed(seed, (1 << 32) + rep as u64);
            crate::estimands::estimate_estimand_with(&resampled, setting, &rep_cfg, estimand, known_pi)
                .ok()
                .map(|r| r.point)
        })
        .collect();
    let mut points: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let dropped = b - points.len();
    if dropped * 10 > b {
        return Err(Error::BootstrapUnstable { dropped, total: b });
    }
    points.sort_unstable_by(|a, b| a.total_cmp(b));
    Ok(BootstrapInterval {
        ci_low: percentile(&points, 0.025),
        ci_high: percentile(&points, 0.975),
        dropped,
        total: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DriftSpec, SettingSpec};
    use approx::assert_abs_diff_eq;

    /// Deterministic 20-record dataset with a hand-fixed nuisance surface;
    /// expected point/variance values frozen from an independent scalar
    /// evaluation of the influence-function averages.
    fn fixture() -> (StudyDataset, NuisanceSurface) {
        let mut records = Vec::new();
        let mut surface = NuisanceSurface {
            method: "oracle".into(),
            fold_id: vec![0; 20],
            pi_hat: Vec::new(),
            e0_hat: Vec::new(),
            e1_hat: Vec::new(),
            mu0_hat: Vec::new(),
            mu1_hat: Vec::new(),
            r0_hat: vec![1.0; 20],
            r1_hat: vec![1.0; 20],
            clip_fraction: 0.0,
            ratio_substituted: false,
        };
        for i in 0..20usize {
            let g = (i % 2) as u8;
            let a = ((i / 2) % 2) as u8;
            let x1 = (i % 5) as f64 * 0.5 - 1.0;
            let x2 = ((i * 7) % 10) as f64 * 0.3 - 1.35;
            let y = 1.0 + 0.8 * x1 - 0.5 * x2 + 0.3 * f64::from(a) + 0.05 * i as f64;
            let y = (y * 1e6).round() / 1e6;
            records.push(SampleRecord { x: vec![x1, x2], a: Some(a), y: Some(y), g });
            surface.pi_hat.push(0.2 + 0.03 * (i % 10) as f64);
            surface.e1_hat.push(0.3 + 0.04 * (i % 8) as f64);
            surface.e0_hat.push(0.25 + 0.03 * (i % 7) as f64);
            surface.mu0_hat.push(0.5 + 0.6 * x1);
            surface.mu1_hat.push(1.2 + 0.4 * x2);
        }
        (StudyDataset::new(records).unwrap(), surface)
    }

    #[test]
    fn matches_frozen_direct_evaluation_for_setting_i() {
        let (d, s) = fixture();
        let setting = SettingSpec::identity(Structure::XOnly);
        let ctx = EifContext::new(&setting, &s, d.q_hat());
        let report = estimate_tau(&d, &ctx).unwrap();
        assert_abs_diff_eq!(report.point, 0.15370847273038893, epsilon = 1e-12);
        assert_abs_diff_eq!(report.variance, 2.2717459161477507, epsilon = 1e-12);
        assert!(report.diagnostics.mean_centered_eif.abs() < 1e-12);
    }

    #[test]
    fn matches_frozen_direct_evaluation_for_setting_vi() {
        let (d, s) = fixture();
        let setting = SettingSpec::identity(Structure::XAYUnconfounded);
        let ctx = EifContext::new(&setting, &s, d.q_hat());
        let report = estimate_tau(&d, &ctx).unwrap();
        assert_abs_diff_eq!(report.point, 0.7441553205263451, epsilon = 1e-12);
        assert!(report.diagnostics.mean_centered_eif.abs() < 1e-12);
    }

    #[test]
    fn eif_is_linear_in_tau_and_centered_at_the_point() {
        let (d, s) = fixture();
        let setting = SettingSpec::identity(Structure::XAYUnconfounded);
        let ctx = EifContext::new(&setting, &s, d.q_hat());
        let report = estimate_tau(&d, &ctx).unwrap();
        let mean_at = |t: f64| -> f64 {
            d.records()
                .iter()
                .enumerate()
                .map(|(i, r)| eif_tau(&ctx, i, r, t).unwrap())
                .sum::<f64>()
                / d.n() as f64
        };
        assert!(mean_at(report.point).abs() < 1e-12);
        // Linearity: slope in tau is -mean(c) = -1.
        let delta = mean_at(1.0) - mean_at(0.0);
        assert_abs_diff_eq!(delta, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn proportional_drift_scales_pooled_settings_linearly() {
        let (d, s) = fixture();
        let base = SettingSpec::identity(Structure::XOnly);
        let ctx = EifContext::new(&base, &s, d.q_hat());
        let p1 = estimate_tau(&d, &ctx).unwrap().point;
        for eps in [0.6, 0.8, 1.3] {
            let drifted = SettingSpec::linear(Structure::XOnly, eps, eps);
            let ctx = EifContext::new(&drifted, &s, d.q_hat());
            let pe = estimate_tau(&d, &ctx).unwrap().point;
            assert_abs_diff_eq!(pe, eps * p1, epsilon = 1e-12);
        }
    }

    #[test]
    fn known_pi_mode_changes_only_the_dispersion_weight() {
        let (d, s) = fixture();
        let setting = SettingSpec::identity(Structure::XOnly);
        let standard = EifContext::new(&setting, &s, d.q_hat());
        let known = EifContext::new(&setting, &s, d.q_hat()).with_known_pi();
        let p1 = estimate_tau(&d, &standard).unwrap();
        let p2 = estimate_tau(&d, &known).unwrap();
        assert_ne!(p1.point, p2.point);
        assert!(p2.diagnostics.mean_centered_eif.abs() < 1e-12);
    }

    #[test]
    fn custom_drift_matches_equivalent_linear_drift() {
        let (d, s) = fixture();
        let linear = SettingSpec::linear(Structure::XAYUnconfounded, 0.7, 0.7);
        let custom = SettingSpec {
            structure: Structure::XAYUnconfounded,
            drift: DriftSpec::Custom(std::sync::Arc::new(crate::data::CustomDrift {
                label: "x0.7".into(),
                psi0: Box::new(|u| 0.7 * u),
                psi1: Box::new(|u| 0.7 * u),
                m0: Box::new(|_| 0.7),
                m1: Box::new(|_| 0.7),
            })),
        };
        let pl = estimate_tau(&d, &EifContext::new(&linear, &s, d.q_hat())).unwrap();
        let pc = estimate_tau(&d, &EifContext::new(&custom, &s, d.q_hat())).unwrap();
        assert_eq!(pl.point.to_bits(), pc.point.to_bits());
    }

    #[test]
    fn percentile_interpolates_between_order_statistics() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(percentile(&v, 0.0), 1.0);
        assert_abs_diff_eq!(percentile(&v, 1.0), 5.0);
        assert_abs_diff_eq!(percentile(&v, 0.5), 3.0);
        assert_abs_diff_eq!(percentile(&v, 0.25), 2.0);
        assert_abs_diff_eq!(percentile(&v, 0.1), 1.4, epsilon = 1e-12);
    }
}
