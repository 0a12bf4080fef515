//! Estimators beyond the target-population average effect: the source-study
//! effect `beta` and the two effects-on-the-treated (`tau_att` for the target
//! population, `beta_att` for the source study).
//!
//! All reuse the `(u, c)` one-step engine from [`crate::eif`]. The treated
//! estimands additionally need the group-level treated fractions, carried by
//! [`ExtEifContext`]; they are only identified under identity drift, and
//! `tau_att` additionally needs the target treatment marginal (structures
//! with observed target `a`).

use crate::data::{validate_dataset, SampleRecord, SettingSpec, Structure, StudyDataset};
use crate::eif::{one_step, tau_terms, wald, EifContext, Estimand, DEFAULT_Z};
use crate::error::{Error, Result};
use crate::nuisance::{cross_fit, NuisanceConfig};
use crate::report::{Diagnostics, EstimateReport};

/// Context for the effect-on-the-treated estimands: the base context plus the
/// observed treated fractions of each group.
#[derive(Debug, Clone)]
pub struct ExtEifContext<'a> {
    /// Setting, surface, sampling fraction.
    pub base: EifContext<'a>,
    /// Mean of `a` over target records with observed `a` (None when the
    /// target never reveals treatment).
    pub e0_bar: Option<f64>,
    /// Mean of `a` over source records.
    pub e1_bar: f64,
}

impl<'a> ExtEifContext<'a> {
    /// Computes the group treated-fractions from the dataset.
    pub fn from_dataset(base: EifContext<'a>, d: &StudyDataset) -> Self {
        let (mut s1, mut n1) = (0.0, 0usize);
        let (mut s0, mut n0) = (0.0, 0usize);
        for rec in d.records() {
            match (rec.g, rec.a) {
                (1, Some(a)) => {
                    s1 += f64::from(a);
                    n1 += 1;
                }
                (0, Some(a)) => {
                    s0 += f64::from(a);
                    n0 += 1;
                }
                _ => {}
            }
        }
        let e1_bar = if n1 > 0 { s1 / n1 as f64 } else { 0.0 };
        let e0_bar = (n0 > 0).then(|| s0 / n0 as f64);
        ExtEifContext { base, e0_bar, e1_bar }
    }
}

fn surface_at(ctx: &EifContext<'_>, idx: usize) -> (f64, f64, f64, f64, f64, f64, f64) {
    let s = ctx.surface;
    let drift = &ctx.setting.drift;
    let (mu0, mu1) = (s.mu0_hat[idx], s.mu1_hat[idx]);
    let (m0, m1) = (drift.m(0, mu0), drift.m(1, mu1));
    (
        s.pi_hat[idx],
        s.e0_hat[idx],
        s.e1_hat[idx],
        mu0,
        mu1,
        m0 * m0 * s.r0_hat[idx],
        m1 * m1 * s.r1_hat[idx],
    )
}

fn observed_ay(rec: &SampleRecord, what: &str) -> Result<(f64, f64)> {
    match (rec.a, rec.y) {
        (Some(a), Some(y)) => Ok((f64::from(a), y)),
        _ => Err(Error::ContextIncomplete(format!(
            "record lacks observed (a, y) required by the {what} influence function"
        ))),
    }
}

fn require_standard_weighting(ctx: &EifContext<'_>, estimand: Estimand) -> Result<()> {
    if ctx.known_pi {
        return Err(Error::Config(format!(
            "known-pi weighting applies to target-effect estimands only, not {estimand}"
        )));
    }
    Ok(())
}

fn drift_slope_guard(m: f64, arm: u8) -> Result<f64> {
    if m.abs() < 1e-12 {
        return Err(Error::Numerical(format!(
            "drift slope for arm {arm} vanishes; residual transport undefined"
        )));
    }
    Ok(m)
}

/// `(u, c)` terms of the source-effect EIF.
pub(crate) fn beta_terms(
    ctx: &EifContext<'_>,
    idx: usize,
    rec: &SampleRecord,
) -> Result<(f64, f64)> {
    let (pi, e0, e1, mu0, mu1, r0, r1) = surface_at(ctx, idx);
    let drift = &ctx.setting.drift;
    let q = ctx.q_hat;
    let g = f64::from(rec.g);
    let c = g / q;
    let starred = ctx.setting.is_starred();

    let mut u = 0.0;
    match ctx.setting.structure {
        // Structures I-IV: beta is a source-only functional, so drift in the
        // target never enters its efficient score.
        Structure::XOnly | Structure::XA | Structure::XY | Structure::XAY => {
            if rec.g == 1 {
                let (a, y) = observed_ay(rec, "source-effect")?;
                u = (a * (y - mu1) / e1 - (1.0 - a) * (y - mu0) / (1.0 - e1) + (mu1 - mu0)) / q;
            }
        }
        Structure::XAYControlsOnly if !starred => {
            let joint = e1 * pi;
            let (a, y) = observed_ay(rec, "source-effect controls-only")?;
            if rec.g == 1 {
                u += (a * (y - mu1) / e1 + (mu1 - mu0)) / q;
            }
            u -= (1.0 - a) * (y - mu0) * pi / (1.0 - joint) / q;
        }
        Structure::XAYControlsOnly => {
            let (a, y) = observed_ay(rec, "source-effect controls-only")?;
            let w1 = pi * e1;
            let w0 = pi * (1.0 - e1) + (1.0 - pi) * r0;
            if rec.g == 1 {
                u += pi / q * (a * (y - mu1) / w1 - (1.0 - a) * (y - mu0) / w0);
                u += (mu1 - mu0) / q;
            } else {
                let m0 = drift_slope_guard(drift.m(0, mu0), 0)?;
                let psi0 = drift.psi(0, mu0);
                u -= pi / q * (1.0 - a) * (y - psi0) * r0 / (m0 * w0);
            }
        }
        Structure::XAYUnconfounded if !starred => {
            let e = e0 * (1.0 - pi) + e1 * pi;
            let (a, y) = observed_ay(rec, "source-effect unconfounded")?;
            u += pi / q * (a * (y - mu1) / e - (1.0 - a) * (y - mu0) / (1.0 - e));
            if rec.g == 1 {
                u += (mu1 - mu0) / q;
            }
        }
        Structure::XAYUnconfounded => {
            let (a, y) = observed_ay(rec, "source-effect unconfounded")?;
            let omega1 = pi * e1 + (1.0 - pi) * e0 * r1;
            let omega0 = pi * (1.0 - e1) + (1.0 - pi) * (1.0 - e0) * r0;
            if rec.g == 1 {
                u += pi / q * (a * (y - mu1) / omega1 - (1.0 - a) * (y - mu0) / omega0);
                u += (mu1 - mu0) / q;
            } else {
                let m0 = drift_slope_guard(drift.m(0, mu0), 0)?;
                let m1 = drift_slope_guard(drift.m(1, mu1), 1)?;
                let (psi0, psi1) = (drift.psi(0, mu0), drift.psi(1, mu1));
                u += pi / q
                    * (a * (y - psi1) * r1 / (m1 * omega1)
                        - (1.0 - a) * (y - psi0) * r0 / (m0 * omega0));
            }
        }
    }
    Ok((u, c))
}

fn att_preconditions(setting: &SettingSpec, estimand: Estimand) -> Result<()> {
    if setting.is_starred() {
        return Err(Error::NotIdentifiable(format!(
            "{estimand} is only identified under identity drift, not setting {}",
            setting.label()
        )));
    }
    if estimand == Estimand::TauAtt
        && !matches!(
            setting.structure,
            Structure::XA | Structure::XAY | Structure::XAYUnconfounded
        )
    {
        return Err(Error::NotIdentifiable(format!(
            "tau_att needs observed target treatment; setting {} never reveals it",
            setting.label()
        )));
    }
    Ok(())
}

fn treated_fraction(label: &str, value: Option<f64>) -> Result<f64> {
    match value {
        Some(v) if v > 0.0 && v < 1.0 => Ok(v),
        Some(v) => Err(Error::InsufficientData(format!(
            "{label} treated fraction is {v}; effect on the treated needs both arms"
        ))),
        None => Err(Error::InsufficientData(format!(
            "{label} group has no records with observed treatment"
        ))),
    }
}

/// `(u, c)` terms of the target effect-on-the-treated EIF.
pub(crate) fn tau_att_terms(
    ctx: &ExtEifContext<'_>,
    idx: usize,
    rec: &SampleRecord,
) -> Result<(f64, f64)> {
    let base = &ctx.base;
    att_preconditions(base.setting, Estimand::TauAtt)?;
    require_standard_weighting(base, Estimand::TauAtt)?;
    let e0_bar = treated_fraction("target", ctx.e0_bar)?;
    let (pi, e0, e1, mu0, mu1, _, _) = surface_at(base, idx);
    let denom = (1.0 - base.q_hat) * e0_bar;
    let g = f64::from(rec.g);

    let a_obs = match rec.a {
        Some(a) => f64::from(a),
        None if rec.g == 0 => {
            return Err(Error::ContextIncomplete(
                "target record lacks observed treatment required by tau_att".into(),
            ))
        }
        None => {
            return Err(Error::ContextIncomplete(
                "source record lacks observed treatment".into(),
            ))
        }
    };
    let c = (1.0 - g) * a_obs / denom;
    let mut u = c * (mu1 - mu0);
    match base.setting.structure {
        Structure::XA | Structure::XAY => {
            if rec.g == 1 {
                let (a, y) = observed_ay(rec, "treated-target")?;
                u += (1.0 - pi) * e0 / pi / denom
                    * (a * (y - mu1) / e1 - (1.0 - a) * (y - mu0) / (1.0 - e1));
            }
        }
        Structure::XAYUnconfounded => {
            let e = e0 * (1.0 - pi) + e1 * pi;
            let (a, y) = observed_ay(rec, "treated-target unconfounded")?;
            u += (1.0 - pi) * e0 / denom
                * (a * (y - mu1) / e - (1.0 - a) * (y - mu0) / (1.0 - e));
        }
        _ => unreachable!("precondition rejects other structures"),
    }
    Ok((u, c))
}

/// `(u, c)` terms of the source effect-on-the-treated EIF.
pub(crate) fn beta_att_terms(
    ctx: &ExtEifContext<'_>,
    idx: usize,
    rec: &SampleRecord,
) -> Result<(f64, f64)> {
    let base = &ctx.base;
    att_preconditions(base.setting, Estimand::BetaAtt)?;
    require_standard_weighting(base, Estimand::BetaAtt)?;
    let e1_bar = treated_fraction("source", Some(ctx.e1_bar))?;
    let (pi, e0, e1, mu0, mu1, _, _) = surface_at(base, idx);
    let denom = base.q_hat * e1_bar;
    let g = f64::from(rec.g);

    let mut u = 0.0;
    let mut c = 0.0;
    if rec.g == 1 {
        let (a, _) = observed_ay(rec, "treated-source")?;
        c = g * a / denom;
        u += c * (mu1 - mu0);
    }
    match base.setting.structure {
        Structure::XOnly | Structure::XA | Structure::XY | Structure::XAY => {
            if rec.g == 1 {
                let (a, y) = observed_ay(rec, "treated-source")?;
                u += (a * (y - mu1) - (1.0 - a) * (y - mu0) * e1 / (1.0 - e1)) / denom;
            }
        }
        Structure::XAYControlsOnly => {
            let joint = e1 * pi;
            let (a, y) = observed_ay(rec, "treated-source controls-only")?;
            if rec.g == 1 {
                u += a * (y - mu1) / denom;
            }
            u -= (1.0 - a) * (y - mu0) * pi * e1 / (1.0 - joint) / denom;
        }
        Structure::XAYUnconfounded => {
            let e = e0 * (1.0 - pi) + e1 * pi;
            let (a, y) = observed_ay(rec, "treated-source unconfounded")?;
            u += pi * e1 / denom * (a * (y - mu1) / e - (1.0 - a) * (y - mu0) / (1.0 - e));
        }
    }
    Ok((u, c))
}

/// Evaluates the source-effect EIF at one record, for the candidate value
/// `beta`. `idx` aligns the record with its row of the nuisance surface.
pub fn eif_beta(ctx: &EifContext<'_>, idx: usize, rec: &SampleRecord, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::Config("beta must be finite".into()));
    }
    let (u, c) = beta_terms(ctx, idx, rec)?;
    Ok(u - c * beta)
}

/// Evaluates the target effect-on-the-treated EIF at one record, for the
/// candidate value `tau_att`.
pub fn eif_tau_att(
    ctx: &ExtEifContext<'_>,
    idx: usize,
    rec: &SampleRecord,
    tau_att: f64,
) -> Result<f64> {
    if !tau_att.is_finite() {
        return Err(Error::Config("tau_att must be finite".into()));
    }
    let (u, c) = tau_att_terms(ctx, idx, rec)?;
    Ok(u - c * tau_att)
}

/// Evaluates the source effect-on-the-treated EIF at one record, for the
/// candidate value `beta_att`.
pub fn eif_beta_att(
    ctx: &ExtEifContext<'_>,
    idx: usize,
    rec: &SampleRecord,
    beta_att: f64,
) -> Result<f64> {
    if !beta_att.is_finite() {
        return Err(Error::Config("beta_att must be finite".into()));
    }
    let (u, c) = beta_att_terms(ctx, idx, rec)?;
    Ok(u - c * beta_att)
}

/// One-step estimate of the source-study average treatment effect.
pub fn estimate_beta(d: &StudyDataset, ctx: &EifContext<'_>) -> Result<EstimateReport> {
    require_standard_weighting(ctx, Estimand::Beta)?;
    validate_dataset(d, ctx.setting)?;
    ctx.surface.check(d.n())?;
    let (point, variance, mean_centered) = one_step(d, |i, r| beta_terms(ctx, i, r))?;
    let (ci_low, ci_high) = wald(point, variance, DEFAULT_Z);
    Ok(EstimateReport {
        estimand: Estimand::Beta,
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

fn estimate_att(
    d: &StudyDataset,
    ctx: &ExtEifContext<'_>,
    estimand: Estimand,
) -> Result<EstimateReport> {
    validate_dataset(d, ctx.base.setting)?;
    ctx.base.surface.check(d.n())?;
    let terms = |i: usize, r: &SampleRecord| match estimand {
        Estimand::TauAtt => tau_att_terms(ctx, i, r),
        Estimand::BetaAtt => beta_att_terms(ctx, i, r),
        _ => unreachable!("estimate_att only handles treated estimands"),
    };
    let (point, variance, mean_centered) = one_step(d, terms)?;
    let (ci_low, ci_high) = wald(point, variance, DEFAULT_Z);
    Ok(EstimateReport {
        estimand,
        setting: ctx.base.setting.into(),
        point,
        variance,
        ci_low,
        ci_high,
        n: d.n(),
        diagnostics: Diagnostics {
            mean_centered_eif: mean_centered,
            clip_fraction: ctx.base.surface.clip_fraction,
            nuisance_method: ctx.base.surface.method.clone(),
        },
    })
}

/// One-step estimate of the target-population effect on the treated.
pub fn estimate_tau_att(d: &StudyDataset, ctx: &ExtEifContext<'_>) -> Result<EstimateReport> {
    estimate_att(d, ctx, Estimand::TauAtt)
}

/// One-step estimate of the source-study effect on the treated.
pub fn estimate_beta_att(d: &StudyDataset, ctx: &ExtEifContext<'_>) -> Result<EstimateReport> {
    estimate_att(d, ctx, Estimand::BetaAtt)
}

/// Estimates with a caller-provided nuisance surface (audit injection,
/// oracle checks). `known_pi` switches the target-effect influence function
/// to its known-sampling-score form; non-target estimands reject it.
pub fn estimate_with_surface(
    d: &StudyDataset,
    setting: &SettingSpec,
    surface: &crate::nuisance::NuisanceSurface,
    estimand: Estimand,
    known_pi: bool,
) -> Result<EstimateReport> {
    let mut ctx = EifContext::new(setting, surface, d.q_hat());
    if known_pi {
        ctx = ctx.with_known_pi();
    }
    match estimand {
        Estimand::Tau => crate::eif::estimate_tau(d, &ctx),
        Estimand::Beta => estimate_beta(d, &ctx),
        Estimand::TauAtt => estimate_tau_att(d, &ExtEifContext::from_dataset(ctx, d)),
        Estimand::BetaAtt => estimate_beta_att(d, &ExtEifContext::from_dataset(ctx, d)),
    }
}

/// Fits nuisances per the config and estimates the requested estimand,
/// optionally under the known-sampling-score variant.
pub fn estimate_estimand_with(
    d: &StudyDataset,
    setting: &SettingSpec,
    cfg: &NuisanceConfig,
    estimand: Estimand,
    known_pi: bool,
) -> Result<EstimateReport> {
    let surface = cross_fit(d, setting, cfg)?;
    estimate_with_surface(d, setting, &surface, estimand, known_pi)
}

/// Fits nuisances per the config and estimates the requested estimand. This
/// is the entry point used by the replicate studies and the bootstrap.
pub fn estimate_estimand(
    d: &StudyDataset,
    setting: &SettingSpec,
    cfg: &NuisanceConfig,
    estimand: Estimand,
) -> Result<EstimateReport> {
    estimate_estimand_with(d, setting, cfg, estimand, false)
}

/// `(u, c)` dispatch used by the Monte Carlo lab.
pub(crate) fn terms_for(
    estimand: Estimand,
    ctx: &ExtEifContext<'_>,
    idx: usize,
    rec: &SampleRecord,
) -> Result<(f64, f64)> {
    match estimand {
        Estimand::Tau => tau_terms(&ctx.base, idx, rec),
        Estimand::Beta => beta_terms(&ctx.base, idx, rec),
        Estimand::TauAtt => tau_att_terms(ctx, idx, rec),
        Estimand::BetaAtt => beta_att_terms(ctx, idx, rec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::NuisanceSurface;
    use approx::assert_abs_diff_eq;

    /// Same deterministic fixture as the target-effect tests.
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
    fn beta_under_pooled_settings_ignores_target_outcomes() {
        let (d, s) = fixture();
        let setting = SettingSpec::identity(Structure::XAY);
        let base = estimate_beta(&d, &EifContext::new(&setting, &s, d.q_hat())).unwrap();

        let mut scrambled: Vec<SampleRecord> = d.records().to_vec();
        for rec in scrambled.iter_mut().filter(|r| r.g == 0) {
            if let Some(y) = rec.y.as_mut() {
                *y += 100.0;
            }
        }
        let d2 = StudyDataset::new(scrambled).unwrap();
        let alt = estimate_beta(&d2, &EifContext::new(&setting, &s, d2.q_hat())).unwrap();
        assert_eq!(base.point.to_bits(), alt.point.to_bits());
        assert_eq!(base.variance.to_bits(), alt.variance.to_bits());
    }

    #[test]
    fn beta_unconfounded_with_unit_sampling_score_matches_pooled_on_source_records() {
        let (d, mut s) = fixture();
        s.pi_hat = vec![1.0 - 1e-9; 20];
        let vi = SettingSpec::identity(Structure::XAYUnconfounded);
        let i = SettingSpec::identity(Structure::XOnly);
        let ctx_vi = EifContext::new(&vi, &s, d.q_hat());
        let ctx_i = EifContext::new(&i, &s, d.q_hat());
        for (idx, rec) in d.records().iter().enumerate().filter(|(_, r)| r.g == 1) {
            let (u_vi, c_vi) = beta_terms(&ctx_vi, idx, rec).unwrap();
            let (u_i, c_i) = beta_terms(&ctx_i, idx, rec).unwrap();
            assert_abs_diff_eq!(u_vi, u_i, epsilon = 1e-6);
            assert_abs_diff_eq!(c_vi, c_i, epsilon = 1e-12);
        }
    }

    #[test]
    fn treated_target_effect_with_equal_propensities_collapses_to_marginal_form() {
        let (d, mut s) = fixture();
        s.e0_hat.clone_from(&s.e1_hat);
        let setting = SettingSpec::identity(Structure::XAYUnconfounded);
        let ctx = ExtEifContext::from_dataset(
            EifContext::new(&setting, &s, d.q_hat()),
            &d,
        );
        let e0_bar = ctx.e0_bar.unwrap();
        let denom = (1.0 - d.q_hat()) * e0_bar;
        for (idx, rec) in d.records().iter().enumerate() {
            let (u, _) = tau_att_terms(&ctx, idx, rec).unwrap();
            // With e0 == e1 the mixture propensity equals e1 regardless of pi.
            let (pi, _, e1, mu0, mu1, _, _) = surface_at(&ctx.base, idx);
            let a = f64::from(rec.a.unwrap());
            let y = rec.y.unwrap();
            let g = f64::from(rec.g);
            let expected = (1.0 - pi) / denom
                * (a * (y - mu1) - (1.0 - a) * (y - mu0) * e1 / (1.0 - e1))
                + (1.0 - g) * a / denom * (mu1 - mu0);
            assert_abs_diff_eq!(u, expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn treated_estimands_reject_drifted_settings_and_hidden_treatment() {
        let (d, s) = fixture();
        let drifted = SettingSpec::linear(Structure::XAYUnconfounded, 0.8, 0.8);
        let ctx = ExtEifContext::from_dataset(EifContext::new(&drifted, &s, d.q_hat()), &d);
        assert!(matches!(
            estimate_tau_att(&d, &ctx).unwrap_err(),
            Error::NotIdentifiable(_)
        ));

        let hidden = SettingSpec::identity(Structure::XY);
        let ctx = ExtEifContext::from_dataset(EifContext::new(&hidden, &s, d.q_hat()), &d);
        assert!(matches!(
            estimate_tau_att(&d, &ctx).unwrap_err(),
            Error::NotIdentifiable(_)
        ));
    }

    #[test]
    fn known_pi_weighting_is_rejected_outside_target_effects() {
        let (d, s) = fixture();
        let setting = SettingSpec::identity(Structure::XAY);
        let ctx = EifContext::new(&setting, &s, d.q_hat()).with_known_pi();
        assert!(matches!(estimate_beta(&d, &ctx).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn zero_residual_surfaces_make_treated_estimates_exact_cate_averages() {
        // Outcomes equal to the fitted arm means: the correction terms vanish
        // and the treated estimands reduce to weighted CATE averages.
        let (d, mut s) = fixture();
        let records: Vec<SampleRecord> = d
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let a = r.a.unwrap();
                let y = if a == 1 { s.mu1_hat[i] } else { s.mu0_hat[i] };
                SampleRecord { x: r.x.clone(), a: Some(a), y: Some(y), g: r.g }
            })
            .collect();
        let d = StudyDataset::new(records).unwrap();
        s.r0_hat = vec![1.0; 20];
        let setting = SettingSpec::identity(Structure::XAY);
        let ctx = ExtEifContext::from_dataset(EifContext::new(&setting, &s, d.q_hat()), &d);
        let report = estimate_beta_att(&d, &ctx).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (i, rec) in d.records().iter().enumerate() {
            if rec.g == 1 && rec.a == Some(1) {
                num += s.mu1_hat[i] - s.mu0_hat[i];
                den += 1.0;
            }
        }
        assert_abs_diff_eq!(report.point, num / den, epsilon = 1e-12);
    }

    #[test]
    fn estimand_names_round_trip() {
        for e in [Estimand::Tau, Estimand::Beta, Estimand::TauAtt, Estimand::BetaAtt] {
            assert_eq!(Estimand::parse(e.name()).unwrap(), e);
        }
        assert_eq!(Estimand::parse("tau-att").unwrap(), Estimand::TauAtt);
        assert!(Estimand::parse("gamma").is_err());
    }
}
