//! Laboratory integration tests: brute-force truths against independently
//! derived reference values, bound evaluations against frozen reference
//! numbers, ordering certification, and replicate studies with fitted
//! nuisances.

use transfuse::eif::Estimand;
use transfuse::lab::{
    closed_form_bound_i, compare_bounds, dgp_generate, mc_bound, mc_study, true_estimand, true_q,
    BoundVariant, CaseId, DgpSpec,
};
use transfuse::{Error, NuisanceConfig, Structure};

// Reference values computed outside this crate by high-precision quadrature
// over the bivariate-normal covariate law, frozen here as oracles.
const REF_TAU_C1: f64 = 1.550_753_264_012_720_6;
const REF_BETA_C1: f64 = 2.449_246_735_987_278_3;
const REF_TAU_ATT_C1: f64 = 2.898_493_471_974_56;
const REF_BETA_ATT_C1: f64 = 3.238_152_666_327_07;
const REF_TAU_C7: f64 = 1.262_968_643_446_596_8;
const REF_TAU_C8: f64 = 1.811_264_776_541_332;
const REF_TAU_C16: f64 = 3.047_514_846_233_286;
const REF_TAU_C17: f64 = 2.975_160_934_797_545;
const REF_Q_C1: f64 = 0.5;
const REF_Q_C7: f64 = 0.796_1;
const REF_Q_C8: f64 = 0.203_9;
const REF_Q_C2: f64 = 0.446_441_788_167_611_4;

// Reference bound values (target-effect scale), frozen from an independent
// Monte Carlo evaluation of the same influence functions.
const REF_BOUND_I_C1: f64 = 114.395;
const REF_BOUND_VI_C1: f64 = 60.430_6;
const REF_BOUND_V_C4: f64 = 64.474_4;
const REF_BOUND_TARGET_ONLY_C1: f64 = 76.140_8;
const REF_BOUND_I_KNOWN_PI_C1: f64 = 96.578;
const REF_BOUND_BETA_I_C1: f64 = 87.298;
const REF_BOUND_VI_C11: f64 = 70.073;
const REF_BOUND_V_C13: f64 = 58.632;
const REF_BOUND_VI_C12: f64 = 61.205;
const REF_BOUND_V_C14: f64 = 82.756;
const REF_BOUND_I_DRIFT_08: f64 = 73.212_8;
const REF_BOUND_V_DRIFT_08: f64 = 42.999_6;
const REF_BOUND_VI_DRIFT_08: f64 = 42.719_2;

/// Bound references carry their own Monte Carlo error of a few tenths, so a
/// match is declared at five standard errors plus that margin.
fn assert_bound(b: &transfuse::lab::BoundEstimate, reference: f64) {
    let tol = 5.0 * b.mc_se + 0.35;
    assert!(
        (b.value - reference).abs() < tol,
        "{} {} bound {} = {:.4}, reference {reference:.4}, tolerance {tol:.4}",
        b.case,
        b.setting,
        b.estimand.name(),
        b.value,
    );
}

#[test]
fn brute_force_truths_match_quadrature_references() {
    let c1 = DgpSpec::standard(CaseId::C1);
    assert!((true_estimand(&c1, Estimand::Tau).unwrap() - REF_TAU_C1).abs() < 0.006);
    assert!((true_estimand(&c1, Estimand::Beta).unwrap() - REF_BETA_C1).abs() < 0.006);
    assert!((true_estimand(&c1, Estimand::TauAtt).unwrap() - REF_TAU_ATT_C1).abs() < 0.006);
    assert!((true_estimand(&c1, Estimand::BetaAtt).unwrap() - REF_BETA_ATT_C1).abs() < 0.006);
    assert!((true_q(&c1) - REF_Q_C1).abs() < 3e-4);

    let c7 = DgpSpec::standard(CaseId::C7);
    let c8 = DgpSpec::standard(CaseId::C8);
    assert!((true_estimand(&c7, Estimand::Tau).unwrap() - REF_TAU_C7).abs() < 0.006);
    assert!((true_estimand(&c8, Estimand::Tau).unwrap() - REF_TAU_C8).abs() < 0.006);
    assert!((true_q(&c7) - REF_Q_C7).abs() < 5e-4);
    assert!((true_q(&c8) - REF_Q_C8).abs() < 5e-4);
    assert!((true_q(&DgpSpec::standard(CaseId::C2)) - REF_Q_C2).abs() < 3e-4);

    let c16 = DgpSpec::standard(CaseId::C16);
    let c17 = DgpSpec::standard(CaseId::C17);
    assert!((true_estimand(&c16, Estimand::Tau).unwrap() - REF_TAU_C16).abs() < 0.008);
    assert!((true_estimand(&c17, Estimand::Tau).unwrap() - REF_TAU_C17).abs() < 0.008);
}

#[test]
fn controls_only_twin_shares_truths_with_its_base() {
    // Forcing target treatment to zero changes neither the covariate law nor
    // the sampling score nor the target conditional means, so the target
    // effect and the sampling fraction must agree across the pair.
    let c1 = DgpSpec::standard(CaseId::C1);
    let c4 = DgpSpec::standard(CaseId::C4);
    let t1 = true_estimand(&c1, Estimand::Tau).unwrap();
    let t4 = true_estimand(&c4, Estimand::Tau).unwrap();
    assert!((t1 - t4).abs() < 1e-12, "{t1} vs {t4}");
    assert!((true_q(&c1) - true_q(&c4)).abs() < 1e-12);
}

#[test]
fn bounds_match_frozen_references() {
    let n = 1_000_000;
    let c1 = DgpSpec::standard(CaseId::C1);
    let c4 = DgpSpec::standard(CaseId::C4);
    let b = |spec: &DgpSpec, st, est, var, seed| mc_bound(spec, st, est, var, n, seed).unwrap();

    assert_bound(
        &b(&c1, Structure::XOnly, Estimand::Tau, BoundVariant::Standard, 7),
        REF_BOUND_I_C1,
    );
    assert_bound(
        &b(&c1, Structure::XAYUnconfounded, Estimand::Tau, BoundVariant::Standard, 8),
        REF_BOUND_VI_C1,
    );
    assert_bound(
        &b(&c4, Structure::XAYControlsOnly, Estimand::Tau, BoundVariant::Standard, 9),
        REF_BOUND_V_C4,
    );
    assert_bound(
        &b(&c1, Structure::XAYUnconfounded, Estimand::Tau, BoundVariant::TargetOnly, 10),
        REF_BOUND_TARGET_ONLY_C1,
    );
    assert_bound(
        &b(&c1, Structure::XOnly, Estimand::Tau, BoundVariant::KnownPi, 11),
        REF_BOUND_I_KNOWN_PI_C1,
    );
    assert_bound(
        &b(&c1, Structure::XOnly, Estimand::Beta, BoundVariant::Standard, 12),
        REF_BOUND_BETA_I_C1,
    );
    assert_bound(&closed_form_bound_i(&c1, n, 13).unwrap(), REF_BOUND_I_C1);
}

#[test]
fn noise_split_bounds_match_frozen_references() {
    let n = 1_000_000;
    let b = |case, st, seed| {
        mc_bound(
            &DgpSpec::standard(case),
            st,
            Estimand::Tau,
            BoundVariant::Standard,
            n,
            seed,
        )
        .unwrap()
    };
    assert_bound(&b(CaseId::C11, Structure::XAYUnconfounded, 14), REF_BOUND_VI_C11);
    assert_bound(&b(CaseId::C13, Structure::XAYControlsOnly, 15), REF_BOUND_V_C13);
    assert_bound(&b(CaseId::C12, Structure::XAYUnconfounded, 16), REF_BOUND_VI_C12);
    assert_bound(&b(CaseId::C14, Structure::XAYControlsOnly, 17), REF_BOUND_V_C14);
}

#[test]
fn drifted_bounds_match_frozen_references() {
    let n = 1_000_000;
    let c1 = DgpSpec::drifted(CaseId::C1, 0.8, 0.8).unwrap();
    let c4 = DgpSpec::drifted(CaseId::C4, 0.8, 0.8).unwrap();
    let b = |spec: &DgpSpec, st, seed| {
        mc_bound(spec, st, Estimand::Tau, BoundVariant::Standard, n, seed).unwrap()
    };
    assert_bound(&b(&c1, Structure::XOnly, 18), REF_BOUND_I_DRIFT_08);
    assert_bound(&b(&c4, Structure::XAYControlsOnly, 19), REF_BOUND_V_DRIFT_08);
    assert_bound(&b(&c1, Structure::XAYUnconfounded, 20), REF_BOUND_VI_DRIFT_08);
}

#[test]
fn bound_evaluation_is_seed_invariant_up_to_mc_error() {
    let c1 = DgpSpec::standard(CaseId::C1);
    let a = mc_bound(&c1, Structure::XAYUnconfounded, Estimand::Tau, BoundVariant::Standard, 200_000, 101).unwrap();
    let b = mc_bound(&c1, Structure::XAYUnconfounded, Estimand::Tau, BoundVariant::Standard, 200_000, 202).unwrap();
    let threshold = 5.0 * (a.mc_se.powi(2) + b.mc_se.powi(2)).sqrt();
    assert!((a.value - b.value).abs() < threshold);
}

#[test]
fn ordering_report_certifies_theory_on_the_benchmark_family() {
    let c1 = DgpSpec::standard(CaseId::C1);
    let c4 = DgpSpec::standard(CaseId::C4);
    let report = compare_bounds(&c1, Some(&c4), 400_000, 21).unwrap();
    assert_eq!(report.bounds.len(), 5);
    assert_eq!(report.orderings.len(), 4);
    assert!(report.orderings.iter().all(|c| c.ok), "{:#?}", report.orderings);
    assert_eq!(report.identities.len(), 5);
    assert!(report.identities.iter().all(|c| c.ok), "{:#?}", report.identities);
    // The controls-only-vs-unconfounded comparison is a note, not an ordering.
    assert!(report.notes.iter().any(|n| n.contains("signed difference")));
    assert!(report
        .orderings
        .iter()
        .all(|c| !c.label.contains("bound(V) > bound(VI)")));
}

#[test]
fn att_bounds_are_finite_and_positive() {
    let c1 = DgpSpec::standard(CaseId::C1);
    let att = mc_bound(&c1, Structure::XA, Estimand::TauAtt, BoundVariant::Standard, 100_000, 30).unwrap();
    assert!(att.value.is_finite() && att.value > 0.0);
    let batt = mc_bound(&c1, Structure::XAYUnconfounded, Estimand::BetaAtt, BoundVariant::Standard, 100_000, 31).unwrap();
    assert!(batt.value.is_finite() && batt.value > 0.0);
}

#[test]
fn bound_variant_preconditions_are_enforced() {
    let c1 = DgpSpec::standard(CaseId::C1);
    let c4 = DgpSpec::standard(CaseId::C4);
    assert!(matches!(
        mc_bound(&c1, Structure::XOnly, Estimand::Tau, BoundVariant::TargetOnly, 10_000, 1),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        mc_bound(&c1, Structure::XOnly, Estimand::Beta, BoundVariant::KnownPi, 10_000, 1),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        mc_bound(&c4, Structure::XAYUnconfounded, Estimand::Tau, BoundVariant::TargetOnly, 10_000, 1),
        Err(Error::NotIdentifiable(_))
    ));
    assert!(matches!(
        closed_form_bound_i(&DgpSpec::drifted(CaseId::C1, 0.8, 0.8).unwrap(), 10_000, 1),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        compare_bounds(&c4, None, 10_000, 1),
        Err(Error::Config(_))
    ));
}

#[test]
fn replicate_study_recovers_truth_with_fitted_nuisances() {
    let c1 = DgpSpec::standard(CaseId::C1);
    let cfg = NuisanceConfig::parametric(99);
    let s = mc_study(&c1, Structure::XOnly, Estimand::Tau, 1000, 80, &cfg, 31).unwrap();
    assert_eq!(s.failed, 0);
    // Asymptotic SD is sqrt(bound / n) = sqrt(114.4 / 1000) = 0.338.
    assert!((s.sd - 0.338).abs() < 0.30 * 0.338, "sd = {}", s.sd);
    assert!(s.bias.abs() < 4.0 * s.sd / (80f64).sqrt(), "bias = {}", s.bias);
    assert!(s.cp95 > 0.85 && s.cp95 <= 1.0, "cp95 = {}", s.cp95);
    assert!(s.mean_variance > 0.0);
}

#[test]
fn replicate_study_is_bitwise_deterministic() {
    let c1 = DgpSpec::standard(CaseId::C1);
    let cfg = NuisanceConfig::parametric(7);
    let a = mc_study(&c1, Structure::XAYUnconfounded, Estimand::Tau, 400, 24, &cfg, 5).unwrap();
    let b = mc_study(&c1, Structure::XAYUnconfounded, Estimand::Tau, 400, 24, &cfg, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fitted_parametric_surfaces_track_the_oracle_surfaces() {
    use transfuse::{cross_fit, SettingSpec};
    let spec = DgpSpec::standard(CaseId::C1);
    let study = dgp_generate(&spec, 4000, 55).unwrap();
    let oracle = transfuse::lab::true_nuisance(&spec, &study.data).unwrap();
    let mut cfg = NuisanceConfig::parametric(91);
    cfg.force_cross_fit = true;
    let fitted = cross_fit(
        &study.data,
        &SettingSpec::identity(Structure::XAYUnconfounded),
        &cfg,
    )
    .unwrap();
    let mae = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    };
    assert!(mae(&fitted.pi_hat, &oracle.pi_hat) < 0.05);
    assert!(mae(&fitted.e1_hat, &oracle.e1_hat) < 0.05);
    // Outcome means live on the outcome scale (SD 2 noise), so a looser
    // absolute error applies.
    assert!(mae(&fitted.mu0_hat, &oracle.mu0_hat) < 0.25);
    assert!(mae(&fitted.mu1_hat, &oracle.mu1_hat) < 0.25);
}

#[test]
fn control_noise_dominates_the_covariates_only_bound() {
    // The source propensity favors treatment, so the control-arm variance is
    // upweighted: putting the large noise on arm 0 must cost more.
    let heavy_controls = closed_form_bound_i(&DgpSpec::standard(CaseId::C11), 300_000, 61).unwrap();
    let heavy_treated = closed_form_bound_i(&DgpSpec::standard(CaseId::C12), 300_000, 62).unwrap();
    let gap_se = (heavy_controls.mc_se.powi(2) + heavy_treated.mc_se.powi(2)).sqrt();
    assert!(
        heavy_controls.value - heavy_treated.value > 5.0 * gap_se,
        "{} vs {}",
        heavy_controls.value,
        heavy_treated.value
    );
}

#[test]
fn nonlinear_pair_shares_source_and_covariate_marginals() {
    let base = dgp_generate(&DgpSpec::standard(CaseId::C15), 30_000, 77).unwrap();
    let twin = dgp_generate(&DgpSpec::standard(CaseId::C18), 30_000, 77).unwrap();
    for (rb, rt) in base.data.records().iter().zip(twin.data.records()) {
        assert_eq!(rb.x, rt.x);
        assert_eq!(rb.g, rt.g);
        if rb.g == 1 {
            assert_eq!(rb, rt);
        } else {
            assert_eq!(rt.a, Some(0));
        }
    }
}
