//! Semiparametric fusion of a randomized source study with observational
//! target data.
//!
//! The library estimates average treatment effects for a *target* population
//! (`tau`, and `tau_att` on the treated) and for the *source* study (`beta`,
//! `beta_att`) by combining two samples drawn from a merged super-population:
//! a source study with complete `(x, a, y)` records and a target sample whose
//! treatment and/or outcome may be partially observed. Six observability
//! structures are supported — from covariates-only targets through fully
//! observed, unconfounded targets — each with its own efficient influence
//! function, and each optionally combined with a *posterior drift* map that
//! lets the target's arm-specific outcome means differ from the source's
//! through a known link.
//!
//! The estimators are one-step (debiased) estimators built from cross-fitted
//! nuisance functions (sampling score, propensities, arm means, and — under
//! drift — residual-variance ratios), with parametric and random-forest
//! nuisance backends. A Monte Carlo laboratory reproduces the efficiency
//! comparisons that motivate the six structures, evaluates semiparametric
//! efficiency bounds by simulation, and checks the theoretical bound
//! orderings; a sensitivity module sweeps drift parameters and calibrates
//! their plausible range from the data.
//!
//! Entry points:
//!
//! * [`data::load_csv`] / [`data::StudyDataset`] — ingestion and validation;
//! * [`nuisance::cross_fit`] — fitted [`nuisance::NuisanceSurface`]s;
//! * [`eif::estimate_tau`], [`estimands::estimate_beta`],
//!   [`estimands::estimate_tau_att`], [`estimands::estimate_beta_att`] — the
//!   four estimands; [`estimands::estimate_estimand`] bundles fit + estimate;
//! * [`eif::bootstrap_ci`] — percentile bootstrap intervals;
//! * [`lab`] — data-generating processes, replicate studies, bounds;
//! * [`sensitivity`] — drift sweeps and the empirical drift range.

pub mod data;
pub mod eif;
pub mod error;
pub mod estimands;
pub mod lab;
pub mod nuisance;
pub mod report;
pub mod rng;
pub mod sensitivity;

pub use data::{load_csv, save_csv, DriftSpec, SettingSpec, Structure, StudyDataset};
pub use eif::{bootstrap_ci, estimate_tau, EifContext, Estimand};
pub use error::{Error, Result};
pub use estimands::{
    eif_beta, eif_beta_att, eif_tau_att, estimate_beta, estimate_beta_att, estimate_estimand,
    estimate_estimand_with, estimate_tau_att, estimate_with_surface, ExtEifContext,
};
pub use lab::{compare_bounds, dgp_generate, mc_bound, mc_study, CaseId, DgpSpec};
pub use nuisance::{cross_fit, NuisanceConfig, NuisanceMethod, NuisanceSurface};
pub use report::EstimateReport;
pub use sensitivity::{epsilon_range, sensitivity_sweep, SweepResult};
