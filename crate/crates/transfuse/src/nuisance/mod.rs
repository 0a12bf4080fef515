//! Nuisance-function estimation: sampling score, propensities, outcome means,
//! and conditional-variance ratios, with optional k-fold cross-fitting.
//!
//! [`cross_fit`] produces a [`NuisanceSurface`] — per-record predictions of
//! every nuisance the influence functions may need:
//!
//! * `pi_hat(x) = P(g = 1 | x)` — study sampling score, fit on all records;
//! * `e1_hat(x) = P(a = 1 | x, g = 1)` — source propensity, fit on the source;
//! * `e0_hat(x) = P(a = 1 | x, g = 0)` — target propensity, fit on the target
//!   when the setting observes target treatment (identically 0 for a
//!   controls-only target);
//! * `mu0_hat`, `mu1_hat` — arm-wise outcome means, fit on source arms by
//!   default (optionally pooled with target arms where the setting observes
//!   target outcomes);
//! * `r0_hat`, `r1_hat` — arm-wise conditional-variance ratios
//!   `Var(y | x, arm, source) / Var(y | x, arm, target)`, fit from squared
//!   residuals when a drifted analysis needs them.
//!
//! Parametric fits (logistic/linear) use the full relevant subpopulation;
//! random-forest fits always cross-fit so each record is predicted by models
//! that never saw it. A config flag forces cross-fitting for parametric fits
//! too, which is useful for auditing the out-of-fold property.

pub mod forest;
pub mod linear;
pub mod logistic;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{validate_dataset, SampleRecord, SettingSpec, Structure, StudyDataset};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub use forest::{fit_forest, ForestHyperParams, ForestModelFit, ForestTask};
pub use linear::{fit_linear, LinearModelFit};
pub use logistic::{expit, fit_logistic, LogisticModelFit, LOGISTIC_MAX_ITER, LOGISTIC_TOL};

/// Which learner family fits the nuisances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuisanceMethod {
    /// Logistic scores and linear outcome means.
    Parametric,
    /// Bagged CART forests for everything.
    Forest,
}

impl NuisanceMethod {
    fn tag(self) -> &'static str {
        match self {
            NuisanceMethod::Parametric => "parametric",
            NuisanceMethod::Forest => "forest",
        }
    }
}

/// When to fit the conditional-variance ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioFit {
    /// Fit them exactly when the setting carries non-identity drift.
    Auto,
    /// Always fit (used by sensitivity sweeps that share one surface).
    Always,
    /// Never fit; ratios stay at 1.
    Never,
}

/// Full nuisance-estimation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    /// Learner family.
    pub method: NuisanceMethod,
    /// Number of cross-fitting folds (used when cross-fitting is active).
    pub folds: usize,
    /// Base seed; folds and forests derive their own streams from it.
    pub seed: u64,
    /// Probability clipping threshold: fitted scores land in `[delta, 1-delta]`.
    pub delta: f64,
    /// Pool target arms into the outcome-mean fits (settings whose target
    /// records observe outcomes only).
    pub pooled_mu: bool,
    /// Cross-fit even for parametric fits.
    pub force_cross_fit: bool,
    /// Forest hyperparameters (ignored by the parametric method).
    pub forest: ForestHyperParams,
    /// Variance-ratio fitting policy.
    pub ratio_fit: RatioFit,
    /// Lower clip for fitted variance ratios.
    pub ratio_floor: f64,
    /// Upper clip for fitted variance ratios.
    pub ratio_cap: f64,
}

impl NuisanceConfig {
    /// Parametric defaults: full-subpopulation fits, `delta = 0.01`.
    pub fn parametric(seed: u64) -> Self {
        Self {
            method: NuisanceMethod::Parametric,
            folds: 4,
            seed,
            delta: 0.01,
            pooled_mu: false,
            force_cross_fit: false,
            forest: ForestHyperParams::default(),
            ratio_fit: RatioFit::Auto,
            ratio_floor: 0.05,
            ratio_cap: 20.0,
        }
    }

    /// Forest defaults: 4-fold cross-fitting, 200 trees.
    pub fn forest(seed: u64) -> Self {
        Self { method: NuisanceMethod::Forest, ..Self::parametric(seed) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta must lie in (0, 0.5), got {}", self.delta)));
        }
        if !(self.ratio_floor > 0.0 && self.ratio_cap >= self.ratio_floor) {
            return Err(Error::Config(format!(
                "ratio clip bounds must satisfy 0 < floor <= cap, got [{}, {}]",
                self.ratio_floor, self.ratio_cap
            )));
        }
        Ok(())
    }

    fn cross_fitting(&self) -> bool {
        self.method == NuisanceMethod::Forest || self.force_cross_fit
    }
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self::parametric(0)
    }
}

/// Per-record nuisance predictions for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSurface {
    /// `"parametric"`, `"forest"`, `"oracle"`, or `"injected"`.
    pub method: String,
    /// Cross-fitting fold of each record (all 0 without cross-fitting).
    pub fold_id: Vec<u32>,
    /// Sampling score `P(g = 1 | x)`, clipped into `[delta, 1-delta]`.
    pub pi_hat: Vec<f64>,
    /// Target propensity in `[0, 1)`; identically 0 when the target observes
    /// no treated units.
    pub e0_hat: Vec<f64>,
    /// Source propensity, clipped into `[delta, 1-delta]`.
    pub e1_hat: Vec<f64>,
    /// Arm-0 outcome mean.
    pub mu0_hat: Vec<f64>,
    /// Arm-1 outcome mean.
    pub mu1_hat: Vec<f64>,
    /// Arm-0 variance ratio (source over target), before any drift-slope
    /// factor; 1 when not fitted.
    pub r0_hat: Vec<f64>,
    /// Arm-1 variance ratio, before any drift-slope factor; 1 when not fitted.
    pub r1_hat: Vec<f64>,
    /// Fraction of records whose fitted probabilities were clipped.
    pub clip_fraction: f64,
    /// `true` when a requested variance ratio could not be fit and 1 was
    /// substituted.
    pub ratio_substituted: bool,
}

impl NuisanceSurface {
    /// Number of records covered.
    pub fn n(&self) -> usize {
        self.pi_hat.len()
    }

    /// Verifies array lengths and value ranges against a dataset of size `n`.
    pub fn check(&self, n: usize) -> Result<()> {
        let lens = [
            self.fold_id.len(),
            self.pi_hat.len(),
            self.e0_hat.len(),
            self.e1_hat.len(),
            self.mu0_hat.len(),
            self.mu1_hat.len(),
            self.r0_hat.len(),
            self.r1_hat.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Schema(format!(
                "nuisance surface covers {:?} records, dataset has {n}",
                lens
            )));
        }
        for i in 0..n {
            if !(self.pi_hat[i] > 0.0 && self.pi_hat[i] < 1.0) {
                return Err(Error::Schema(format!("pi_hat[{i}] = {} outside (0,1)", self.pi_hat[i])));
            }
            if !(self.e1_hat[i] > 0.0 && self.e1_hat[i] < 1.0) {
                return Err(Error::Schema(format!("e1_hat[{i}] = {} outside (0,1)", self.e1_hat[i])));
            }
            if !(self.e0_hat[i] >= 0.0 && self.e0_hat[i] < 1.0) {
                return Err(Error::Schema(format!("e0_hat[{i}] = {} outside [0,1)", self.e0_hat[i])));
            }
            if !self.mu0_hat[i].is_finite() || !self.mu1_hat[i].is_finite() {
                return Err(Error::Schema(format!("non-finite outcome mean at record {i}")));
            }
            if !(self.r0_hat[i] > 0.0 && self.r0_hat[i].is_finite())
                || !(self.r1_hat[i] > 0.0 && self.r1_hat[i].is_finite())
            {
                return Err(Error::Schema(format!("variance ratio at record {i} must be positive")));
            }
        }
        Ok(())
    }

    /// Order-sensitive content hash, used to assert that surfaces are reused
    /// bit-identically (e.g. across sensitivity-sweep grid points).
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bits: u64| {
            h ^= bits;
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        for arr in [
            &self.pi_hat,
            &self.e0_hat,
            &self.e1_hat,
            &self.mu0_hat,
            &self.mu1_hat,
            &self.r0_hat,
            &self.r1_hat,
        ] {
            for v in arr.iter() {
                eat(v.to_bits());
            }
        }
        for f in &self.fold_id {
            eat(u64::from(*f));
        }
        h
    }
}

/// Round-robin fold assignment over a seeded shuffle: depends only on
/// `(n, folds, seed)`, never on record contents.
fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<u32> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::make_rng(derive_seed(seed, 0xF01D)));
    let mut fold_id = vec![0u32; n];
    for (pos, &rec) in order.iter().enumerate() {
        fold_id[rec] = (pos % folds) as u32;
    }
    fold_id
}

pub(crate) enum Regressor {
    Linear(LinearModelFit),
    Forest(ForestModelFit),
}

impl Regressor {
    pub(crate) fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Linear(m) => {
                m.coefficients[0]
                    + m.coefficients[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            }
            Regressor::Forest(m) => m.predict(x),
        }
    }
}

enum Classifier {
    Logistic(LogisticModelFit),
    Forest(ForestModelFit),
    Constant(f64),
}

impl Classifier {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Logistic(m) => {
                expit(
                    m.coefficients[0]
                        + m.coefficients[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>(),
                )
            }
            Classifier::Forest(m) => m.predict(x),
            Classifier::Constant(c) => *c,
        }
    }
}

fn with_intercept(x: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(x.len() + 1);
    row.push(1.0);
    row.extend_from_slice(x);
    row
}

pub(crate) fn fit_reg(xs: &[&[f64]], ys: &[f64], cfg: &NuisanceConfig, seed: u64) -> Result<Regressor> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("regression subpopulation is empty".into()));
    }
    match cfg.method {
        NuisanceMethod::Parametric => {
            let rows: Vec<Vec<f64>> = xs.iter().map(|x| with_intercept(x)).collect();
            Ok(Regressor::Linear(fit_linear(&rows, ys)?))
        }
        NuisanceMethod::Forest => {
            Ok(Regressor::Forest(fit_forest(xs, ys, ForestTask::Regression, &cfg.forest, seed)?))
        }
    }
}

fn fit_clf(xs: &[&[f64]], labels: &[u8], cfg: &NuisanceConfig, seed: u64) -> Result<Classifier> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("classification subpopulation is empty".into()));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "all {} labels are {}",
            labels.len(),
            u8::from(ones != 0)
        )));
    }
    match cfg.method {
        NuisanceMethod::Parametric => {
            let rows: Vec<Vec<f64>> = xs.iter().map(|x| with_intercept(x)).collect();
            Ok(Classifier::Logistic(fit_logistic(&rows, labels, LOGISTIC_TOL, LOGISTIC_MAX_ITER)?))
        }
        NuisanceMethod::Forest => {
            let targets: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
            Ok(Classifier::Forest(fit_forest(
                xs,
                &targets,
                ForestTask::Classification,
                &cfg.forest,
                seed,
            )?))
        }
    }
}

/// Converts subpopulation-fit failures into fold-starvation errors when they
/// occur inside cross-fitting (the full-data failure keeps its own identity).
fn starve(e: Error, cross: bool, fold: usize, what: &str) -> Error {
    match e {
        Error::InsufficientData(_) | Error::DegenerateLabels(_) if cross => {
            Error::FoldStarvation { fold, subpopulation: what.to_string() }
        }
        other => other,
    }
}

fn select<'d, F>(records: &'d [SampleRecord], idxs: &[usize], keep: F) -> (Vec<&'d [f64]>, Vec<usize>)
where
    F: Fn(&SampleRecord) -> bool,
{
    let mut xs = Vec::new();
    let mut which = Vec::new();
    for &i in idxs {
        if keep(&records[i]) {
            xs.push(records[i].x.as_slice());
            which.push(i);
        }
    }
    (xs, which)
}

/// Fits every nuisance the setting's influence functions need and returns the
/// per-record surface.
///
/// Parametric fits use the full relevant subpopulation unless
/// `cfg.force_cross_fit` is set; forest fits always cross-fit with
/// `cfg.folds` folds. Probabilities are clipped into `[delta, 1-delta]`
/// (except the structural zero of a controls-only target propensity).
pub fn cross_fit(
    d: &StudyDataset,
    setting: &SettingSpec,
    cfg: &NuisanceConfig,
) -> Result<NuisanceSurface> {
    validate_dataset(d, setting)?;
    cfg.validate()?;
    let n = d.n();
    let records = d.records();
    let cross = cfg.cross_fitting();
    if cross && cfg.folds < 2 {
        return Err(Error::Config(format!("cross-fitting needs folds >= 2, got {}", cfg.folds)));
    }
    if cross && cfg.folds > n {
        return Err(Error::Config(format!("{} folds exceed {} records", cfg.folds, n)));
    }
    let structure = setting.structure;
    if cfg.pooled_mu
        && !matches!(structure, Structure::XAYControlsOnly | Structure::XAYUnconfounded)
    {
        return Err(Error::Config(
            "pooled_mu requires a setting whose target records observe treatment and outcome"
                .into(),
        ));
    }

    let fold_id =
        if cross { fold_assignment(n, cfg.folds, cfg.seed) } else { vec![0u32; n] };
    let n_folds = if cross { cfg.folds } else { 1 };

    // The target propensity is a structural zero for controls-only targets and
    // is unused (kept at zero) when the target never observes treatment.
    let fit_e0 = matches!(structure, Structure::XA | Structure::XAY | Structure::XAYUnconfounded);

    let mut pi_hat = vec![0.0; n];
    let mut e0_hat = vec![0.0; n];
    let mut e0_fitted = vec![false; n];
    let mut e1_hat = vec![0.0; n];
    let mut mu0_hat = vec![0.0; n];
    let mut mu1_hat = vec![0.0; n];

    let all: Vec<usize> = (0..n).collect();
    for fold in 0..n_folds {
        let train: Vec<usize> = if cross {
            (0..n).filter(|&i| fold_id[i] != fold as u32).collect()
        } else {
            all.clone()
        };
        let predict: Vec<usize> = if cross {
            (0..n).filter(|&i| fold_id[i] == fold as u32).collect()
        } else {
            all.clone()
        };

        let (pi_xs, pi_which) = select(records, &train, |_| true);
        let pi_labels: Vec<u8> = pi_which.iter().map(|&i| records[i].g).collect();
        let pi_model = fit_clf(&pi_xs, &pi_labels, cfg, derive_seed(cfg.seed, 1000 + fold as u64))
            .map_err(|e| starve(e, cross, fold, "records of both studies"))?;

        let (e1_xs, e1_which) = select(records, &train, |r| r.g == 1);
        let e1_labels: Vec<u8> = e1_which.iter().map(|&i| records[i].a.unwrap()).collect();
        let e1_model = fit_clf(&e1_xs, &e1_labels, cfg, derive_seed(cfg.seed, 2000 + fold as u64))
            .map_err(|e| starve(e, cross, fold, "source records of both arms"))?;

        let e0_model = if fit_e0 {
            let (e0_xs, e0_which) = select(records, &train, |r| r.g == 0 && r.a.is_some());
            let e0_labels: Vec<u8> = e0_which.iter().map(|&i| records[i].a.unwrap()).collect();
            if e0_xs.is_empty() {
                return Err(starve(
                    Error::InsufficientData("no target records with observed treatment".into()),
                    cross,
                    fold,
                    "target records with observed treatment",
                ));
            }
            let ones = e0_labels.iter().filter(|&&l| l == 1).count();
            if ones == 0 {
                // Empirically controls-only: keep the structural zero.
                Some(Classifier::Constant(0.0))
            } else if ones == e0_labels.len() {
                Some(Classifier::Constant(1.0))
            } else {
                Some(
                    fit_clf(&e0_xs, &e0_labels, cfg, derive_seed(cfg.seed, 3000 + fold as u64))
                        .map_err(|e| starve(e, cross, fold, "target records of both arms"))?,
                )
            }
        } else {
            None
        };

        let pool = |arm: u8| {
            move |r: &SampleRecord| {
                let in_source_arm = r.g == 1 && r.a == Some(arm);
                let in_target_arm =
                    cfg.pooled_mu && r.g == 0 && r.a == Some(arm) && r.y.is_some();
                in_source_arm || in_target_arm
            }
        };
        let mut mu_models: Vec<Regressor> = Vec::with_capacity(2);
        for arm in [0u8, 1u8] {
            let (mu_xs, mu_which) = select(records, &train, pool(arm));
            let mu_ys: Vec<f64> = mu_which.iter().map(|&i| records[i].y.unwrap()).collect();
            let model = fit_reg(&mu_xs, &mu_ys, cfg, derive_seed(cfg.seed, 4000 + 1000 * arm as u64 + fold as u64))
                .map_err(|e| {
                    starve(e, cross, fold, &format!("outcome records for arm {arm}"))
                })?;
            mu_models.push(model);
        }

        for &i in &predict {
            let x = records[i].x.as_slice();
            pi_hat[i] = pi_model.predict(x);
            e1_hat[i] = e1_model.predict(x);
            if let Some(m) = &e0_model {
                e0_hat[i] = m.predict(x);
                e0_fitted[i] = !matches!(m, Classifier::Constant(c) if *c == 0.0);
            }
            mu0_hat[i] = mu_models[0].predict(x);
            mu1_hat[i] = mu_models[1].predict(x);
        }
    }

    // Clip probabilities into [delta, 1-delta]; structural zeros stay exact.
    let (lo, hi) = (cfg.delta, 1.0 - cfg.delta);
    let mut clipped = 0usize;
    for i in 0..n {
        let mut moved = false;
        let pi = pi_hat[i].clamp(lo, hi);
        moved |= pi != pi_hat[i];
        pi_hat[i] = pi;
        let e1 = e1_hat[i].clamp(lo, hi);
        moved |= e1 != e1_hat[i];
        e1_hat[i] = e1;
        if e0_fitted[i] {
            let e0 = e0_hat[i].clamp(lo, hi);
            moved |= e0 != e0_hat[i];
            e0_hat[i] = e0;
        }
        if moved {
            clipped += 1;
        }
    }

    let mut surface = NuisanceSurface {
        method: cfg.method.tag().to_string(),
        fold_id,
        pi_hat,
        e0_hat,
        e1_hat,
        mu0_hat,
        mu1_hat,
        r0_hat: vec![1.0; n],
        r1_hat: vec![1.0; n],
        clip_fraction: clipped as f64 / n as f64,
        ratio_substituted: false,
    };

    let want_ratio = match cfg.ratio_fit {
        RatioFit::Always => true,
        RatioFit::Never => false,
        RatioFit::Auto => setting.is_starred(),
    };
    if want_ratio {
        for arm in [0u8, 1u8] {
            let mu = if arm == 0 { &surface.mu0_hat } else { &surface.mu1_hat };
            match fit_variance_ratio(d, mu, arm, cfg) {
                Ok(r) => {
                    if arm == 0 {
                        surface.r0_hat = r;
                    } else {
                        surface.r1_hat = r;
                    }
                }
                Err(Error::RatioUnavailable(_)) => surface.ratio_substituted = true,
                Err(other) => return Err(other),
            }
        }
    }
    Ok(surface)
}

/// Fits the arm-`arm` conditional-variance ratio
/// `Var(y | x, a = arm, g = 1) / Var(y | x, a = arm, g = 0)` by regressing
/// squared residuals `(y - mu_hat)^2` on `x` within each study, then taking
/// the clipped ratio of the two predictions at every record.
///
/// `mu_hat` must be the per-record fitted mean for this arm (as produced by
/// [`cross_fit`]); fold assignment replays the same `(n, folds, seed)` stream
/// so the residual fits are out-of-fold exactly when the mean fits were.
pub fn fit_variance_ratio(
    d: &StudyDataset,
    mu_hat: &[f64],
    arm: u8,
    cfg: &NuisanceConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = d.n();
    if mu_hat.len() != n {
        return Err(Error::Config(format!(
            "mu_hat covers {} records, dataset has {n}",
            mu_hat.len()
        )));
    }
    let records = d.records();
    let usable = |r: &SampleRecord| r.a == Some(arm) && r.y.is_some();
    let n_source = records.iter().filter(|r| r.g == 1 && usable(r)).count();
    let n_target = records.iter().filter(|r| r.g == 0 && usable(r)).count();
    if n_source == 0 || n_target == 0 {
        return Err(Error::RatioUnavailable(format!(
            "arm {arm} has {n_source} usable source and {n_target} usable target records"
        )));
    }

    let cross = cfg.cross_fitting();
    let fold_id = if cross { fold_assignment(n, cfg.folds, cfg.seed) } else { vec![0u32; n] };
    let n_folds = if cross { cfg.folds } else { 1 };
    let mut ratio = vec![1.0; n];
    let all: Vec<usize> = (0..n).collect();

    for fold in 0..n_folds {
        let train: Vec<usize> = if cross {
            (0..n).filter(|&i| fold_id[i] != fold as u32).collect()
        } else {
            all.clone()
        };
        let predict: Vec<usize> = if cross {
            (0..n).filter(|&i| fold_id[i] == fold as u32).collect()
        } else {
            all.clone()
        };
        let mut models = Vec::with_capacity(2);
        for g in [1u8, 0u8] {
            let (xs, which) = select(records, &train, |r| r.g == g && usable(r));
            let zs: Vec<f64> = which
                .iter()
                .map(|&i| (records[i].y.unwrap() - mu_hat[i]).powi(2))
                .collect();
            let seed = derive_seed(cfg.seed, 6000 + 1000 * arm as u64 + 2 * fold as u64 + g as u64);
            let model = fit_reg(&xs, &zs, cfg, seed).map_err(|e| {
                starve(e, cross, fold, &format!("arm-{arm} outcome records in study g={g}"))
            })?;
            models.push(model);
        }
        for &i in &predict {
            let x = records[i].x.as_slice();
            let v1 = models[0].predict(x).max(1e-12);
            let v0 = models[1].predict(x).max(1e-12);
            ratio[i] = (v1 / v0).clamp(cfg.ratio_floor, cfg.ratio_cap);
        }
    }
    Ok(ratio)
}

/// Writes a surface as CSV (`fold_id, pi_hat, e0_hat, e1_hat, mu0_hat,
/// mu1_hat, r0_hat, r1_hat`), one row per record, shortest round-trip floats.
pub fn save_surface_csv(s: &NuisanceSurface, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path.as_ref())
        .map_err(|e| Error::Schema(e.to_string()))?;
    w.write_record([
        "fold_id", "pi_hat", "e0_hat", "e1_hat", "mu0_hat", "mu1_hat", "r0_hat", "r1_hat",
    ])
    .map_err(|e| Error::Schema(e.to_string()))?;
    for i in 0..s.n() {
        w.write_record([
            s.fold_id[i].to_string(),
            s.pi_hat[i].to_string(),
            s.e0_hat[i].to_string(),
            s.e1_hat[i].to_string(),
            s.mu0_hat[i].to_string(),
            s.mu1_hat[i].to_string(),
            s.r0_hat[i].to_string(),
            s.r1_hat[i].to_string(),
        ])
        .map_err(|e| Error::Schema(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a surface dumped by [`save_surface_csv`]; the result is tagged
/// `"injected"` and range-checked.
pub fn load_surface_csv(path: impl AsRef<Path>) -> Result<NuisanceSurface> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Schema(e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let expected = ["fold_id", "pi_hat", "e0_hat", "e1_hat", "mu0_hat", "mu1_hat", "r0_hat", "r1_hat"];
    let idx: Vec<usize> = expected
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| {
                Error::Schema(format!("nuisance CSV is missing column {name:?}"))
            })
        })
        .collect::<Result<_>>()?;
    let mut s = NuisanceSurface {
        method: "injected".into(),
        fold_id: Vec::new(),
        pi_hat: Vec::new(),
        e0_hat: Vec::new(),
        e1_hat: Vec::new(),
        mu0_hat: Vec::new(),
        mu1_hat: Vec::new(),
        r0_hat: Vec::new(),
        r1_hat: Vec::new(),
        clip_fraction: 0.0,
        ratio_substituted: false,
    };
    for row in reader.records() {
        let row = row.map_err(|e| Error::Schema(e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let get = |j: usize| -> Result<f64> {
            let cell = row.get(idx[j]).unwrap_or("").trim();
            cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse {} value {cell:?}", expected[j]),
            })
        };
        s.fold_id.push(get(0)? as u32);
        s.pi_hat.push(get(1)?);
        s.e0_hat.push(get(2)?);
        s.e1_hat.push(get(3)?);
        s.mu0_hat.push(get(4)?);
        s.mu1_hat.push(get(5)?);
        s.r0_hat.push(get(6)?);
        s.r1_hat.push(get(7)?);
    }
    s.check(s.n())?;
    Ok(s)
}
