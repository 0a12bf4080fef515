//! Command-line front end: treatment-effect estimation from fused CSV
//! datasets, replicate simulation studies on the built-in benchmark
//! processes, drift sensitivity sweeps, and efficiency-bound certification.
//!
//! Every run embeds its fully resolved configuration, base seed, and library
//! version in the output (JSON `meta` block or `#` comment header), with the
//! timestamp isolated on its own line so byte comparisons can mask it.
//! Replicates and grid points are aggregated order-independently, so the
//! worker count (`--workers` or the `TRANSFUSE_WORKERS` environment
//! variable) never changes output values.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use transfuse::eif::{bootstrap_ci, Estimand};
use transfuse::lab::{
    compare_bounds, joint_frequencies, mc_study, CaseId, DgpSpec, OrderingReport,
};
use transfuse::nuisance::{load_surface_csv, save_surface_csv, NuisanceConfig};
use transfuse::report::{write_json_report, write_table, write_table_with_notes, ReportMeta};
use transfuse::sensitivity::sensitivity_sweep;
use transfuse::{cross_fit, estimate_with_surface, load_csv, Error, Result, SettingSpec, Structure};

#[derive(Parser)]
#[command(
    name = "transfuse",
    version,
    about = "Treatment-effect estimation that fuses a source study with target data",
    propagate_version = true
)]
struct Cli {
    /// Worker threads (default: TRANSFUSE_WORKERS env var, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate treatment effects from a fused CSV dataset.
    Estimate(EstimateArgs),
    /// Run replicate studies on built-in benchmark processes.
    Simulate(SimulateArgs),
    /// Sweep estimates over a drift-factor grid with fixed nuisances.
    Sweep(SweepArgs),
    /// Evaluate efficiency bounds and certify their orderings.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Logistic scores and linear outcome means.
    Parametric,
    /// Bagged CART forests.
    Forest,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Parametric => "parametric",
            MethodArg::Forest => "forest",
        }
    }
}

/// Nuisance-fitting options shared by the data-driven commands.
#[derive(Args)]
struct FitArgs {
    /// Nuisance method.
    #[arg(long, value_enum, default_value_t = MethodArg::Parametric)]
    method: MethodArg,
    /// Cross-fitting folds.
    #[arg(long, default_value_t = 4)]
    folds: usize,
    /// Probability clipping threshold.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Base seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pool target outcomes into the arm-mean fits (fully observed targets).
    #[arg(long)]
    pooled_mu: bool,
    /// Cross-fit parametric nuisances too (forests always cross-fit).
    #[arg(long)]
    force_cross_fit: bool,
}

impl FitArgs {
    fn config(&self) -> NuisanceConfig {
        let mut cfg = match self.method {
            MethodArg::Parametric => NuisanceConfig::parametric(self.seed),
            MethodArg::Forest => NuisanceConfig::forest(self.seed),
        };
        cfg.folds = self.folds;
        cfg.delta = self.delta;
        cfg.pooled_mu = self.pooled_mu;
        cfg.force_cross_fit = self.force_cross_fit;
        cfg
    }

    fn echo(&self) -> serde_json::Value {
        json!({
            "method": self.method.name(),
            "folds": self.folds,
            "delta": self.delta,
            "seed": self.seed,
            "pooled_mu": self.pooled_mu,
            "force_cross_fit": self.force_cross_fit,
        })
    }
}

fn parse_structure(s: &str) -> std::result::Result<Structure, String> {
    let norm = s.trim();
    let by_label = match norm.to_ascii_uppercase().as_str() {
        "I" => Some(Structure::XOnly),
        "II" => Some(Structure::XA),
        "III" => Some(Structure::XY),
        "IV" => Some(Structure::XAY),
        "V" => Some(Structure::XAYControlsOnly),
        "VI" => Some(Structure::XAYUnconfounded),
        _ => None,
    };
    if let Some(st) = by_label {
        return Ok(st);
    }
    match norm.to_ascii_lowercase().as_str() {
        "x-only" => Ok(Structure::XOnly),
        "x-a" => Ok(Structure::XA),
        "x-y" => Ok(Structure::XY),
        "x-a-y" => Ok(Structure::XAY),
        "x-a-y-controls-only" => Ok(Structure::XAYControlsOnly),
        "x-a-y-unconfounded" => Ok(Structure::XAYUnconfounded),
        _ => Err(format!(
            "unknown structure {s:?} (expected I..VI or x-only, x-a, x-y, x-a-y, \
             x-a-y-controls-only, x-a-y-unconfounded)"
        )),
    }
}

fn parse_estimand(s: &str) -> std::result::Result<Estimand, String> {
    Estimand::parse(s).map_err(|e| e.to_string())
}

fn parse_case(s: &str) -> std::result::Result<CaseId, String> {
    s.parse::<CaseId>().map_err(|e| e.to_string())
}

/// Builds the evaluation setting from a structure and optional drift flags;
/// both factors must be given together.
fn drift_setting(
    structure: Structure,
    eps0: Option<f64>,
    eps1: Option<f64>,
) -> Result<SettingSpec> {
    match (eps0, eps1) {
        (None, None) => Ok(SettingSpec::identity(structure)),
        (Some(e0), Some(e1)) => {
            if !(e0.is_finite() && e1.is_finite()) || e0 == 0.0 || e1 == 0.0 {
                return Err(Error::Config(
                    "drift factors must be finite and nonzero".into(),
                ));
            }
            Ok(SettingSpec::linear(structure, e0, e1))
        }
        _ => Err(Error::Config(
            "--eps0 and --eps1 must be given together".into(),
        )),
    }
}

fn fmt(v: f64) -> String {
    // Shortest round-trip representation: byte-stable and lossless.
    format!("{v}")
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV (columns x1..xp, a, y, g; blank a/y = unobserved).
    #[arg(long)]
    input: PathBuf,
    /// Observability setting (I..VI or the long kebab-case name).
    #[arg(long = "setting", alias = "structure", value_parser = parse_structure)]
    structure: Structure,
    /// Estimand to report (tau, beta, tau-att, beta-att); repeatable.
    #[arg(long = "estimand", value_parser = parse_estimand)]
    estimands: Vec<Estimand>,
    /// Arm-0 drift factor (with --eps1).
    #[arg(long)]
    eps0: Option<f64>,
    /// Arm-1 drift factor (with --eps0).
    #[arg(long)]
    eps1: Option<f64>,
    /// Treat the sampling score as known (target effect only).
    #[arg(long)]
    known_pi: bool,
    /// Percentile-bootstrap replicates for a second interval.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Write the fitted nuisance surface to this CSV for audit.
    #[arg(long)]
    dump_nuisance: Option<PathBuf>,
    /// Inject a previously dumped surface instead of fitting.
    #[arg(long, conflicts_with = "dump_nuisance")]
    nuisance_file: Option<PathBuf>,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Optional CSV table (one row per estimand).
    #[arg(long)]
    table: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

fn run_estimate(args: &EstimateArgs) -> Result<()> {
    let setting = drift_setting(args.structure, args.eps0, args.eps1)?;
    let estimands = if args.estimands.is_empty() {
        vec![Estimand::Tau]
    } else {
        args.estimands.clone()
    };
    if args.bootstrap.is_some() && args.nuisance_file.is_some() {
        return Err(Error::Config(
            "the bootstrap refits nuisances per resample; it cannot use --nuisance-file".into(),
        ));
    }
    let d = load_csv(&args.input, None)?;
    let cfg = args.fit.config();
    let surface = match &args.nuisance_file {
        Some(path) => {
            let s = load_surface_csv(path)?;
            s.check(d.n())?;
            s
        }
        None => cross_fit(&d, &setting, &cfg)?,
    };
    if let Some(path) = &args.dump_nuisance {
        save_surface_csv(&surface, path)?;
    }

    let mut results = Vec::with_capacity(estimands.len());
    for &estimand in &estimands {
        let report = estimate_with_surface(&d, &setting, &surface, estimand, args.known_pi)?;
        let boot = match args.bootstrap {
            Some(b) => Some(bootstrap_ci(
                &d,
                &setting,
                &cfg,
                estimand,
                args.known_pi,
                b,
                args.fit.seed,
            )?),
            None => None,
        };
        results.push(json!({ "estimate": report, "bootstrap": boot }));
    }

    let config = json!({
        "command": "estimate",
        "input": args.input,
        "setting": setting.label(),
        "estimands": estimands.iter().map(|e| e.name()).collect::<Vec<_>>(),
        "eps0": args.eps0,
        "eps1": args.eps1,
        "known_pi": args.known_pi,
        "bootstrap": args.bootstrap,
        "nuisance_file": args.nuisance_file,
        "fit": args.fit.echo(),
    });
    let meta = ReportMeta::new(args.fit.seed, config);

    if let Some(path) = &args.table {
        let columns = ["estimand", "setting", "point", "variance", "ci_low", "ci_high", "n"];
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|r| {
                let rep = &r["estimate"];
                vec![
                    rep["estimand"].as_str().unwrap_or_default().to_string(),
                    rep["setting"]["label"].as_str().unwrap_or_default().to_string(),
                    fmt(rep["point"].as_f64().unwrap_or(f64::NAN)),
                    fmt(rep["variance"].as_f64().unwrap_or(f64::NAN)),
                    fmt(rep["ci_low"].as_f64().unwrap_or(f64::NAN)),
                    fmt(rep["ci_high"].as_f64().unwrap_or(f64::NAN)),
                    rep["n"].to_string(),
                ]
            })
            .collect();
        write_table(path, &meta, &columns, &rows)?;
    }

    emit_json(args.output.as_deref(), &meta, &results)
}

fn emit_json<T: serde::Serialize>(
    path: Option<&Path>,
    meta: &ReportMeta,
    result: &T,
) -> Result<()> {
    match path {
        Some(p) => write_json_report(p, meta, result),
        None => {
            let envelope = json!({ "meta": meta, "result": result });
            println!("{}", serde_json::to_string_pretty(&envelope)?);
            Ok(())
        }
    }
}

/// One study-config entry (the JSON schema mirrors the flag set).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyConfig {
    case: String,
    setting: String,
    n: usize,
    reps: usize,
    #[serde(default = "default_method")]
    method: String,
    seed: u64,
    #[serde(default)]
    estimand: Option<String>,
    #[serde(default)]
    eps0: Option<f64>,
    #[serde(default)]
    eps1: Option<f64>,
    #[serde(default)]
    folds: Option<usize>,
    #[serde(default)]
    delta: Option<f64>,
}

fn default_method() -> String {
    "parametric".into()
}

/// A fully resolved replicate-study job.
struct StudyJob {
    spec: DgpSpec,
    structure: Structure,
    estimand: Estimand,
    n: usize,
    reps: usize,
    cfg: NuisanceConfig,
    seed: u64,
}

impl StudyJob {
    fn from_config(sc: &StudyConfig) -> Result<Self> {
        let case: CaseId = sc.case.parse()?;
        let structure = parse_structure(sc.setting.trim_end_matches('*')).map_err(Error::Config)?;
        let spec = match (sc.eps0, sc.eps1) {
            (None, None) => DgpSpec::standard(case),
            (Some(e0), Some(e1)) => DgpSpec::drifted(case, e0, e1)?,
            _ => {
                return Err(Error::Config(
                    "study config needs eps0 and eps1 together".into(),
                ))
            }
        };
        let estimand = match &sc.estimand {
            Some(e) => Estimand::parse(e)?,
            None => Estimand::Tau,
        };
        let mut cfg = match sc.method.as_str() {
            "parametric" => NuisanceConfig::parametric(sc.seed),
            "forest" => NuisanceConfig::forest(sc.seed),
            other => {
                return Err(Error::Config(format!(
                    "unknown method {other:?} (expected parametric or forest)"
                )))
            }
        };
        if let Some(folds) = sc.folds {
            cfg.folds = folds;
        }
        if let Some(delta) = sc.delta {
            cfg.delta = delta;
        }
        Ok(StudyJob { spec, structure, estimand, n: sc.n, reps: sc.reps, cfg, seed: sc.seed })
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark case (C1..C20).
    #[arg(long, value_parser = parse_case, required_unless_present = "config")]
    case: Option<CaseId>,
    /// Observability setting to estimate under; repeatable (one row each).
    #[arg(long = "setting", alias = "structure", value_parser = parse_structure)]
    structures: Vec<Structure>,
    /// Estimand; repeatable.
    #[arg(long = "estimand", value_parser = parse_estimand)]
    estimands: Vec<Estimand>,
    /// Per-replicate sample size.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Number of replicates.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Arm-0 drift factor imposed on the process (with --eps1).
    #[arg(long)]
    eps0: Option<f64>,
    /// Arm-1 drift factor imposed on the process (with --eps0).
    #[arg(long)]
    eps1: Option<f64>,
    /// Study-config JSON: one object or a list of
    /// {case, setting, n, reps, method, seed, [estimand, eps0, eps1, folds, delta]}.
    #[arg(long, conflicts_with_all = ["case", "structures", "estimands", "n", "reps", "eps0", "eps1"])]
    config: Option<PathBuf>,
    /// Output CSV table.
    #[arg(long)]
    output: PathBuf,
    /// Also write the joint treatment-by-group frequency table of the
    /// process(es) to this CSV.
    #[arg(long)]
    freq_out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let jobs: Vec<StudyJob> = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let parsed: serde_json::Value = serde_json::from_str(&text)?;
            let entries: Vec<StudyConfig> = if parsed.is_array() {
                serde_json::from_value(parsed)?
            } else {
                vec![serde_json::from_value(parsed)?]
            };
            entries.iter().map(StudyJob::from_config).collect::<Result<_>>()?
        }
        None => {
            let case = args.case.expect("clap enforces --case without --config");
            let spec = match (args.eps0, args.eps1) {
                (None, None) => DgpSpec::standard(case),
                (Some(e0), Some(e1)) => DgpSpec::drifted(case, e0, e1)?,
                _ => {
                    return Err(Error::Config(
                        "--eps0 and --eps1 must be given together".into(),
                    ))
                }
            };
            let structures = if args.structures.is_empty() {
                vec![Structure::XOnly]
            } else {
                args.structures.clone()
            };
            let estimands = if args.estimands.is_empty() {
                vec![Estimand::Tau]
            } else {
                args.estimands.clone()
            };
            let mut jobs = Vec::new();
            for &structure in &structures {
                for &estimand in &estimands {
                    jobs.push(StudyJob {
                        spec: spec.clone(),
                        structure,
                        estimand,
                        n: args.n,
                        reps: args.reps,
                        cfg: args.fit.config(),
                        seed: args.fit.seed,
                    });
                }
            }
            jobs
        }
    };

    let columns = ["case", "estimator", "n", "Bias", "SD", "CP95"];
    let mut rows = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let summary =
            mc_study(&job.spec, job.structure, job.estimand, job.n, job.reps, &job.cfg, job.seed)?;
        if summary.failed > 0 {
            eprintln!(
                "warning: {} of {} replicates failed for {} {} and were excluded",
                summary.failed, job.reps, summary.case, summary.setting
            );
        }
        rows.push(vec![
            summary.case.clone(),
            format!("{}_{}", summary.estimand.name(), summary.setting),
            summary.n.to_string(),
            fmt(summary.bias),
            fmt(summary.sd),
            fmt(summary.cp95),
        ]);
    }

    let config = json!({
        "command": "simulate",
        "config_file": args.config,
        "case": args.case.map(|c| c.name()),
        "settings": args.structures.iter().map(|s| s.label()).collect::<Vec<_>>(),
        "estimands": args.estimands.iter().map(|e| e.name()).collect::<Vec<_>>(),
        "n": args.n,
        "reps": args.reps,
        "eps0": args.eps0,
        "eps1": args.eps1,
        "fit": args.fit.echo(),
    });
    let meta = ReportMeta::new(args.fit.seed, config);
    write_table(&args.output, &meta, &columns, &rows)?;

    if let Some(path) = &args.freq_out {
        let mut freq_rows = Vec::new();
        let mut seen = Vec::new();
        for job in &jobs {
            let label = job.spec.label();
            if seen.contains(&label) {
                continue;
            }
            let table = joint_frequencies(&job.spec, 100_000, job.seed)?;
            for g in [1u8, 0u8] {
                for a in [0u8, 1u8] {
                    freq_rows.push(vec![
                        label.clone(),
                        g.to_string(),
                        a.to_string(),
                        fmt(table[g as usize][a as usize]),
                    ]);
                }
            }
            seen.push(label);
        }
        write_table(path, &meta, &["case", "g", "a", "frequency"], &freq_rows)?;
    }
    Ok(())
}

#[derive(Args)]
struct SweepArgs {
    /// Input CSV (columns x1..xp, a, y, g).
    #[arg(long)]
    input: PathBuf,
    /// Observability setting to sweep; repeatable (default VI).
    #[arg(long = "setting", alias = "structure", value_parser = parse_structure)]
    structures: Vec<Structure>,
    /// Smallest drift factor on the grid.
    #[arg(long, default_value_t = 0.5)]
    eps_min: f64,
    /// Largest drift factor on the grid.
    #[arg(long, default_value_t = 1.5)]
    eps_max: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.05)]
    eps_step: f64,
    /// Sweep the two factors independently (full grid) instead of tied.
    #[arg(long)]
    untied: bool,
    /// Output CSV table.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    if !(args.eps_step > 0.0) || args.eps_max < args.eps_min {
        return Err(Error::Config(
            "the grid needs eps_min <= eps_max and eps_step > 0".into(),
        ));
    }
    let mut axis = Vec::new();
    let mut k = 0usize;
    loop {
        // Snap to a nano-grid so accumulated rounding never shifts a label
        // (and the factor pair (1, 1) lands exactly on 1.0).
        let v = ((args.eps_min + args.eps_step * k as f64) * 1e9).round() / 1e9;
        if v > args.eps_max + 1e-12 {
            break;
        }
        axis.push(v);
        k += 1;
    }
    let grid: Vec<(f64, f64)> = if args.untied {
        axis.iter().flat_map(|&a| axis.iter().map(move |&b| (a, b))).collect()
    } else {
        axis.iter().map(|&v| (v, v)).collect()
    };
    let structures = if args.structures.is_empty() {
        vec![Structure::XAYUnconfounded]
    } else {
        args.structures.clone()
    };

    let d = load_csv(&args.input, None)?;
    let cfg = args.fit.config();
    let sweep = sensitivity_sweep(&d, &structures, &grid, &cfg)?;

    let columns = ["eps0", "eps1", "setting", "point", "ci_low", "ci_high"];
    let rows: Vec<Vec<String>> = sweep
        .reports
        .iter()
        .enumerate()
        .map(|(k, rep)| {
            let (e0, e1) = sweep.grid_point_of(k);
            vec![
                fmt(e0),
                fmt(e1),
                rep.setting.label.clone(),
                fmt(rep.point),
                fmt(rep.ci_low),
                fmt(rep.ci_high),
            ]
        })
        .collect();

    let config = json!({
        "command": "sweep",
        "input": args.input,
        "settings": structures.iter().map(|s| s.label()).collect::<Vec<_>>(),
        "eps_min": args.eps_min,
        "eps_max": args.eps_max,
        "eps_step": args.eps_step,
        "untied": args.untied,
        "fit": args.fit.echo(),
    });
    let meta = ReportMeta::new(args.fit.seed, config);
    let notes = vec![match sweep.eps_range {
        Some((lo, hi)) => format!("eps-range: {} {}", fmt(lo), fmt(hi)),
        None => "eps-range: unavailable".into(),
    }];
    write_table_with_notes(&args.output, &meta, &notes, &columns, &rows)
}

#[derive(Args)]
struct BoundsArgs {
    /// Base case of the family (one with treated target units).
    #[arg(long, value_parser = parse_case)]
    case: CaseId,
    /// Controls-only member (default: the base case's twin).
    #[arg(long, value_parser = parse_case, conflicts_with = "no_controls")]
    controls: Option<CaseId>,
    /// Evaluate the base case only.
    #[arg(long)]
    no_controls: bool,
    /// Monte Carlo draws per bound.
    #[arg(long, default_value_t = 1_000_000)]
    n_mc: usize,
    /// Arm-0 drift factor imposed on the family (with --eps1).
    #[arg(long)]
    eps0: Option<f64>,
    /// Arm-1 drift factor imposed on the family (with --eps0).
    #[arg(long)]
    eps1: Option<f64>,
    /// Exit with code 5 if any certified ordering fails.
    #[arg(long)]
    strict: bool,
    /// Base seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV table.
    #[arg(long)]
    output: PathBuf,
    /// Full ordering report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn bound_report_notes(report: &OrderingReport) -> Vec<String> {
    let mut notes = Vec::new();
    for c in &report.orderings {
        notes.push(format!(
            "ordering: {} | {} vs {} (threshold {}) {}",
            c.label,
            fmt(c.lhs),
            fmt(c.rhs),
            fmt(c.threshold),
            if c.ok { "OK" } else { "VIOLATED" }
        ));
    }
    for c in &report.identities {
        notes.push(format!(
            "identity: {} | {} vs {} (threshold {}) {}",
            c.label,
            fmt(c.lhs),
            fmt(c.rhs),
            fmt(c.threshold),
            if c.ok { "OK" } else { "MISMATCH" }
        ));
    }
    for n in &report.notes {
        notes.push(format!("note: {n}"));
    }
    notes
}

fn run_bounds(args: &BoundsArgs) -> Result<()> {
    let base = match (args.eps0, args.eps1) {
        (None, None) => DgpSpec::standard(args.case),
        (Some(e0), Some(e1)) => DgpSpec::drifted(args.case, e0, e1)?,
        _ => return Err(Error::Config("--eps0 and --eps1 must be given together".into())),
    };
    let controls_case = if args.no_controls {
        None
    } else {
        match args.controls {
            Some(c) => Some(c),
            None => args.case.controls_only_twin(),
        }
    };
    let controls = match controls_case {
        Some(case) => Some(match (args.eps0, args.eps1) {
            (Some(e0), Some(e1)) => DgpSpec::drifted(case, e0, e1)?,
            _ => DgpSpec::standard(case),
        }),
        None => None,
    };

    let report = compare_bounds(&base, controls.as_ref(), args.n_mc, args.seed)?;

    let config = json!({
        "command": "bounds",
        "case": args.case.name(),
        "controls": controls_case.map(|c| c.name()),
        "n_mc": args.n_mc,
        "eps0": args.eps0,
        "eps1": args.eps1,
        "strict": args.strict,
    });
    let meta = ReportMeta::new(args.seed, config);

    let columns = ["setting", "case", "bound", "mc_se"];
    let rows: Vec<Vec<String>> = report
        .bounds
        .iter()
        .map(|b| vec![b.setting.clone(), b.case.clone(), fmt(b.value), fmt(b.mc_se)])
        .collect();
    write_table_with_notes(&args.output, &meta, &bound_report_notes(&report), &columns, &rows)?;

    if let Some(path) = &args.report {
        write_json_report(path, &meta, &report)?;
    }

    if args.strict {
        if let Some(bad) = report.orderings.iter().find(|c| !c.ok) {
            return Err(Error::OrderingViolation(format!(
                "{}: {} vs {} (threshold {})",
                bad.label,
                fmt(bad.lhs),
                fmt(bad.rhs),
                fmt(bad.threshold)
            )));
        }
    }
    Ok(())
}

fn init_workers(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("TRANSFUSE_WORKERS").ok().and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(n) = n {
        if n >= 1 {
            // Ignore failure: the global pool can only be set once (tests).
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Estimate(args) => run_estimate(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Bounds(args) => run_bounds(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers(cli.workers);
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
