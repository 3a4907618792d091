//! Command implementations behind the `ris-thz` binary.
//!
//! Each command turns a [`RunConfig`] into one or more CSV documents. The
//! bytes depend only on the configuration and the seed, so runs can be
//! repeated exactly. Exit codes: 0 for success, 1 for a failed validation
//! suite or a numerical failure, 2 for configuration errors.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{RunConfig, ALL_METHODS};
use crate::error::Error;
use crate::fitkit::{self, Family, SampleSet};
use crate::foxh::{eval_meijer_g, MeijerGSpec};
use crate::ftr::{self, Ftr, FtrParams};
use crate::montecarlo::{
    estimate_capacity_curve, estimate_op_curve, sample_hf_hp, wilson_interval, McRun,
};
use crate::perf_metrics::{
    capacity_exact_ideal, capacity_upper_ideal, capacity_upper_nonideal, outage, upsilon,
    HardwareProfile, OutageMethod, PathGainSource, SystemModel,
};
use crate::quad::{integrate_to_inf, QuadOptions};
use crate::ris_sio::{
    brute_force, pso_optimize, sio_optimize, OptResult, RisConfig, RisEnvironment, SwarmConfig,
};
use crate::thz_channel::{
    absorption_coefficient, absorption_gain, db_to_linear, linear_to_db, Environment, Misalignment,
};

/// Version of the CSV layouts written by the commands.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest `L` for which the exact outage column is computed.
pub const EXACT_OUTAGE_MAX_L: usize = 3;

/// Names accepted by [`cmd_validate`].
pub const SUITES: [&str; 7] = ["ftr", "absorption", "foxh", "outage", "sio", "fit", "all"];

/// Failure of a command, mapped to a process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Invalid configuration or input file (exit code 2).
    Config(String),
    /// Numerical or I/O failure while running (exit code 1).
    Runtime(String),
}

impl CliError {
    /// Process exit code.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::OutOfBand(_)
            | Error::Data(_)
            | Error::DegenerateSample(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Result alias of the command layer.
pub type CliResult<T> = std::result::Result<T, CliError>;

/// A CSV document produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// File name used when writing to a directory.
    pub file_name: String,
    /// Column names.
    pub header: Vec<String>,
    /// Data rows, one string per column, empty for unavailable values.
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(file_name: &str, header: &[&str]) -> Self {
        Self {
            file_name: file_name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Index of a column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Serializes the table, header row first.
    ///
    /// # Errors
    ///
    /// [`CliError::Runtime`] when CSV encoding fails.
    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Runtime(format!("CSV write error: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Runtime(format!("CSV write error: {e}")))
    }
}

/// Tables plus diagnostics of one command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommandOutput {
    /// CSV documents in writing order.
    pub tables: Vec<CsvTable>,
    /// Human-readable warnings.
    pub warnings: Vec<String>,
    /// Whether every validation check passed (always true for other commands).
    pub passed: bool,
}

impl CommandOutput {
    fn ok(tables: Vec<CsvTable>, warnings: Vec<String>) -> Self {
        Self {
            tables,
            warnings,
            passed: true,
        }
    }

    /// Writes every table into `dir` (created if needed).
    ///
    /// # Errors
    ///
    /// [`CliError::Runtime`] for I/O failures.
    pub fn write_to_dir(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        for t in &self.tables {
            let path = dir.join(&t.file_name);
            std::fs::write(&path, t.to_bytes()?)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Formats a number for CSV output (shortest round-trip form).
fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// `κ_α(f)` and `h_AL` over the configured frequency grid.
///
/// Columns `f_ghz, kappa_a_per_m, h_al`.
///
/// # Errors
///
/// [`CliError::Config`] naming the offending field.
pub fn cmd_absorption(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let env = cfg.environment()?;
    let mut geom = cfg.link_geometry();
    let mut t = CsvTable::new("absorption.csv", &["f_ghz", "kappa_a_per_m", "h_al"]);
    for f in cfg.absorption.freqs_hz()? {
        geom.freq_hz = f;
        let kappa = absorption_coefficient(f, &env).map_err(|e| prefixed("absorption", e))?;
        let h_al = absorption_gain(&geom, &env).map_err(|e| prefixed("absorption", e))?;
        t.rows.push(vec![num(f / 1e9), num(kappa), num(h_al)]);
    }
    Ok(CommandOutput::ok(vec![t], Vec::new()))
}

fn prefixed(field: &str, e: Error) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

fn method_of(name: &str) -> Option<OutageMethod> {
    match name {
        "exact" => Some(OutageMethod::Exact),
        "high-sndr" => Some(OutageMethod::HighSndr),
        "clt" => Some(OutageMethod::Clt),
        "5fm" => Some(OutageMethod::FiveMoment),
        _ => None,
    }
}

/// One `(L, hardware)` case of a curve command.
struct Case {
    l: usize,
    hw: HardwareProfile,
    model: SystemModel,
}

fn cases(cfg: &RunConfig, power_w: f64) -> CliResult<Vec<Case>> {
    let base = cfg.system_model(power_w)?;
    let mut out = Vec::new();
    for &l in &cfg.l_values()? {
        let sized = if l == base.l_elements() {
            base.clone()
        } else {
            base.with_elements(l)?
        };
        for hw in cfg.hardware_profiles()? {
            out.push(Case {
                l,
                hw,
                model: sized.with_hardware(hw),
            });
        }
    }
    Ok(out)
}

/// Seed of the Monte-Carlo stream of case `i`.
fn case_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(1_000_003u64.wrapping_mul(i as u64))
}

/// Outage probability curves.
///
/// Sweeps the power grid at the configured threshold, or the threshold
/// grid at the first power when `outage.threshold_grid` is set. Columns
/// `l, kappa_s, kappa_d, p_dbw, gamma_th_db`, one column per analytic
/// method and `mc, mc_lo, mc_hi` (95% Wilson interval). The exact column is
/// only computed for `L ≤ 3`; it is dropped with a warning when no case
/// qualifies and left empty for the larger cases otherwise.
///
/// # Errors
///
/// [`CliError::Config`] for invalid settings, [`CliError::Runtime`] when
/// sampling fails.
pub fn cmd_op_curve(cfg: &RunConfig, methods: &[String]) -> CliResult<CommandOutput> {
    let mut warnings = Vec::new();
    for m in methods {
        if !ALL_METHODS.contains(&m.as_str()) {
            return Err(CliError::Config(format!(
                "outage.methods: unknown method `{m}`"
            )));
        }
    }
    let powers_db = cfg.power_grid.points_db("power_grid")?;
    let (sweep_threshold, points_db): (bool, Vec<f64>) = match &cfg.outage.threshold_grid {
        Some(g) => (true, g.points_db("outage.threshold_grid")?),
        None => (false, powers_db.clone()),
    };
    let all_cases = cases(cfg, db_to_linear(powers_db[0]))?;
    let min_l = all_cases.iter().map(|c| c.l).min().unwrap_or(0);
    let mut analytic: Vec<&str> = ALL_METHODS
        .iter()
        .copied()
        .filter(|m| *m != "mc" && methods.iter().any(|x| x == m))
        .collect();
    if analytic.contains(&"exact") {
        if min_l > EXACT_OUTAGE_MAX_L {
            analytic.retain(|m| *m != "exact");
            warnings.push(format!(
                "exact column omitted: the exact outage is limited to L <= {EXACT_OUTAGE_MAX_L}"
            ));
        } else if all_cases.iter().any(|c| c.l > EXACT_OUTAGE_MAX_L) {
            warnings.push(format!(
                "exact column left empty for L > {EXACT_OUTAGE_MAX_L}"
            ));
        }
    }
    let with_mc = methods.iter().any(|m| m == "mc");
    let mut header = vec!["l", "kappa_s", "kappa_d", "p_dbw", "gamma_th_db"];
    header.extend(analytic.iter().copied());
    if with_mc {
        header.extend(["mc", "mc_lo", "mc_hi"]);
    }
    let mut t = CsvTable::new("op_curve.csv", &header);
    let gth_db = cfg.outage.threshold.in_db();
    let n = cfg.monte_carlo.n_samples;
    for (ci, case) in all_cases.iter().enumerate() {
        // (power dB, threshold dB) of every row.
        let rows: Vec<(f64, f64)> = if sweep_threshold {
            points_db.iter().map(|&g| (powers_db[0], g)).collect()
        } else {
            points_db.iter().map(|&p| (p, gth_db)).collect()
        };
        let mut cols: Vec<Vec<String>> = Vec::new();
        for &m in &analytic {
            if m == "exact" && case.l > EXACT_OUTAGE_MAX_L {
                cols.push(vec![String::new(); rows.len()]);
                continue;
            }
            let method = method_of(m).expect("analytic method");
            let vals: Vec<Result<f64, Error>> = rows
                .par_iter()
                .map(|&(p, g)| {
                    outage(
                        db_to_linear(g),
                        &case.model.with_power(db_to_linear(p))?,
                        method,
                    )
                })
                .collect();
            let mut col = Vec::with_capacity(rows.len());
            for (v, &(p, g)) in vals.into_iter().zip(&rows) {
                match v {
                    Ok(x) => col.push(num(x)),
                    Err(e) => {
                        warnings.push(format!(
                            "{m} at L={}, P={p} dBW, threshold {g} dB: {e}",
                            case.l
                        ));
                        col.push(String::new());
                    }
                }
            }
            cols.push(col);
        }
        if with_mc {
            let run = McRun::new(case.model.clone(), n, case_seed(cfg.monte_carlo.seed, ci));
            let est = if sweep_threshold {
                let mut hfp: Vec<f64> = sample_hf_hp(&run)?
                    .into_iter()
                    .map(|(a, b)| a * b)
                    .collect();
                hfp.sort_by(f64::total_cmp);
                rows.iter()
                    .map(|&(_, g)| {
                        let ups = upsilon(db_to_linear(g), &case.model)?;
                        Ok(wilson_interval(
                            hfp.partition_point(|&h| h < ups),
                            hfp.len(),
                        ))
                    })
                    .collect::<Result<Vec<_>, Error>>()?
            } else {
                let powers: Vec<f64> = rows.iter().map(|&(p, _)| db_to_linear(p)).collect();
                estimate_op_curve(&run, db_to_linear(gth_db), &powers)?
            };
            cols.push(est.iter().map(|e| num(e.value)).collect());
            cols.push(est.iter().map(|e| num(e.lo)).collect());
            cols.push(est.iter().map(|e| num(e.hi)).collect());
        }
        for (i, &(p, g)) in rows.iter().enumerate() {
            let mut row = vec![
                case.l.to_string(),
                num(case.hw.kappa_s),
                num(case.hw.kappa_d),
                num(p),
                num(g),
            ];
            row.extend(cols.iter().map(|c| c[i].clone()));
            t.rows.push(row);
        }
    }
    Ok(CommandOutput::ok(vec![t], warnings))
}

/// Ergodic capacity curves over the power grid for every configured `L`
/// and `κ`.
///
/// Columns `l, kappa_s, kappa_d, p_dbw, c_mc, c_mc_lo, c_mc_hi, c_upper,
/// c_exact`. `c_upper` is the Jensen bound; `c_exact` is filled for ideal
/// hardware and `L ≤ 2` only.
///
/// # Errors
///
/// As [`cmd_op_curve`].
pub fn cmd_capacity_curve(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let mut warnings = Vec::new();
    let powers_db = cfg.power_grid.points_db("power_grid")?;
    let powers: Vec<f64> = powers_db.iter().map(|&p| db_to_linear(p)).collect();
    let all_cases = cases(cfg, powers[0])?;
    let mut t = CsvTable::new(
        "capacity_curve.csv",
        &[
            "l", "kappa_s", "kappa_d", "p_dbw", "c_mc", "c_mc_lo", "c_mc_hi", "c_upper", "c_exact",
        ],
    );
    let mut exact_skipped = false;
    for (ci, case) in all_cases.iter().enumerate() {
        let run = McRun::new(
            case.model.clone(),
            cfg.monte_carlo.n_samples,
            case_seed(cfg.monte_carlo.seed, ci),
        );
        let mc = estimate_capacity_curve(&run, &powers)?;
        let ideal = case.hw.kappa_sq() == 0.0;
        let exact_ok = ideal && case.l <= 2;
        exact_skipped |= !exact_ok;
        let analytic: Vec<(Result<f64, Error>, Option<Result<f64, Error>>)> = powers
            .par_iter()
            .map(|&p| {
                let m = match case.model.with_power(p) {
                    Ok(m) => m,
                    Err(e) => return (Err(e), None),
                };
                let upper = if ideal {
                    capacity_upper_ideal(&m)
                } else {
                    capacity_upper_nonideal(&m)
                };
                (upper, exact_ok.then(|| capacity_exact_ideal(&m)))
            })
            .collect();
        for (i, (upper, exact)) in analytic.into_iter().enumerate() {
            let upper = upper?;
            let exact = match exact {
                Some(Ok(v)) => num(v),
                Some(Err(e)) => {
                    warnings.push(format!(
                        "exact capacity at L={}, P={} dBW: {e}",
                        case.l, powers_db[i]
                    ));
                    String::new()
                }
                None => String::new(),
            };
            t.rows.push(vec![
                case.l.to_string(),
                num(case.hw.kappa_s),
                num(case.hw.kappa_d),
                num(powers_db[i]),
                num(mc[i].value),
                num(mc[i].lo),
                num(mc[i].hi),
                num(upper),
                exact,
            ]);
        }
    }
    if exact_skipped {
        warnings.push("c_exact is only computed for ideal hardware and L <= 2".into());
    }
    Ok(CommandOutput::ok(vec![t], warnings))
}

/// Outcome of one optimizer run in [`cmd_sio`].
struct SioRun {
    step_deg: f64,
    trial: usize,
    algorithm: &'static str,
    result: OptResult,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Swarm phase optimization over independent channel draws.
///
/// Trial `t` draws its channel with seed `seed + 2t` and runs the swarms
/// with seed `seed + 2t + 1`. Writes `sio_trace.csv` (`phase_step_deg,
/// trial, algorithm, iteration, n_particles, best_fitness, ratio_to_bound,
/// omega`) and `sio_summary.csv` (`phase_step_deg, trial, algorithm,
/// iterations_to_target, final_ratio, evaluations`, followed by one
/// `median` row per step and algorithm; runs that never reach the target
/// count as `max_iter + 1` in the median).
///
/// # Errors
///
/// As [`cmd_op_curve`].
pub fn cmd_sio(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let o = &cfg.optimizer;
    let (h1, h2) = cfg.hop_params()?;
    let mis = cfg.misalignment()?;
    let h_l = match cfg.path_source()? {
        PathGainSource::Fixed(h) => h,
        PathGainSource::Geometry { geom, env } => crate::thz_channel::path_gain(&geom, &env)?,
    };
    let seed = cfg.monte_carlo.seed;
    let mut jobs = Vec::new();
    for &step in &o.phase_steps_deg {
        let ris = o.ris(step)?;
        for trial in 0..o.trials {
            jobs.push((step, ris, trial));
        }
    }
    let algorithms: Vec<&'static str> = if o.compare_pso {
        vec!["sio", "pso"]
    } else {
        vec!["sio"]
    };
    let runs: Vec<CliResult<Vec<SioRun>>> = jobs
        .par_iter()
        .map(|&(step, ris, trial)| {
            let t = trial as u64;
            let env = RisEnvironment::draw(
                o.l_elements,
                &h1[0],
                &h2[0],
                h_l,
                mis,
                seed.wrapping_add(2 * t),
            )?
            .with_noise(o.meas_noise_sigma, o.meas_avg_count);
            let swarm = o.swarm(&ris, seed.wrapping_add(2 * t + 1))?;
            algorithms
                .iter()
                .map(|&a| {
                    let result = run_optimizer(a, &env, &ris, &swarm)?;
                    Ok(SioRun {
                        step_deg: step,
                        trial,
                        algorithm: a,
                        result,
                    })
                })
                .collect()
        })
        .collect();
    let mut trace = CsvTable::new(
        "sio_trace.csv",
        &[
            "phase_step_deg",
            "trial",
            "algorithm",
            "iteration",
            "n_particles",
            "best_fitness",
            "ratio_to_bound",
            "omega",
        ],
    );
    let mut summary = CsvTable::new(
        "sio_summary.csv",
        &[
            "phase_step_deg",
            "trial",
            "algorithm",
            "iterations_to_target",
            "final_ratio",
            "evaluations",
        ],
    );
    let mut all = Vec::new();
    for r in runs {
        all.extend(r?);
    }
    for r in &all {
        for row in &r.result.trace {
            trace.rows.push(vec![
                num(r.step_deg),
                r.trial.to_string(),
                r.algorithm.to_string(),
                row.iteration.to_string(),
                row.n_particles.to_string(),
                num(row.best_fitness),
                num(row.ratio_to_bound),
                num(row.omega),
            ]);
        }
        let last = r.result.trace.last().map_or(f64::NAN, |t| t.ratio_to_bound);
        summary.rows.push(vec![
            num(r.step_deg),
            r.trial.to_string(),
            r.algorithm.to_string(),
            r.result
                .iterations_to(o.target_ratio)
                .map_or(String::new(), |k| k.to_string()),
            num(last),
            r.result.evaluations.to_string(),
        ]);
    }
    for &step in &o.phase_steps_deg {
        for &a in &algorithms {
            let sel: Vec<&SioRun> = all
                .iter()
                .filter(|r| r.step_deg == step && r.algorithm == a)
                .collect();
            let mut iters: Vec<f64> = sel
                .iter()
                .map(|r| {
                    r.result
                        .iterations_to(o.target_ratio)
                        .unwrap_or(o.max_iter + 1) as f64
                })
                .collect();
            let mut finals: Vec<f64> = sel
                .iter()
                .map(|r| r.result.trace.last().map_or(f64::NAN, |t| t.ratio_to_bound))
                .collect();
            let mut evals: Vec<f64> = sel.iter().map(|r| r.result.evaluations as f64).collect();
            summary.rows.push(vec![
                num(step),
                "median".into(),
                a.to_string(),
                num(median(&mut iters)),
                num(median(&mut finals)),
                num(median(&mut evals)),
            ]);
        }
    }
    Ok(CommandOutput::ok(vec![trace, summary], Vec::new()))
}

fn run_optimizer(
    name: &str,
    env: &RisEnvironment,
    ris: &RisConfig,
    swarm: &SwarmConfig,
) -> CliResult<OptResult> {
    Ok(match name {
        "sio" => sio_optimize(env, ris, swarm)?,
        _ => pso_optimize(env, ris, swarm)?,
    })
}

/// K-S fits of an amplitude file, one row per family.
///
/// # Errors
///
/// [`CliError::Config`] for unreadable or invalid data.
pub fn cmd_fit(path: &Path, families: &[Family]) -> CliResult<CommandOutput> {
    let samples = SampleSet::from_csv_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let results = if families.is_empty() {
        fitkit::fit_all(&samples)?
    } else {
        families
            .iter()
            .map(|&f| fitkit::fit_family(&samples, f))
            .collect::<Result<Vec<_>, Error>>()?
    };
    let mut bytes = Vec::new();
    fitkit::write_report(&mut bytes, &results)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(CommandOutput::ok(
        vec![CsvTable {
            file_name: "fit_report.csv".into(),
            header,
            rows,
        }],
        Vec::new(),
    ))
}

/// One check of a validation suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Suite name.
    pub suite: &'static str,
    /// What was checked.
    pub name: String,
    /// Observed value.
    pub value: f64,
    /// Limit the value is compared with.
    pub limit: f64,
    /// Whether the check passed.
    pub pass: bool,
}

impl Check {
    fn below(suite: &'static str, name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            value,
            limit,
            pass: value < limit,
        }
    }
}

/// Runs a validation suite and reports one row per check.
///
/// Columns `suite, check, value, limit, pass`. The output's `passed` flag
/// is false when any check fails.
///
/// # Errors
///
/// [`CliError::Config`] for an unknown suite name.
pub fn cmd_validate(suite: &str) -> CliResult<CommandOutput> {
    let names: Vec<&str> = match suite {
        "all" => SUITES[..SUITES.len() - 1].to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => {
            return Err(CliError::Config(format!(
                "suite: unknown suite `{other}` (expected one of {})",
                SUITES.join(", ")
            )))
        }
    };
    let mut checks = Vec::new();
    for name in names {
        let res = match name {
            "ftr" => suite_ftr(),
            "absorption" => suite_absorption(),
            "foxh" => suite_foxh(),
            "outage" => suite_outage(),
            "sio" => suite_sio(),
            _ => suite_fit(),
        };
        match res {
            Ok(c) => checks.extend(c),
            Err(e) => checks.push(Check {
                suite: "error",
                name: format!("{name}: {e}"),
                value: f64::NAN,
                limit: f64::NAN,
                pass: false,
            }),
        }
    }
    let mut t = CsvTable::new(
        "validate.csv",
        &["suite", "check", "value", "limit", "pass"],
    );
    for c in &checks {
        t.rows.push(vec![
            c.suite.to_string(),
            c.name.clone(),
            num(c.value),
            num(c.limit),
            c.pass.to_string(),
        ]);
    }
    Ok(CommandOutput {
        tables: vec![t],
        warnings: Vec::new(),
        passed: checks.iter().all(|c| c.pass),
    })
}

/// The three measured FTR parameter sets `(K, m, Δ, σ)` used for checks.
pub const MEASURED_FTR_SETS: [(f64, f64, f64, f64); 3] = [
    (7.0, 6.0, 0.2, 2.7729),
    (6.0, 3.0, 0.04, 2.382),
    (30.0, 30.0, 0.8, 0.8991),
];

fn suite_ftr() -> Result<Vec<Check>, Error> {
    let mut out = Vec::new();
    for (i, &(k, m, d, s)) in MEASURED_FTR_SETS.iter().enumerate() {
        let p = FtrParams::new(k, m, d, s * s)?;
        let f = Ftr::new(p)?;
        let mean = p.mean_power();
        let opts = QuadOptions::new(1e-13, 1e-11);
        let mass = integrate_to_inf(|g| f.pdf_power(g).unwrap_or(f64::NAN), 0.0, mean, opts)?;
        let first = integrate_to_inf(|g| g * f.pdf_power(g).unwrap_or(f64::NAN), 0.0, mean, opts)?;
        out.push(Check::below(
            "ftr",
            format!("set {i}: |mass - 1|"),
            (mass - 1.0).abs(),
            1e-5,
        ));
        out.push(Check::below(
            "ftr",
            format!("set {i}: relative mean error"),
            (first - mean).abs() / mean,
            1e-4,
        ));
        let samples = ftr::sample_envelope(&p, 100 + i as u64, 20_000)?;
        let ks = fitkit::ks_statistic(&samples, |r| f.cdf_envelope(r).unwrap_or(f64::NAN));
        out.push(Check::below(
            "ftr",
            format!("set {i}: sampler K-S at n=20000"),
            ks,
            fitkit::ks_critical_5pct(samples.len()),
        ));
    }
    Ok(out)
}

fn suite_absorption() -> Result<Vec<Check>, Error> {
    let dry = Environment {
        rel_humidity: 0.0,
        ..Environment::default()
    };
    let mut worst: f64 = 0.0;
    for i in 0..=125 {
        let f = (275.0 + i as f64) * 1e9;
        let poly = 5.54e-37 * f * f * f - 3.94e-25 * f * f + 9.06e-14 * f - 6.36e-3;
        let k = absorption_coefficient(f, &dry)?;
        worst = worst.max((k - poly).abs() / poly.abs());
    }
    let env = Environment::default();
    let k300 = absorption_coefficient(300e9, &env)?;
    let k340 = absorption_coefficient(340e9, &env)?;
    let k380 = absorption_coefficient(380e9, &env)?;
    Ok(vec![
        Check::below(
            "absorption",
            "dry air equals the cubic (relative)",
            worst,
            1e-12,
        ),
        Check::below(
            "absorption",
            "kappa(340 GHz) - kappa(380 GHz)",
            k340 - k380,
            0.0,
        ),
        Check::below(
            "absorption",
            "kappa(300 GHz) - kappa(340 GHz)",
            k300 - k340,
            0.0,
        ),
    ])
}

fn suite_foxh() -> Result<Vec<Check>, Error> {
    let exp = MeijerGSpec::new(1, 0, vec![], vec![0.0])?;
    let ratio = MeijerGSpec::new(1, 1, vec![1.0], vec![1.0])?;
    let mut e1: f64 = 0.0;
    let mut e2: f64 = 0.0;
    for x in [0.05, 0.5, 1.0, 3.0, 10.0] {
        e1 = e1.max((eval_meijer_g(&exp, x)? - (-x).exp()).abs());
        e2 = e2.max((eval_meijer_g(&ratio, x)? - x / (1.0 + x)).abs());
    }
    Ok(vec![
        Check::below("foxh", "G^{1,0}_{0,1}(x|-;0) vs exp(-x)", e1, 1e-6),
        Check::below("foxh", "G^{1,1}_{1,1}(x|1;1) vs x/(1+x)", e2, 1e-6),
    ])
}

fn suite_outage() -> Result<Vec<Check>, Error> {
    let mp = db_to_linear(20.0);
    let model = SystemModel::iid(
        2,
        FtrParams::from_mean_power(5.0, 5.0, 0.6, mp)?,
        FtrParams::from_mean_power(6.0, 7.0, 0.4, mp)?,
        Misalignment::new(0.01, 0.06, 0.01)?,
        PathGainSource::Fixed(1e-7),
        HardwareProfile::new(0.1, 0.1)?,
        1.0,
        db_to_linear(1.0),
    )?;
    let gth = db_to_linear(0.5);
    let powers: Vec<f64> = [120.0, 130.0].iter().map(|&p| db_to_linear(p)).collect();
    let mc = estimate_op_curve(&McRun::new(model.clone(), 200_000, 7), gth, &powers)?;
    let mut out = Vec::new();
    for (p, est) in powers.iter().zip(&mc) {
        let exact = outage(gth, &model.with_power(*p)?, OutageMethod::Exact)?;
        out.push(Check::below(
            "outage",
            format!("L=2 |exact - MC| at {} dBW", linear_to_db(*p).round()),
            (exact - est.value).abs(),
            0.01,
        ));
    }
    Ok(out)
}

fn suite_sio() -> Result<Vec<Check>, Error> {
    let ris = RisConfig::with_levels(3, 4)?;
    let h1 = FtrParams::from_mean_power(5.0, 5.0, 0.6, 1.0)?;
    let h2 = FtrParams::from_mean_power(6.0, 7.0, 0.4, 1.0)?;
    let mis = Misalignment::from_gains(0.05, 9.0)?;
    let trials = 20;
    let hits = (0..trials)
        .into_par_iter()
        .map(|s| -> Result<bool, Error> {
            let env = RisEnvironment::draw(3, &h1, &h2, 1.0, mis, 40_000 + s)?;
            let cfg = SwarmConfig {
                v_max: 2.0 * ris.delta_theta,
                max_iter: 100,
                seed: 50_000 + s,
                ..SwarmConfig::default()
            };
            let (_, best) = brute_force(&env, &ris)?;
            let r = sio_optimize(&env, &ris, &cfg)?;
            Ok((r.best_fitness - best).abs() <= 1e-12 * best)
        })
        .collect::<Result<Vec<_>, Error>>()?
        .into_iter()
        .filter(|&h| h)
        .count();
    Ok(vec![Check::below(
        "sio",
        "L=3 K=4 runs missing the brute-force optimum (of 20)",
        (trials as usize - hits) as f64,
        2.0,
    )])
}

fn suite_fit() -> Result<Vec<Check>, Error> {
    let hand = [0.1, 0.5, 0.9];
    let d = fitkit::ks_statistic(&hand, |x| x);
    let p = FtrParams::new(7.0, 6.0, 0.2, 2.7729 * 2.7729)?;
    let data = SampleSet::new(ftr::sample_envelope(&p, 77, 5_000)?, "ftr")?;
    let fit = fitkit::fit_family(&data, Family::Ftr)?;
    Ok(vec![
        Check::below(
            "fit",
            "hand K-S example |D - 7/30|",
            (d - 7.0 / 30.0).abs(),
            1e-15,
        ),
        Check::below(
            "fit",
            "FTR self-fit K-S at n=5000",
            fit.ks_stat,
            fitkit::ks_critical_5pct(data.len()),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(extra: &str) -> RunConfig {
        let text = format!(
            r#"{{"geometry": {{"h_l": 1e-7}}, "noise": "1 dBW",
                "power_grid": {{"start": "120 dBW", "stop": "130 dBW", "step": "5 dB"}},
                "monte_carlo": {{"n_samples": 20000, "seed": 5}} {extra}}}"#
        );
        RunConfig::from_json(&text).unwrap()
    }

    #[test]
    fn absorption_table_has_band_grid() {
        let out = cmd_absorption(&RunConfig::default()).unwrap();
        let t = &out.tables[0];
        assert_eq!(t.header, vec!["f_ghz", "kappa_a_per_m", "h_al"]);
        assert_eq!(t.rows.len(), 126);
        assert_eq!(t.rows[0][0], "275");
        let bytes = t.to_bytes().unwrap();
        assert!(String::from_utf8(bytes)
            .unwrap()
            .starts_with("f_ghz,kappa_a_per_m,h_al\n"));
    }

    #[test]
    fn op_curve_columns_and_determinism() {
        let cfg = small_config("");
        let methods: Vec<String> = ALL_METHODS.iter().map(|s| s.to_string()).collect();
        let a = cmd_op_curve(&cfg, &methods).unwrap();
        let b = cmd_op_curve(&cfg, &methods).unwrap();
        assert_eq!(
            a.tables[0].to_bytes().unwrap(),
            b.tables[0].to_bytes().unwrap()
        );
        let t = &a.tables[0];
        for c in ["exact", "high-sndr", "clt", "5fm", "mc", "mc_lo", "mc_hi"] {
            assert!(t.column(c).is_some(), "missing {c}");
        }
        assert_eq!(t.rows.len(), 3);
        let (e, m) = (t.column("exact").unwrap(), t.column("mc").unwrap());
        for r in &t.rows {
            let exact: f64 = r[e].parse().unwrap();
            let mc: f64 = r[m].parse().unwrap();
            assert!((exact - mc).abs() < 0.02, "{exact} vs {mc}");
        }
    }

    #[test]
    fn exact_column_dropped_for_large_surfaces() {
        let cfg = small_config(r#", "hops": {"l_elements": 20}"#);
        let methods = vec!["exact".to_string(), "clt".to_string()];
        let out = cmd_op_curve(&cfg, &methods).unwrap();
        assert!(out.tables[0].column("exact").is_none());
        assert!(out.tables[0].column("clt").is_some());
        assert!(out
            .warnings
            .iter()
            .any(|w| w.contains("exact column omitted")));
    }

    #[test]
    fn threshold_sweep_variant() {
        let cfg = small_config(
            r#", "outage": {"threshold_grid": {"start": "-5 dB", "stop": "5 dB", "step": "5 dB"}, "methods": ["mc"]}"#,
        );
        let out = cmd_op_curve(&cfg, &cfg.outage.methods).unwrap();
        let t = &out.tables[0];
        assert_eq!(t.rows.len(), 3);
        let g = t.column("gamma_th_db").unwrap();
        let m = t.column("mc").unwrap();
        let ops: Vec<f64> = t.rows.iter().map(|r| r[m].parse().unwrap()).collect();
        assert_eq!(t.rows[2][g], "5");
        assert!(ops[0] <= ops[1] && ops[1] <= ops[2]);
    }

    #[test]
    fn capacity_ideal_column_matches_mc() {
        let cfg = small_config(r#", "hops": {"l_elements": 1}"#);
        let out = cmd_capacity_curve(&cfg).unwrap();
        let t = &out.tables[0];
        let (mc, up, ex) = (
            t.column("c_mc").unwrap(),
            t.column("c_upper").unwrap(),
            t.column("c_exact").unwrap(),
        );
        for r in &t.rows {
            let (c, u, e): (f64, f64, f64) = (
                r[mc].parse().unwrap(),
                r[up].parse().unwrap(),
                r[ex].parse().unwrap(),
            );
            assert!(c <= u + 1e-12);
            assert!((c - e).abs() < 0.05, "{c} vs {e}");
        }
    }

    #[test]
    fn sio_summary_has_medians() {
        let cfg = RunConfig::from_json(
            r#"{"optimizer": {"l_elements": 8, "trials": 2, "max_iter": 30, "phase_steps_deg": [90, 0]}}"#,
        )
        .unwrap();
        let out = cmd_sio(&cfg).unwrap();
        assert_eq!(out.tables.len(), 2);
        let summary = &out.tables[1];
        let medians = summary.rows.iter().filter(|r| r[1] == "median").count();
        assert_eq!(medians, 4);
        assert_eq!(out.tables[0].rows.len(), 2 * 2 * 2 * 31);
    }

    #[test]
    fn validate_rejects_unknown_suite() {
        assert_eq!(cmd_validate("nope").unwrap_err().exit_code(), 2);
        let out = cmd_validate("foxh").unwrap();
        assert!(out.passed);
    }
}
