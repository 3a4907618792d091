//! `ris-thz` command-line front end.
//!
//! Exit codes: 0 on success, 1 when a validation suite fails or a numerical
//! routine errors out, 2 for invalid configurations or arguments.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ris_thz::cli::{self, CliError, CliResult, CommandOutput, SCHEMA_VERSION};
use ris_thz::config::RunConfig;
use ris_thz::fitkit::Family;

/// Modelling, optimization and analysis of RIS-aided terahertz links.
#[derive(Debug, Parser)]
#[command(name = "ris-thz", version, about)]
struct Args {
    /// JSON run configuration (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed overriding `monte_carlo.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: all available cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Directory for the CSV outputs (default: `output.dir`, else stdout).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Absorption coefficient and absorption gain over a frequency grid.
    Absorption,
    /// Outage probability versus transmit power or threshold.
    OpCurve {
        /// Comma-separated methods among exact, high-sndr, clt, 5fm, mc
        /// (default: `outage.methods`).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Ergodic capacity versus transmit power, surface size or impairment.
    CapacityCurve,
    /// Swarm phase optimization traces and summary.
    Sio,
    /// Kolmogorov-Smirnov fits of an amplitude file (one value per line).
    Fit {
        /// Input CSV file.
        path: PathBuf,
        /// Comma-separated families (default: all).
        #[arg(long, value_delimiter = ',')]
        families: Vec<Family>,
    },
    /// Runs a validation suite: ftr, absorption, foxh, outage, sio, fit or all.
    Validate {
        /// Suite name.
        #[arg(default_value = "all")]
        suite: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Absorption => "absorption",
            Command::OpCurve { .. } => "op-curve",
            Command::CapacityCurve => "capacity-curve",
            Command::Sio => "sio",
            Command::Fit { .. } => "fit",
            Command::Validate { .. } => "validate",
        }
    }
}

fn load_config(args: &Args) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.monte_carlo.seed = seed;
    }
    Ok(cfg)
}

fn run(args: &Args) -> CliResult<CommandOutput> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(args)?;
    let out = match &args.command {
        Command::Absorption => cli::cmd_absorption(&cfg)?,
        Command::OpCurve { methods } => {
            let methods = methods
                .clone()
                .unwrap_or_else(|| cfg.outage.methods.clone());
            cli::cmd_op_curve(&cfg, &methods)?
        }
        Command::CapacityCurve => cli::cmd_capacity_curve(&cfg)?,
        Command::Sio => cli::cmd_sio(&cfg)?,
        Command::Fit { path, families } => cli::cmd_fit(path, families)?,
        Command::Validate { suite } => cli::cmd_validate(suite)?,
    };
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    match args.out.clone().or_else(|| cfg.output.dir.clone()) {
        Some(dir) => {
            out.write_to_dir(&dir)?;
            let manifest = serde_json::json!({
                "command": args.command.name(),
                "schema_version": SCHEMA_VERSION,
                "seed": cfg.monte_carlo.seed,
                "files": out.tables.iter().map(|t| t.file_name.clone()).collect::<Vec<_>>(),
            });
            let text = serde_json::to_string_pretty(&manifest)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            std::fs::write(dir.join("manifest.json"), text + "\n")
                .map_err(|e| CliError::Runtime(format!("cannot write manifest: {e}")))?;
        }
        None => {
            if out.tables.len() > 1 {
                eprintln!(
                    "warning: only the last table is printed; use --out DIR to keep all tables"
                );
            }
            if let Some(t) = out.tables.last() {
                std::io::stdout()
                    .write_all(&t.to_bytes()?)
                    .map_err(|e| CliError::Runtime(format!("stdout: {e}")))?;
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(out) if out.passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
