//! Command-line entry point shared by the binary and tests.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use crate::config::{ExperimentKind, RawConfig};
use crate::equivalence::{run_equivalence_suite, write_equivalence_report, COUNTEREXAMPLE_FILE};
use crate::error::{ConfigError, RunError};
use crate::experiment::{run_experiment, write_report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "SCIP_SEED";

#[derive(Debug, Parser)]
#[command(name = "scip", version, about = "Run selective conformal inference experiments")]
pub struct Args {
    /// Experiment file with `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Root seed; falls back to the SCIP_SEED environment variable.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// regression-sweep, classification-sweep, equivalence-suite or synthetic-real.
    #[arg(long, value_name = "NAME")]
    pub experiment: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Run(_) => EXIT_RUNTIME,
        }
    }
}

/// Merges the config file, `--set` overrides, dedicated flags and the seed
/// environment variable, in increasing order of precedence except that the
/// environment only fills a missing seed.
pub fn assemble(args: &Args, env_seed: Option<String>) -> Result<RawConfig, ConfigError> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for assignment in &args.overrides {
        raw.apply_override(assignment)?;
    }
    if let Some(name) = &args.experiment {
        raw.set("experiment", name)?;
    }
    if let Some(out) = &args.out {
        raw.set("out", &out.to_string_lossy())?;
    }
    if let Some(seed) = args.seed {
        raw.set("seed", &seed.to_string())?;
    } else if !raw.contains("seed") {
        if let Some(seed) = env_seed {
            raw.set("seed", seed.trim())?;
        }
    }
    Ok(raw)
}

/// Runs the CLI and returns a process exit code. Messages go to stderr.
pub fn main_with<I, T>(argv: I, env_seed: Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&args, env_seed) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(args: &Args, env_seed: Option<String>) -> Result<(), CliError> {
    let cfg = assemble(args, env_seed)?.resolve()?;
    if cfg.experiment == ExperimentKind::EquivalenceSuite {
        let report = run_equivalence_suite(cfg.seed, cfg.instances).map_err(RunError::from)?;
        write_equivalence_report(&report, &cfg.out)?;
        if report.vacuous() {
            eprintln!("warning: equivalence suite ran zero instances; passing vacuously");
        }
        for c in &report.checks {
            let verdict = if c.failures == 0 { "pass" } else { "FAIL" };
            eprintln!("{verdict} {} ({} instances, {} failures)", c.check, c.instances, c.failures);
        }
        if !report.passed() {
            let path = cfg.out.join(COUNTEREXAMPLE_FILE);
            return Err(RunError::Equivalence { failures: report.counterexamples.len(), path }.into());
        }
        return Ok(());
    }
    let report = run_experiment(&cfg, args.jobs)?;
    write_report(&report, &cfg.out)?;
    Ok(())
}
