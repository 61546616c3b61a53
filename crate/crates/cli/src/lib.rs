//! Command-line front end for the optomechanical cooling toolkit.
//!
//! ```text
//! optocool simulate --scenario thermal.scenario --out out/thermal
//! optocool sweep --scenario scaled.scenario --param feedback.gain_v --values 3,10,30,100
//! optocool reproduce --figure 1d
//! optocool check --scenario paper.scenario
//! ```
//!
//! Exit status: 0 on success, 2 on input errors, 3 on numerical failures.

pub mod commands;
pub mod error;
pub mod figures;
pub mod pipeline;
pub mod scenario;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::CliError;
use crate::scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "optocool", version, about = "Feedback and sympathetic cooling of a membrane resonator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scenario and write trajectory, zero-span trace, spectrum and summary.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the steady simulate-fit chain over a list of values for one key.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Dotted key into the scenario, e.g. `feedback.gain_v`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Regenerate the data behind a figure (or `all`).
    Reproduce {
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form feasibility report with what-if projections.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Sizes the global rayon pool from `OPTOCOOL_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("OPTOCOOL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::input(format!("OPTOCOOL_THREADS must be a positive integer, got `{v}`")))?;
    // A second initialisation (tests calling `run` twice) is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load(path: &std::path::Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    Scenario::load_with(path, &[], seed)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let scn = load(&scenario, seed)?;
            let out = out.unwrap_or_else(|| commands::default_out(&scn.name));
            let s = commands::simulate(&scn, &out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Sweep { scenario, param, values, out, seed } => {
            let out = out.unwrap_or_else(|| commands::default_out("sweep"));
            let rows = commands::sweep(&scenario, &param, &values, seed, &out)?;
            println!("{}", commands::SWEEP_COLUMNS.join(","));
            for r in &rows {
                let cells: Vec<String> = r.cells().iter().map(|c| format!("{c:.6e}")).collect();
                println!("{}", cells.join(","));
            }
        }
        Command::Reproduce { figure, out } => {
            let out = out.unwrap_or_else(|| commands::default_out("figures"));
            let ids: Vec<&str> = if figure == "all" { figures::FIGURES.to_vec() } else { vec![figure.as_str()] };
            let mut failed = vec![];
            for id in ids {
                let r = figures::reproduce(id, &out)?;
                for c in &r.checks {
                    println!("{} {:<5} {}: {}", r.figure, if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
                }
                if !r.passed() {
                    failed.push(r.figure.clone());
                }
            }
            if !failed.is_empty() {
                return Err(CliError::numerical(format!("shape checks failed for {}", failed.join(", "))));
            }
        }
        Command::Check { scenario, out } => {
            let scn = load(&scenario, None)?;
            let r = commands::check(&scn)?;
            commands::print_check(&r);
            if let Some(out) = out {
                commands::ensure_dir(&out)?;
                commands::write_json(&out.join("check.json"), &r)?;
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
