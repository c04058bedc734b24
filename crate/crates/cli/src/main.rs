use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use conepp::diagnostics::{CheckReport, CheckStatus};
use conepp::scenario::{self, Preset, PresetOutput, RunConfig, RunResult, SweepAxis, SweepResult};

/// Simulate the nonlocal pseudo-parabolic flow on a discretized cone and
/// check its energy identities and blow-up criteria.
#[derive(Parser)]
#[command(name = "conepp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Print only the final summary line.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a named preset: linear_decay, subcritical_global,
    /// subcritical_blowup, higherenergy_blowup, sminus_dichotomy_sweep.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one simulation per value of a parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// amplitude, width, p, t_end or dt0
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run the values one after another.
        #[arg(long)]
        serial: bool,
    },
    /// Re-run the diagnostics on a stored run directory.
    Check { run_dir: PathBuf },
}

fn print_checks(checks: &[CheckReport]) {
    for c in checks {
        println!(
            "{:<22} {:<13} worst={:.3e} tol={:.3e} t={:.4e}  {}",
            c.name,
            format!("{:?}", c.status),
            c.worst_violation,
            c.tolerance_used,
            c.location_t,
            c.detail
        );
    }
}

fn report_run(result: &RunResult, quiet: bool) -> bool {
    if !quiet {
        let i = &result.initial;
        println!(
            "u0: J={:.6e} I={:.6e} S={:.3e} H2={:.6e} d_est={}",
            i.j0,
            i.i0,
            i.s0,
            i.h2_0,
            i.d_est.map_or("-".into(), |d| format!("{d:.6e}"))
        );
        print_checks(&result.checks);
    }
    let failed = result.any_failure();
    let last_t = result.trajectory.last().map_or(0.0, |r| r.t);
    println!(
        "outcome {} at t={last_t:.6e}; {}",
        result.trajectory.outcome,
        if failed { "checks FAILED" } else { "checks passed" }
    );
    !failed
}

fn report_sweep(result: &SweepResult, quiet: bool) -> Result<bool> {
    if !quiet {
        let stdout = std::io::stdout();
        result.write_phase_csv(stdout.lock())?;
    }
    let failed: Vec<f64> =
        result.rows.iter().zip(&result.runs).filter(|(_, run)| run.any_failure()).map(|(row, _)| row.value).collect();
    if failed.is_empty() {
        println!("{} runs; checks passed", result.rows.len());
    } else {
        println!("{} runs; checks FAILED for values {failed:?}", result.rows.len());
    }
    Ok(failed.is_empty())
}

fn load_config(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(dir) = out {
        cfg.output.directory = Some(dir);
    }
    if seed.is_some() {
        cfg.initial.seed = seed;
    }
    // snapshot paths are relative to the config file
    if let (Some(snap), Some(base)) = (cfg.initial.path.as_mut(), path.parent()) {
        if snap.is_relative() {
            *snap = base.join(&*snap);
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let cfg = load_config(&config, out, seed)?;
            let result = scenario::run_config(&cfg)?;
            Ok(report_run(&result, cli.quiet))
        }
        Command::Preset { name, out, seed } => {
            let preset: Preset = name.parse()?;
            match scenario::run_preset(preset, out.as_deref(), seed)? {
                PresetOutput::Run(result) => Ok(report_run(&result, cli.quiet)),
                PresetOutput::Sweep(result) => report_sweep(&result, cli.quiet),
            }
        }
        Command::Sweep { config, axis, values, out, seed, serial } => {
            if values.is_empty() {
                bail!("--values needs at least one number");
            }
            let axis: SweepAxis = axis.parse()?;
            let template = load_config(&config, None, seed)?;
            let result = scenario::sweep(&template, axis, &values, !serial, out.as_deref())?;
            report_sweep(&result, cli.quiet)
        }
        Command::Check { run_dir } => {
            let (_, trajectory, checks) =
                scenario::recheck(&run_dir).with_context(|| format!("checking {}", run_dir.display()))?;
            if !cli.quiet {
                print_checks(&checks);
            }
            let failed = checks.iter().any(|c| c.status == CheckStatus::Fail);
            println!("outcome {}; {}", trajectory.outcome, if failed { "checks FAILED" } else { "checks passed" });
            Ok(!failed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e:#}");
            ExitCode::from(2)
        }
    }
}
