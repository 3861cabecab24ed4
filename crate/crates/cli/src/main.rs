use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cubic_cli::config::{self, Mode};

#[derive(Parser)]
#[command(name = "cubic", version, about = "Numerical checks for cubic stochastic processes")]
struct Cli {
    #[command(subcommand)]
    mode: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Deterministic trajectory of a tensor.
    Evolve,
    /// Finite-population simulation against the deterministic trajectory.
    Sample,
    /// Multi-step transition tensor from a base tensor.
    Compose,
    /// Conditions (I)-(V) for a closed-form family.
    Verify,
    /// Generator tensor of a closed-form family.
    Generator,
    /// Delay equations along a closed-form family.
    Dde,
    #[command(name = "kernel-ck")]
    KernelCk,
    #[command(name = "kernel-coeffs")]
    KernelCoeffs,
    #[command(name = "kernel-residual")]
    KernelResidual,
}

impl From<Command> for Mode {
    fn from(c: Command) -> Self {
        match c {
            Command::Evolve => Mode::Evolve,
            Command::Sample => Mode::Sample,
            Command::Compose => Mode::Compose,
            Command::Verify => Mode::Verify,
            Command::Generator => Mode::Generator,
            Command::Dde => Mode::Dde,
            Command::KernelCk => Mode::KernelCk,
            Command::KernelCoeffs => Mode::KernelCoeffs,
            Command::KernelResidual => Mode::KernelResidual,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mode = Mode::from(cli.mode);
    let Some(path) = cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    let mut cfg = match config::load(&path, mode) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.tol = tol;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cubic_cli::run(&cfg, &cli.out) {
        Ok(outcome) => {
            for c in &outcome.report.checks {
                let verdict = if c.passed { "pass" } else { "FAIL" };
                eprintln!("{verdict}  {}  {:e}  (tol {:e})", c.name, c.statistic, c.tolerance);
            }
            if outcome.report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
