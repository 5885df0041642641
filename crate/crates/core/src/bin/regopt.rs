use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use regionalized::cli::{self, SolveOptions};
use regionalized::Method;

#[derive(Parser)]
#[command(name = "regopt", version, about = "Regionalized optimization over finite posets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check poset axioms, functoriality and kernel stochasticity.
    Validate { problem: PathBuf },
    /// Run the configured solver and emit a result file.
    Solve {
        problem: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Compare the solver against the matching brute-force oracle.
    OracleCompare {
        problem: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Generic,
    Newton,
    Gbp,
    Channel,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Generic => Method::Generic,
            MethodArg::Newton => Method::Newton,
            MethodArg::Gbp => Method::Gbp,
            MethodArg::Channel => Method::Channel,
        }
    }
}

#[derive(Args)]
struct Flags {
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol_message: Option<f64>,
    #[arg(long)]
    tol_residual: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl From<Flags> for SolveOptions {
    fn from(f: Flags) -> Self {
        SolveOptions {
            out: f.out,
            trace: f.trace,
            method: f.method.map(Method::from),
            max_iters: f.max_iters,
            tol_message: f.tol_message,
            tol_residual: f.tol_residual,
            damping: f.damping,
            seed: f.seed,
        }
    }
}

fn main() -> ExitCode {
    let outcome = match Cli::parse().command {
        Command::Validate { problem } => cli::cmd_validate(&problem),
        Command::Solve { problem, flags } => cli::cmd_solve(&problem, &flags.into()),
        Command::OracleCompare { problem, flags } => cli::cmd_oracle_compare(&problem, &flags.into()),
    };
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    ExitCode::from(outcome.code as u8)
}
