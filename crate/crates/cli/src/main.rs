//! Batch front end: parses polynomial-Hamiltonian model files, dispatches
//! the spectral / WKB / overlap / 6j computations, and emits deterministic
//! CSV artifacts for tables and offline plotting.
//!
//! Exit codes: 0 success, 1 domain errors (no bracket, tangential
//! intersection, non-realizable tetrahedron, ...), 2 configuration, I/O,
//! and parse errors.

mod model;
mod pool;
mod runner;
mod sixj_cmd;
mod validate;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Wraps every failure with the exit code it must map to.
#[derive(Debug)]
pub enum Failure {
    /// A well-posed computation hit a mathematical obstruction (exit 1).
    Domain(String),
    /// The invocation itself is unusable: bad flags, files, parses (exit 2).
    Config(String),
}

pub type CliResult<T> = Result<T, Failure>;

pub fn domain<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Domain(e.to_string())
}

pub fn config<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "semioverlap",
    version,
    about = "Semiclassical spectra, WKB states, eigenfunction overlaps, and 6j symbols",
    propagate_version = true
)]
struct Cli {
    /// Seed for randomized spot checks; recorded in every artifact header.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bohr-Sommerfeld spectrum side by side with the exact grid oracle.
    ///
    /// Emits CSV rows (n, b_bs, b_exact, abs_err, rel_err).
    Spectrum(SpectrumArgs),
    /// WKB eigen-half-density on the position grid, with the exact
    /// eigenvector modulus for comparison.
    ///
    /// Emits CSV rows (q, re_psi, im_psi, abs_psi, abs_psi_exact).
    WkbEval(WkbEvalArgs),
    /// Stationary-phase overlap of eigenfunctions of two systems against
    /// the exact grid oracle.
    ///
    /// Emits CSV rows (n1, n2, b1, b2, abs_asym, abs_exact, rel_err,
    /// n_intersections); `--sweep-h` prepends an h column.
    Overlap(OverlapArgs),
    /// Exact Racah 6j symbols and their Ponzano-Regge asymptotics.
    Sixj(SixjArgs),
    /// Runs the cross-module invariant suite and prints a pass/fail matrix.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    /// Hamiltonian model JSON ({"coeffs": [[c00, c01, ...], ...]}).
    #[arg(long)]
    model: PathBuf,
    /// Semiclassical parameter h > 0.
    #[arg(long)]
    hbar: f64,
    /// Number of levels n = 0..levels-1.
    #[arg(long)]
    levels: u32,
    /// Grid size N (power of two).
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Half-width R of the position box [-R, R].
    #[arg(long = "box", default_value_t = 6.0)]
    box_r: f64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WkbEvalArgs {
    /// Hamiltonian model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Semiclassical parameter h > 0.
    #[arg(long)]
    hbar: f64,
    /// Level index n of the Bohr-Sommerfeld state to evaluate.
    #[arg(long)]
    level: u32,
    /// Grid size N (power of two).
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Half-width R of the position box [-R, R].
    #[arg(long = "box", default_value_t = 6.0)]
    box_r: f64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also export the traced level curve as CSV (idx, q, p,
    /// is_turning_point).
    #[arg(long)]
    curve_output: Option<PathBuf>,
}

#[derive(Args)]
struct OverlapArgs {
    /// First Hamiltonian model JSON.
    #[arg(long)]
    model1: PathBuf,
    /// Second Hamiltonian model JSON.
    #[arg(long)]
    model2: PathBuf,
    /// Semiclassical parameter h > 0.
    #[arg(long)]
    hbar: f64,
    /// Comma-separated level indices for the first system.
    #[arg(long, required_unless_present = "b1", conflicts_with = "b1")]
    n1: Option<String>,
    /// Comma-separated level indices for the second system.
    #[arg(long, required_unless_present = "b2", conflicts_with = "b2")]
    n2: Option<String>,
    /// Explicit first level value; skips the Bohr-Sommerfeld solve and the
    /// exact-oracle columns.
    #[arg(long, requires = "b2")]
    b1: Option<f64>,
    /// Explicit second level value.
    #[arg(long, requires = "b1")]
    b2: Option<f64>,
    /// Grid size N (power of two).
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Half-width R of the position box [-R, R].
    #[arg(long = "box", default_value_t = 6.0)]
    box_r: f64,
    /// Comma-separated h values; emits the convergence table over them.
    #[arg(long)]
    sweep_h: Option<String>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SixjMode {
    /// Exact Racah value of the symbol.
    #[arg(long)]
    exact: bool,
    /// Ponzano-Regge asymptotic value.
    #[arg(long)]
    pr: bool,
    /// Scaling study: CSV rows (lambda, j12, exact, pr, abs_err).
    #[arg(long)]
    converge: bool,
}

#[derive(Args)]
struct SixjArgs {
    #[command(flatten)]
    mode: SixjMode,
    /// Spins are given as doubled integers (2j) instead of "3/2" forms.
    #[arg(long)]
    doubled: bool,
    /// Six spins j1 j2 j3 j4 j12 j23 for --exact / --pr.
    #[arg(value_name = "J", num_args = 0..=6)]
    spins: Vec<String>,
    /// Base spins "j1,j2,j3,j4,j12,j23" for --converge.
    #[arg(long)]
    base: Option<String>,
    /// Comma-separated integer scales for --converge, e.g. "1,2,4,8".
    #[arg(long)]
    scales: Option<String>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Output path for the pass/fail matrix (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let outcome = match cli.command {
        Command::Spectrum(args) => runner::run_spectrum(&args, seed),
        Command::WkbEval(args) => runner::run_wkb_eval(&args, seed),
        Command::Overlap(args) => runner::run_overlap(&args, seed),
        Command::Sixj(args) => sixj_cmd::run(&args, seed),
        Command::Validate(args) => validate::run(&args, seed),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Fixed 17-significant-digit scientific formatting for every real column.
pub fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes to the path or to stdout.
pub fn write_artifact(output: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match output {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Comma-separated list of values parsable as `T`.
pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|e| config(format!("invalid {what} entry {tok:?}: {e}")))
        })
        .collect()
}
