mod commands;
mod doc;
mod exit;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::exit::CliError;

/// Youla, SLP and IOP parameterizations: factorization, conversion,
/// verification and H2 synthesis. Results are JSON on stdout (or --out),
/// a short residual summary goes to stderr.
#[derive(Debug, Parser)]
#[command(name = "parametrix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Write the result document here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Add wall_time_ms to the metrics (output is then run-dependent).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Deadbeat,
    Riccati,
    Stable,
    Statefb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    Youla,
    Slp,
    Iop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Iop,
    Slp,
    Bezout,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Doubly coprime factors of P22 and their Bezout check.
    Factorize {
        plant: PathBuf,
        #[arg(long, value_enum, default_value = "deadbeat")]
        mode: ModeArg,
        /// Factor truncation horizon; chosen automatically when omitted.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Converts a parameter set between the three parameterizations.
    Map {
        plant: PathBuf,
        params: PathBuf,
        #[arg(long, value_enum)]
        from: ParamArg,
        #[arg(long, value_enum)]
        to: ParamArg,
        #[arg(long, default_value_t = 32)]
        horizon: usize,
        /// Factors for Youla conversions (default: stable factors for
        /// stable plants, deadbeat otherwise).
        #[arg(long)]
        factors: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "factors")]
        mode: Option<ModeArg>,
    },
    /// H2-optimal controller over FIR parameters of a fixed horizon.
    Synthesize {
        plant: PathBuf,
        #[arg(long, value_enum)]
        param: ParamArg,
        #[arg(long)]
        horizon: usize,
        /// Controller sparsity pattern (must be QI unless --si).
        #[arg(long)]
        structure: Option<PathBuf>,
        /// Sparsity-invariance inner approximation for state feedback;
        /// without --structure the pattern is support(A) plus the diagonal.
        #[arg(long)]
        si: bool,
        #[arg(long)]
        factors: Option<PathBuf>,
    },
    /// Quadratic invariance of a controller pattern under the plant.
    QiCheck { plant: PathBuf, pattern: PathBuf },
    /// Subspace or Bezout verification of a parameter or factor file.
    Verify {
        plant: PathBuf,
        params: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Number of unit-circle frequencies.
        #[arg(long, default_value_t = 64)]
        points: usize,
    },
    /// Distributed state feedback on a graph, solved by all three routes.
    Example1 {
        /// Chain graph on N nodes.
        #[arg(long, conflicts_with = "graph", required_unless_present = "graph")]
        n: Option<usize>,
        /// JSON with a `graph` adjacency (scaled to spectral radius 0.5) or
        /// an `A` matrix (used verbatim).
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        horizon: usize,
    },
}

fn emit(common: &Common, text: &str) -> Result<(), CliError> {
    match &common.out {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::usage(e.to_string()))
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let tol = commands::tolerance()?;
    let doc = commands::dispatch(&cli.command, &cli.common, tol)?;
    let mut text = serde_json::to_string_pretty(&doc.to_value()).map_err(|e| CliError::usage(e.to_string()))?;
    text.push('\n');
    emit(&cli.common, &text)?;
    eprintln!("{}", commands::summary(&doc));
    Ok(if doc.pass { exit::PASS } else { doc.fail_code })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::PASS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
