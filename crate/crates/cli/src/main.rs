//! `lobshape`: rebuild order books from order-flow files and produce shape,
//! impact, volume and scaling reports as CSV and JSON.

mod analyze;
mod build;
mod generate;
mod input;
mod manifest;
mod stats;

use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use lobshape::Side;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

pub type CmdResult = Result<(), CliError>;

/// Inclusive `lo:hi` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range<T>(pub T, pub T);

impl<T: FromStr + PartialOrd + Copy> FromStr for Range<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
        let parse = |t: &str| t.trim().parse::<T>().map_err(|_| format!("bad range bound {t:?}"));
        let (lo, hi) = (parse(lo)?, parse(hi)?);
        if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(format!("range {s:?} must have lo < hi"));
        }
        Ok(Range(lo, hi))
    }
}

impl<T: fmt::Display> fmt::Display for Range<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

#[derive(Parser, Debug)]
#[command(name = "lobshape", version, about = "Order book reconstruction and shape statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Session configuration (TOML); built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rebuild the book from event files; write snapshots, trades and a stream report.
    Build(build::BuildArgs),
    /// Event-time averaged shape, peak report and optional exponential tail fit.
    Shape(analyze::ShapeArgs),
    /// Interval-averaged virtual price impact of a market order of size --omega.
    Impact(analyze::ImpactArgs),
    /// Interval-averaged volume at one level.
    Volumes(analyze::VolumesArgs),
    /// Detrended fluctuation analysis of a series.
    Dfa(stats::DfaArgs),
    /// Distribution and autocorrelation fits of a series.
    Fit(stats::FitArgs),
    /// Seeded synthetic inputs.
    Gen(generate::GenArgs),
}

pub fn parse_side(s: &str) -> Result<Side, String> {
    s.parse()
}

fn run(cli: Cli, argv: &[String]) -> CmdResult {
    match cli.command {
        Command::Build(a) => build::run(a, argv),
        Command::Shape(a) => analyze::shape(a, argv),
        Command::Impact(a) => analyze::impact(a, argv),
        Command::Volumes(a) => analyze::volumes(a, argv),
        Command::Dfa(a) => stats::dfa(a, argv),
        Command::Fit(a) => stats::fit(a, argv),
        Command::Gen(a) => generate::run(a, argv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli, &argv))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CliError::Usage(msg))) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(CliError::Data(e))) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("internal invariant violated; aborting");
            ExitCode::from(3)
        }
    }
}
