//! Commands on a numeric series: DFA and distribution/ACF fits.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use lobshape::volstats::{
    autocorrelation, dfa as run_dfa, empirical_log_pdf, fit_acf_decay, fit_left_tail_powerlaw, fit_lognormal, Binning,
    DfaConfig, VolStatsError,
};
use serde::Serialize;

use crate::input::read_series;
use crate::manifest::{OutputDir, RunInfo};
use crate::{CliError, CmdResult, Range};

fn stats_error(e: VolStatsError) -> CliError {
    match e {
        VolStatsError::EmptyRange { .. } | VolStatsError::InsufficientPoints { .. } | VolStatsError::InvalidConfig(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Data(other.into()),
    }
}

#[derive(Args, Debug)]
pub struct DfaArgs {
    /// Series CSV; the last column is used.
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Inclusive box-size window for the Hurst fit; the central decade of the
    /// box grid when omitted. The window used is always reported.
    #[arg(long)]
    range: Option<Range<usize>>,
    /// Polynomial detrending order.
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 8)]
    min_box: usize,
    /// Largest box; n/4 when omitted.
    #[arg(long)]
    max_box: Option<usize>,
}

#[derive(Serialize)]
struct DfaReport {
    #[serde(rename = "H")]
    hurst: f64,
    stderr: f64,
    gamma: f64,
    fit_range: (usize, usize),
    order: usize,
    n: usize,
}

pub fn dfa(args: DfaArgs, argv: &[String]) -> CmdResult {
    let (values, digest) = read_series(&args.input)?;
    let config = DfaConfig {
        min_box: args.min_box,
        max_box: args.max_box,
        order: args.order,
        fit_range: args.range.map(|Range(lo, hi)| (lo, hi)),
        ..DfaConfig::default()
    };
    let result = run_dfa(&values, &config).map_err(stats_error)?;
    let mut run = RunInfo::new(argv, None);
    run.inputs.push(digest);

    let mut dir = OutputDir::create(&args.out)?;
    let mut table = String::from("ell,F\n");
    for (l, f) in result.box_sizes.iter().zip(&result.fluctuation) {
        table.push_str(&format!("{l},{f}\n"));
    }
    dir.write_bytes("dfa.csv", table.as_bytes())?;
    let report = DfaReport {
        hurst: result.hurst,
        stderr: result.hurst_stderr,
        gamma: result.gamma,
        fit_range: result.fit_range,
        order: result.order,
        n: values.len(),
    };
    dir.write_report("dfa.json", &report, &run)?;
    dir.finish(&run)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitKind {
    /// Lognormal maximum-likelihood fit of the values.
    Lognormal,
    /// Power-law slope of the left tail of the density of ln v; --range in log10 v.
    Powerlaw,
    /// Power-law decay of the autocorrelation; --range in lags.
    Acf,
}

/// `fd` (Freedman-Diaconis), a bin count, or `width:W` in ln v.
#[derive(Debug, Clone, Copy)]
struct BinSpec(Binning);

impl FromStr for BinSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "fd" {
            return Ok(BinSpec(Binning::FreedmanDiaconis));
        }
        if let Some(w) = s.strip_prefix("width:") {
            return match w.parse::<f64>() {
                Ok(w) if w > 0.0 => Ok(BinSpec(Binning::Width(w))),
                _ => Err(format!("bad bin width {w:?}")),
            };
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(BinSpec(Binning::Count(n))),
            _ => Err(format!("expected fd, a bin count or width:W, got {s:?}")),
        }
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Series CSV; the last column is used.
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    kind: FitKind,
    /// Fit window, required for powerlaw (log10 v) and acf (lags).
    #[arg(long)]
    range: Option<String>,
    /// Histogram binning of ln v.
    #[arg(long, default_value = "fd")]
    bins: BinSpec,
}

#[derive(Serialize)]
struct LognormalReport {
    mu: f64,
    sigma: f64,
    ks_distance: f64,
    n: usize,
    dropped: usize,
}

#[derive(Serialize)]
struct PowerLawReport {
    beta: f64,
    stderr: f64,
    fit_range: (f64, f64),
    bins_used: usize,
    r2: f64,
    dropped: usize,
}

#[derive(Serialize)]
struct AcfReport {
    gamma: f64,
    stderr: f64,
    lag_range: (usize, usize),
    lags_used: usize,
    n: usize,
}

fn required_range<T: FromStr + PartialOrd + Copy>(range: Option<&str>, kind: &str) -> Result<Range<T>, CliError> {
    let text = range.ok_or_else(|| CliError::Usage(format!("--range lo:hi is required for --kind {kind}")))?;
    text.parse::<Range<T>>().map_err(CliError::Usage)
}

pub fn fit(args: FitArgs, argv: &[String]) -> CmdResult {
    let (values, digest) = read_series(&args.input)?;
    let mut run = RunInfo::new(argv, None);
    run.inputs.push(digest);

    let dir = match args.kind {
        FitKind::Lognormal => {
            if args.range.is_some() {
                return Err(CliError::Usage("--range has no meaning for --kind lognormal".into()));
            }
            let fit = fit_lognormal(&values).map_err(stats_error)?;
            let hist = empirical_log_pdf(&values, args.bins.0).map_err(stats_error)?;
            let mut dir = OutputDir::create(&args.out)?;
            let mut table = String::from("ln_v,density,fitted_density\n");
            for (i, d) in hist.density.iter().enumerate() {
                let x = hist.center(i);
                table.push_str(&format!("{x},{d},{}\n", fit.log_density(x)));
            }
            dir.write_bytes("histogram.csv", table.as_bytes())?;
            let report = LognormalReport {
                mu: fit.mu,
                sigma: fit.sigma_ln,
                ks_distance: fit.ks_distance,
                n: fit.n,
                dropped: fit.dropped,
            };
            dir.write_report("fit.json", &report, &run)?;
            dir
        }
        FitKind::Powerlaw => {
            let Range(lo, hi) = required_range::<f64>(args.range.as_deref(), "powerlaw")?;
            let hist = empirical_log_pdf(&values, args.bins.0).map_err(stats_error)?;
            let fit = fit_left_tail_powerlaw(&hist, (lo, hi)).map_err(stats_error)?;
            let mut dir = OutputDir::create(&args.out)?;
            let mut table = String::from("ln_v,density\n");
            for (i, d) in hist.density.iter().enumerate() {
                table.push_str(&format!("{},{d}\n", hist.center(i)));
            }
            dir.write_bytes("histogram.csv", table.as_bytes())?;
            let report = PowerLawReport {
                beta: fit.beta_delta,
                stderr: fit.stderr,
                fit_range: fit.fit_range,
                bins_used: fit.bins_used,
                r2: fit.r_squared,
                dropped: hist.dropped,
            };
            dir.write_report("fit.json", &report, &run)?;
            dir
        }
        FitKind::Acf => {
            let Range(lo, hi) = required_range::<usize>(args.range.as_deref(), "acf")?;
            if lo == 0 {
                return Err(CliError::Usage("acf lag range must start at 1 or later".into()));
            }
            let acf = autocorrelation(&values, hi).map_err(stats_error)?;
            let fit = fit_acf_decay(&acf, (lo, hi)).map_err(stats_error)?;
            let mut dir = OutputDir::create(&args.out)?;
            let mut table = String::from("lag,value\n");
            for (l, c) in acf.iter().enumerate() {
                table.push_str(&format!("{l},{c}\n"));
            }
            dir.write_bytes("acf.csv", table.as_bytes())?;
            let report = AcfReport {
                gamma: fit.gamma,
                stderr: fit.stderr,
                lag_range: fit.lag_range,
                lags_used: fit.lags_used,
                n: values.len(),
            };
            dir.write_report("fit.json", &report, &run)?;
            dir
        }
    };
    dir.finish(&run)?;
    Ok(())
}
