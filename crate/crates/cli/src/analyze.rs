//! Commands that replay an event file: shape, impact and volumes.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use lobshape::shape::{detect_periodic_peaks, fit_exponential_tail, locate_maximum, PeakConfig, ShapeAccumulator, ShapeError};
use lobshape::volstats::{IntervalGrid, VolumeSeriesBuilder};
use lobshape::{AveragedShape, Side};
use serde::Serialize;

use crate::input::{first_line, load_config, replay, ReplaySummary};
use crate::manifest::{sha256_hex, InputDigest, OutputDir, RunInfo};
use crate::{parse_side, CliError, CmdResult, Common, Range};

const SHAPE_HEADER: &str = "delta,mean_volume,std_volume";

#[derive(Args, Debug)]
pub struct ShapeArgs {
    /// Event CSV, or a shape table with header `delta,mean_volume,std_volume`.
    input: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_side)]
    side: Side,
    /// Levels averaged; the full price-band width when omitted (ignored for shape tables).
    #[arg(long)]
    depth: Option<usize>,
    /// Inclusive Δ window for the exponential tail fit; no fit is reported without it.
    #[arg(long)]
    range: Option<Range<usize>>,
    /// Peak spacing: levels Δ = period·n + 1 are compared with their neighbours.
    #[arg(long, default_value_t = 5)]
    period: usize,
    /// Neighbour ratio above which peaks are reported.
    #[arg(long, default_value_t = 1.1)]
    threshold: f64,
}

#[derive(Serialize)]
struct ShapeSummary<'a> {
    side: Side,
    depth: usize,
    /// Snapshots averaged; absent when the input was already a shape table.
    snapshots: Option<u64>,
    delta_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    replay: Option<&'a ReplaySummary>,
}

fn read_shape_table(path: &Path, side: Side) -> Result<(AveragedShape, InputDigest)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).context("shape table is not UTF-8")?;
    let mut mean = Vec::new();
    let mut sigma = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [d, m, s] => d.parse::<usize>().ok().zip(m.parse::<f64>().ok()).zip(s.parse::<f64>().ok()),
            _ => None,
        };
        let Some(((delta, m), s)) = parsed else {
            bail!("{}:{}: expected delta,mean_volume,std_volume", path.display(), i + 1);
        };
        if delta != mean.len() + 1 {
            bail!("{}:{}: levels must run 1, 2, 3, ...", path.display(), i + 1);
        }
        mean.push(m);
        sigma.push(s);
    }
    if mean.is_empty() {
        bail!("{} has no levels", path.display());
    }
    let mut shape = AveragedShape::from_means(side, mean);
    shape.sigma = sigma;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((shape, digest))
}

pub fn shape(args: ShapeArgs, argv: &[String]) -> CmdResult {
    if args.depth == Some(0) {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    let (config, canonical) = load_config(args.common.config.as_deref())?;
    let depth = args.depth.unwrap_or_else(|| config.band_width());
    let mut run = RunInfo::new(argv, Some(&canonical));
    let is_table = first_line(&args.input)?.trim_start().starts_with("delta,");
    let (shape, replay_summary, snapshots) = if is_table {
        let (shape, digest) = read_shape_table(&args.input, args.side)?;
        run.inputs.push(digest);
        (shape, None, None)
    } else {
        let mut acc = ShapeAccumulator::new(args.side, depth);
        let (summary, _) = replay(&args.input, &config, |book, _, _| {
            acc.add_book(book);
            Ok(())
        })?;
        run.inputs.push(summary.input.clone());
        let shape = match acc.finish() {
            Ok(s) => s,
            Err(ShapeError::Empty) => {
                return Err(CliError::Data(anyhow::anyhow!("{}: no events applied, nothing to average", args.input.display())))
            }
            Err(e) => return Err(CliError::Data(e.into())),
        };
        let m = shape.m;
        (shape, Some(summary), Some(m))
    };

    let fit = match args.range {
        Some(Range(lo, hi)) => match fit_exponential_tail(&shape, (lo, hi)) {
            Ok(f) => Some(f),
            Err(e @ ShapeError::BadRange { .. }) => return Err(CliError::Usage(e.to_string())),
            Err(e) => return Err(CliError::Data(e.into())),
        },
        None => None,
    };
    let peaks = detect_periodic_peaks(
        &shape,
        PeakConfig {
            period: args.period,
            threshold: args.threshold,
        },
    );

    let mut dir = OutputDir::create(&args.common.out)?;
    let mut table = String::from(SHAPE_HEADER);
    table.push('\n');
    for (i, (m, s)) in shape.mean.iter().zip(&shape.sigma).enumerate() {
        table.push_str(&format!("{},{m},{s}\n", i + 1));
    }
    dir.write_bytes("shape.csv", table.as_bytes())?;
    let summary = ShapeSummary {
        side: args.side,
        depth: shape.depth(),
        snapshots,
        delta_max: locate_maximum(&shape),
        replay: replay_summary.as_ref(),
    };
    dir.write_report("shape.json", &summary, &run)?;
    match peaks {
        Ok(p) => dir.write_report("peaks.json", &p, &run)?,
        Err(e) => eprintln!("note: no peak report: {e}"),
    }
    if let Some(f) = fit {
        dir.write_report("fit.json", &f, &run)?;
    }
    dir.finish(&run)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ImpactArgs {
    input: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Side of the hypothetical market order; it walks the opposite side.
    #[arg(long, value_parser = parse_side)]
    side: Side,
    /// Market order size in shares.
    #[arg(long)]
    omega: u64,
    /// Interval length in seconds.
    #[arg(long, default_value_t = 60)]
    dt: u32,
}

#[derive(Serialize)]
struct ImpactSummary<'a> {
    side: Side,
    omega: u64,
    dt_seconds: u32,
    interval_count: usize,
    /// Events after which the opposite side was empty.
    no_liquidity_events: u64,
    /// Events where ω covered all opposite volume.
    saturated_events: u64,
    outside_session: u64,
    /// Mean impact in ticks over all events with liquidity.
    mean_ticks: Option<f64>,
    gaps: Vec<usize>,
    replay: &'a ReplaySummary,
}

pub fn impact(args: ImpactArgs, argv: &[String]) -> CmdResult {
    if args.dt == 0 {
        return Err(CliError::Usage("--dt must be positive".into()));
    }
    let (config, canonical) = load_config(args.common.config.as_deref())?;
    let grid = IntervalGrid::new(&config, args.dt);
    let mut sums = vec![0u128; grid.count()];
    let mut counts = vec![0u64; grid.count()];
    let (mut total, mut observed, mut empty, mut saturated, mut outside) = (0u128, 0u64, 0u64, 0u64, 0u64);
    let (summary, _) = replay(&args.input, &config, |book, event, _| {
        let Ok(imp) = book.virtual_price_impact(args.side, args.omega) else {
            empty += 1;
            return Ok(());
        };
        saturated += u64::from(imp.saturated);
        total += u128::from(imp.ticks);
        observed += 1;
        match grid.index_of(event.wall_time) {
            Some(i) => {
                sums[i] += u128::from(imp.ticks);
                counts[i] += 1;
            }
            None => outside += 1,
        }
        Ok(())
    })?;
    let mut run = RunInfo::new(argv, Some(&canonical));
    run.inputs.push(summary.input.clone());

    let mut dir = OutputDir::create(&args.common.out)?;
    let mut series = dir.writer("impact.csv")?;
    writeln!(series, "interval_index,value").context("writing impact.csv")?;
    let mut gaps = Vec::new();
    for (i, (&s, &n)) in sums.iter().zip(&counts).enumerate() {
        if n == 0 {
            gaps.push(i);
        } else {
            writeln!(series, "{i},{}", s as f64 / n as f64).context("writing impact.csv")?;
        }
    }
    dir.close(series)?;
    let report = ImpactSummary {
        side: args.side,
        omega: args.omega,
        dt_seconds: args.dt,
        interval_count: grid.count(),
        no_liquidity_events: empty,
        saturated_events: saturated,
        outside_session: outside,
        mean_ticks: (observed > 0).then(|| total as f64 / observed as f64),
        gaps,
        replay: &summary,
    };
    dir.write_report("impact.json", &report, &run)?;
    dir.finish(&run)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct VolumesArgs {
    input: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_side)]
    side: Side,
    /// Relative level Δ (1 = same-side best).
    #[arg(long)]
    delta: usize,
    /// Interval length in seconds.
    #[arg(long, default_value_t = 60)]
    dt: u32,
}

#[derive(Serialize)]
struct VolumesSummary<'a> {
    side: Side,
    delta: usize,
    dt_seconds: u32,
    interval_count: usize,
    intervals_with_events: usize,
    gaps: &'a [usize],
    outside_session: u64,
    replay: &'a ReplaySummary,
}

pub fn volumes(args: VolumesArgs, argv: &[String]) -> CmdResult {
    let (config, canonical) = load_config(args.common.config.as_deref())?;
    let mut builder = VolumeSeriesBuilder::new(args.side, args.delta, args.dt, &config)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (summary, _) = replay(&args.input, &config, |book, _, _| {
        builder.push_book(book);
        Ok(())
    })?;
    let outside = builder.outside_session();
    let series = builder.finish();
    let mut run = RunInfo::new(argv, Some(&canonical));
    run.inputs.push(summary.input.clone());

    let mut dir = OutputDir::create(&args.common.out)?;
    let mut out = dir.writer("series.csv")?;
    writeln!(out, "interval_index,value").context("writing series.csv")?;
    for (i, v) in series.indices.iter().zip(&series.values) {
        writeln!(out, "{i},{v}").context("writing series.csv")?;
    }
    dir.close(out)?;
    let report = VolumesSummary {
        side: args.side,
        delta: args.delta,
        dt_seconds: args.dt,
        interval_count: series.interval_count,
        intervals_with_events: series.values.len(),
        gaps: &series.gaps,
        outside_session: outside,
        replay: &summary,
    };
    dir.write_report("volumes.json", &report, &run)?;
    dir.finish(&run)?;
    Ok(())
}
