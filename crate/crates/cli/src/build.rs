use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use lobshape::{LimitOrderBook, SessionConfig, Side};
use rayon::prelude::*;
use serde::Serialize;

use crate::input::{load_config, replay, ReplaySummary};
use crate::manifest::{OutputDir, RunInfo};
use crate::{CliError, CmdResult, Common};

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Event CSV files; each gets its own subdirectory of --out when more than one is given.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Levels per side written to the snapshot dump.
    #[arg(long, default_value_t = 10)]
    depth: usize,
    /// Files processed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Serialize)]
struct FinalBook {
    best_bid: Option<String>,
    best_ask: Option<String>,
    resting_orders: usize,
    bid_volume: u64,
    ask_volume: u64,
}

#[derive(Serialize)]
struct BuildReport {
    #[serde(flatten)]
    replay: ReplaySummary,
    trades: u64,
    traded_volume: u64,
    max_resting_orders: usize,
    snapshot_depth: usize,
    final_book: FinalBook,
}

pub fn run(args: BuildArgs, argv: &[String]) -> CmdResult {
    if args.depth == 0 {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let (config, canonical) = load_config(args.common.config.as_deref())?;
    let targets: Vec<(PathBuf, PathBuf)> = if args.inputs.len() == 1 {
        vec![(args.inputs[0].clone(), args.common.out.clone())]
    } else {
        let mut seen = BTreeSet::new();
        let mut targets = Vec::new();
        for input in &args.inputs {
            let stem = input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| CliError::Usage(format!("{} has no file name", input.display())))?;
            if !seen.insert(stem.clone()) {
                return Err(CliError::Usage(format!("two inputs share the name {stem:?}")));
            }
            targets.push((input.clone(), args.common.out.join(stem)));
        }
        targets
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .context("starting worker threads")?;
    let results: Vec<Result<()>> = pool.install(|| {
        targets
            .par_iter()
            .map(|(input, out)| build_one(input, out, &config, &canonical, args.depth, argv))
            .collect()
    });
    for r in results {
        r?;
    }
    Ok(())
}

fn build_one(input: &Path, out: &Path, config: &SessionConfig, canonical: &str, depth: usize, argv: &[String]) -> Result<()> {
    let mut dir = OutputDir::create(out)?;
    let mut snapshots = dir.writer("snapshots.csv")?;
    let mut trades = dir.writer("trades.csv")?;
    writeln!(snapshots, "t,side,delta,volume")?;
    writeln!(trades, "t,trade_price,trade_size")?;

    let mut trade_count = 0u64;
    let mut traded_volume = 0u64;
    let mut max_resting = 0usize;
    let mut line = String::new();
    let (summary, book) = replay(input, config, |book, event, delta| {
        use std::fmt::Write as _;
        line.clear();
        let t = event.seq;
        for fill in &delta.trades {
            writeln!(line, "{t},{},{}", config.format_price(fill.price), fill.size)?;
            trade_count += 1;
            traded_volume += fill.size;
        }
        trades.write_all(line.as_bytes())?;
        line.clear();
        for side in [Side::Buy, Side::Sell] {
            book.for_each_level(side, depth, |d, v| {
                let _ = writeln!(line, "{t},{side},{d},{v}");
            });
        }
        snapshots.write_all(line.as_bytes())?;
        max_resting = max_resting.max(book.order_count());
        Ok(())
    })?;
    dir.close(snapshots)?;
    dir.close(trades)?;

    let mut run = RunInfo::new(argv, Some(canonical));
    run.inputs.push(summary.input.clone());
    let report = BuildReport {
        replay: summary,
        trades: trade_count,
        traded_volume,
        max_resting_orders: max_resting,
        snapshot_depth: depth,
        final_book: final_state(&book, config),
    };
    dir.write_report("stream_report.json", &report, &run)?;
    dir.finish(&run)
}

fn final_state(book: &LimitOrderBook, config: &SessionConfig) -> FinalBook {
    FinalBook {
        best_bid: book.best_bid().map(|p| config.format_price(p)),
        best_ask: book.best_ask().map(|p| config.format_price(p)),
        resting_orders: book.order_count(),
        bid_volume: book.total_volume(Side::Buy),
        ask_volume: book.total_volume(Side::Sell),
    }
}
