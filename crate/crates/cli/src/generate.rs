//! `gen`: seeded synthetic order flow, fGn series, volume samples and shapes.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Subcommand, ValueEnum};
use lobshape::synthgen::{
    generate_fgn, generate_planted_shape, sample_lognormal, sample_tailed_lognormal, write_flow_csv, FgnParams,
    FlowGenerator, FlowParams, InvalidInjection, PlacementLaw, PlantedShape, ShapeProfile, SynthError, TailedLognormal,
};
use lobshape::Side;
use serde::Serialize;

use crate::input::load_config;
use crate::manifest::{OutputDir, RunInfo};
use crate::{parse_side, CliError, CmdResult, Common};

/// Seed offset for the invalid-record injector, so it never shares a stream with the generator.
const INJECTION_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Subcommand, Debug)]
enum GenKind {
    /// Order-flow CSV plus the generator ledger.
    Flow(FlowArgs),
    /// Fractional Gaussian noise series.
    Fgn(FgnArgs),
    /// Lognormal volume sample, optionally with a power-law left tail.
    Lognormal(LognormalArgs),
    /// Planted averaged shape table.
    Shape(ShapeArgs),
}

/// `period:factor`.
#[derive(Debug, Clone, Copy)]
struct Boost(usize, f64);

impl FromStr for Boost {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (p, f) = s.split_once(':').ok_or_else(|| format!("expected period:factor, got {s:?}"))?;
        let period = p.parse().map_err(|_| format!("bad period {p:?}"))?;
        let factor = f.parse().map_err(|_| format!("bad factor {f:?}"))?;
        Ok(Boost(period, factor))
    }
}

fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::InvalidParams(_) | SynthError::BandViolation(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.into()),
    }
}

#[derive(Args, Debug)]
struct FlowArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    events: u64,
    /// Exponential placement rate over Δ.
    #[arg(long, default_value_t = 0.044, conflicts_with = "uniform")]
    beta: f64,
    /// Uniform placement over Δ = 1..=D instead of exponential.
    #[arg(long)]
    uniform: Option<usize>,
    /// Target share of cancels; the rest splits evenly between buys and sells.
    #[arg(long, default_value_t = 0.32)]
    cancel_fraction: f64,
    /// Weight placements at Δ = period·n + 1 by factor.
    #[arg(long)]
    boost: Option<Boost>,
    /// Share of records followed by a deliberately invalid record.
    #[arg(long)]
    inject: Option<f64>,
}

#[derive(Serialize)]
struct FlowReport<'a> {
    params: &'a FlowParams,
    ledger: &'a lobshape::synthgen::GeneratorLedger,
    injected: lobshape::synthgen::InjectionReport,
}

fn gen_flow(args: FlowArgs, argv: &[String]) -> CmdResult {
    let (config, canonical) = load_config(args.common.config.as_deref())?;
    let c = args.cancel_fraction;
    if !(0.0..1.0).contains(&c) {
        return Err(CliError::Usage(format!("--cancel-fraction {c} outside [0, 1)")));
    }
    let params = FlowParams {
        events: args.events,
        buy_fraction: (1.0 - c) / 2.0,
        sell_fraction: (1.0 - c) / 2.0,
        cancel_fraction: c,
        placement: match args.uniform {
            Some(max_delta) => PlacementLaw::Uniform { max_delta },
            None => PlacementLaw::Exponential { beta: args.beta },
        },
        periodic_boost: args.boost.map(|Boost(p, f)| (p, f)),
        seed: args.seed,
        ..FlowParams::default()
    };
    let injection = match args.inject {
        Some(f) if !(0.0..=1.0).contains(&f) => {
            return Err(CliError::Usage(format!("--inject {f} outside [0, 1]")));
        }
        Some(fraction) => Some(InvalidInjection {
            fraction,
            seed: args.seed.wrapping_add(INJECTION_SEED_OFFSET),
        }),
        None => None,
    };
    let mut generator = FlowGenerator::new(params, &config).map_err(synth_error)?;
    let mut dir = OutputDir::create(&args.common.out)?;
    let mut events = dir.writer("events.csv")?;
    let injected = write_flow_csv(generator.by_ref(), &config, &mut events, injection).context("writing events.csv")?;
    dir.close(events)?;
    let mut run = RunInfo::new(argv, Some(&canonical));
    run.seeds.push(args.seed);
    let report = FlowReport {
        params: &params,
        ledger: generator.ledger(),
        injected,
    };
    dir.write_report("ledger.json", &report, &run)?;
    dir.finish(&run)?;
    Ok(())
}

#[derive(Args, Debug)]
struct FgnArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    hurst: f64,
    /// Series length, a power of two.
    #[arg(long, default_value_t = 65_536)]
    n: usize,
}

#[derive(Serialize)]
struct SeriesReport<T: Serialize> {
    params: T,
    n: usize,
}

fn write_series(dir: &mut OutputDir, values: &[f64]) -> anyhow::Result<()> {
    let mut w = dir.writer("series.csv")?;
    writeln!(w, "interval_index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    dir.close(w)
}

fn gen_fgn(args: FgnArgs, argv: &[String]) -> CmdResult {
    let params = FgnParams {
        hurst: args.hurst,
        n: args.n,
        seed: args.seed,
    };
    let values = generate_fgn(&params).map_err(synth_error)?;
    let mut dir = OutputDir::create(&args.out)?;
    write_series(&mut dir, &values)?;
    let mut run = RunInfo::new(argv, None);
    run.seeds.push(args.seed);
    dir.write_report("series.json", &SeriesReport { params, n: values.len() }, &run)?;
    dir.finish(&run)?;
    Ok(())
}

#[derive(Args, Debug)]
struct LognormalArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Mean of ln v.
    #[arg(long)]
    mu: f64,
    /// Standard deviation of ln v.
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Left-tail exponent: f(ln v) ∝ v^tail_beta below the knee.
    #[arg(long, requires_all = ["knee", "floor"])]
    tail_beta: Option<f64>,
    /// Knee of the tail, log10 v.
    #[arg(long, requires = "tail_beta")]
    knee: Option<f64>,
    /// Lower cut-off of the tail, log10 v.
    #[arg(long, requires = "tail_beta")]
    floor: Option<f64>,
}

#[derive(Serialize)]
struct LognormalParams {
    mu: f64,
    sigma: f64,
    tail_beta: Option<f64>,
    knee_log10: Option<f64>,
    floor_log10: Option<f64>,
    seed: u64,
}

fn gen_lognormal(args: LognormalArgs, argv: &[String]) -> CmdResult {
    let values = match (args.tail_beta, args.knee, args.floor) {
        (Some(tail_beta), Some(knee_log10), Some(floor_log10)) => {
            let p = TailedLognormal {
                mu: args.mu,
                sigma: args.sigma,
                tail_beta,
                knee_log10,
                floor_log10,
            };
            sample_tailed_lognormal(&p, args.n, args.seed)
        }
        _ => sample_lognormal(args.mu, args.sigma, args.n, args.seed),
    }
    .map_err(synth_error)?;
    let mut dir = OutputDir::create(&args.out)?;
    write_series(&mut dir, &values)?;
    let mut run = RunInfo::new(argv, None);
    run.seeds.push(args.seed);
    let params = LognormalParams {
        mu: args.mu,
        sigma: args.sigma,
        tail_beta: args.tail_beta,
        knee_log10: args.knee,
        floor_log10: args.floor,
        seed: args.seed,
    };
    dir.write_report("series.json", &SeriesReport { params, n: values.len() }, &run)?;
    dir.finish(&run)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    Flat,
    Exponential,
    Mode,
}

#[derive(Args, Debug)]
struct ShapeArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    profile: Profile,
    #[arg(long, value_parser = parse_side, default_value = "buy")]
    side: Side,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long, default_value_t = 10_000.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.044)]
    beta: f64,
    /// Position of the maximum for the mode profile.
    #[arg(long, default_value_t = 4)]
    delta_max: usize,
    #[arg(long)]
    boost: Option<Boost>,
    /// Zero every level beyond this Δ.
    #[arg(long)]
    truncate: Option<usize>,
    /// Multiplicative log-normal noise per level; needs --seed.
    #[arg(long, requires = "seed")]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn gen_shape(args: ShapeArgs, argv: &[String]) -> CmdResult {
    let profile = match args.profile {
        Profile::Flat => ShapeProfile::Flat { level: args.amplitude },
        Profile::Exponential => ShapeProfile::Exponential {
            amplitude: args.amplitude,
            beta: args.beta,
        },
        Profile::Mode => ShapeProfile::Mode {
            amplitude: args.amplitude,
            delta_max: args.delta_max,
            beta: args.beta,
        },
    };
    let mut spec = PlantedShape::new(args.side, args.depth, profile);
    spec.periodic_boost = args.boost.map(|Boost(p, f)| (p, f));
    spec.truncate_after = args.truncate;
    spec.noise = args.noise.zip(args.seed);
    let shape = generate_planted_shape(&spec).map_err(synth_error)?;
    let mut dir = OutputDir::create(&args.out)?;
    let mut table = String::from("delta,mean_volume,std_volume\n");
    for (i, (m, s)) in shape.mean.iter().zip(&shape.sigma).enumerate() {
        table.push_str(&format!("{},{m},{s}\n", i + 1));
    }
    dir.write_bytes("shape.csv", table.as_bytes())?;
    let mut run = RunInfo::new(argv, None);
    run.seeds.extend(args.seed);
    dir.write_report("planted.json", &spec, &run)?;
    dir.finish(&run)?;
    Ok(())
}

pub fn run(args: GenArgs, argv: &[String]) -> CmdResult {
    match args.kind {
        GenKind::Flow(a) => gen_flow(a, argv),
        GenKind::Fgn(a) => gen_fgn(a, argv),
        GenKind::Lognormal(a) => gen_lognormal(a, argv),
        GenKind::Shape(a) => gen_shape(a, argv),
    }
}
