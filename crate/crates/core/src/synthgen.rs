//! Seeded generators used in place of proprietary exchange data: order-flow
//! streams, planted shape fixtures, heavy-left-tailed volume samples and
//! fractional Gaussian noise.
//!
//! Every generator is a pure function of its parameters and seed.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::book::LimitOrderBook;
use crate::orderflow::{format_event_record, OrderEvent, OrderRef, SessionConfig, Side, WallTime, WIRE_HEADER};
use crate::shape::AveragedShape;
use crate::volstats::IntervalGrid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("circulant embedding of length {n} is not positive semi-definite (min eigenvalue {min_eigenvalue:e}); use a larger n")]
    NotPositiveDefinite { n: usize, min_eigenvalue: f64 },
    #[error("placement law reaches beyond the price band: {0}")]
    BandViolation(String),
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// fractional Gaussian noise

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgnParams {
    pub hurst: f64,
    /// Must be a power of two.
    pub n: usize,
    pub seed: u64,
}

/// Autocovariance of unit-variance fGn at lag `k`:
/// ½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H}).
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Exact fGn sample by circulant embedding of the covariance matrix.
///
/// The first row of the size-2n circulant is ρ(0..=n) followed by ρ(n-1..=1);
/// its eigenvalues come from one FFT. A complex Gaussian vector scaled by
/// √(λ/2n) and transformed again has real part with covariance exactly ρ.
pub fn generate_fgn(params: &FgnParams) -> Result<Vec<f64>, SynthError> {
    let FgnParams { hurst, n, seed } = *params;
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(SynthError::InvalidParams(format!("hurst {hurst} outside (0, 1)")));
    }
    if n < 2 || !n.is_power_of_two() {
        return Err(SynthError::InvalidParams(format!("length {n} is not a power of two >= 2")));
    }
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);

    let max_eig = row.iter().map(|c| c.re).fold(0.0, f64::max);
    let min_eig = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    if min_eig < -1e-9 * max_eig {
        return Err(SynthError::NotPositiveDefinite { n, min_eigenvalue: min_eig });
    }

    let mut rng = rng(seed);
    let scale = 1.0 / m as f64;
    let mut w: Vec<Complex<f64>> = row
        .iter()
        .map(|lambda| {
            let amp = (lambda.re.max(0.0) * scale).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(re * amp, im * amp)
        })
        .collect();
    fft.process(&mut w);
    Ok(w[..n].iter().map(|c| c.re).collect())
}

// ---------------------------------------------------------------------------
// planted shape fixtures

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShapeProfile {
    Flat { level: f64 },
    /// amplitude · exp(-beta Δ)
    Exponential { amplitude: f64, beta: f64 },
    /// amplitude · (Δ/Δmax)^(beta·Δmax) · exp(-beta (Δ - Δmax)); peaks exactly at Δmax.
    Mode { amplitude: f64, delta_max: usize, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedShape {
    pub side: Side,
    pub depth: usize,
    pub profile: ShapeProfile,
    /// Multiply V at Δ = period·n + 1 by `boost`.
    pub periodic_boost: Option<(usize, f64)>,
    /// Zero every level beyond this Δ, mimicking the price-band cut-off.
    pub truncate_after: Option<usize>,
    /// Multiplicative exp(sigma·Z) noise per level.
    pub noise: Option<(f64, u64)>,
}

impl PlantedShape {
    pub fn new(side: Side, depth: usize, profile: ShapeProfile) -> Self {
        PlantedShape {
            side,
            depth,
            profile,
            periodic_boost: None,
            truncate_after: None,
            noise: None,
        }
    }
}

pub fn generate_planted_shape(spec: &PlantedShape) -> Result<AveragedShape, SynthError> {
    if spec.depth == 0 {
        return Err(SynthError::InvalidParams("depth must be positive".into()));
    }
    let base = |delta: usize| -> f64 {
        let d = delta as f64;
        match spec.profile {
            ShapeProfile::Flat { level } => level,
            ShapeProfile::Exponential { amplitude, beta } => amplitude * (-beta * d).exp(),
            ShapeProfile::Mode { amplitude, delta_max, beta } => {
                let dm = delta_max as f64;
                amplitude * (d / dm).powf(beta * dm) * (-beta * (d - dm)).exp()
            }
        }
    };
    if let ShapeProfile::Mode { delta_max, beta, .. } = spec.profile {
        if delta_max == 0 || !(beta > 0.0) {
            return Err(SynthError::InvalidParams("mode profile needs delta_max >= 1 and beta > 0".into()));
        }
    }
    let mut noise_rng = spec.noise.map(|(_, seed)| rng(seed));
    let mean = (1..=spec.depth)
        .map(|delta| {
            let mut v = base(delta);
            if let Some((period, boost)) = spec.periodic_boost {
                if period > 0 && delta % period == 1 % period {
                    v *= boost;
                }
            }
            if let (Some((sigma, _)), Some(r)) = (spec.noise, noise_rng.as_mut()) {
                let z: f64 = r.sample(StandardNormal);
                v *= (sigma * z).exp();
            }
            if spec.truncate_after.is_some_and(|cut| delta > cut) {
                v = 0.0;
            }
            v
        })
        .collect();
    Ok(AveragedShape::from_means(spec.side, mean))
}

// ---------------------------------------------------------------------------
// lognormal body with a power-law left tail

/// Plain lognormal sample: ln v ~ Normal(mu, sigma).
pub fn sample_lognormal(mu: f64, sigma: f64, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    let dist = LogNormal::new(mu, sigma).map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    if !(sigma > 0.0) {
        return Err(SynthError::InvalidParams(format!("sigma {sigma} must be positive")));
    }
    let mut rng = rng(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// Density of x = ln v: a normal body N(mu, sigma) above the knee and, below
/// it, f(x) ∝ exp(tail_beta · x), i.e. f(ln v) ∝ v^tail_beta, matched
/// continuously at the knee and cut off at the floor. Knee and floor are in log10 v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailedLognormal {
    pub mu: f64,
    pub sigma: f64,
    pub tail_beta: f64,
    pub knee_log10: f64,
    pub floor_log10: f64,
}

pub fn sample_tailed_lognormal(params: &TailedLognormal, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    let TailedLognormal {
        mu,
        sigma,
        tail_beta,
        knee_log10,
        floor_log10,
    } = *params;
    if !(sigma > 0.0 && tail_beta > 0.0 && floor_log10 < knee_log10) {
        return Err(SynthError::InvalidParams(format!("{params:?}")));
    }
    let normal = Normal::new(mu, sigma).map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    let ln10 = std::f64::consts::LN_10;
    let knee = knee_log10 * ln10;
    let span = (knee_log10 - floor_log10) * ln10;
    let z = (knee - mu) / sigma;
    // Masses of the two pieces with the body written as exp(-z²/2) so both
    // share the knee height.
    let knee_height = (-0.5 * z * z).exp();
    let floor_factor = (-tail_beta * span).exp();
    let tail_mass = knee_height * (1.0 - floor_factor) / tail_beta;
    let knee_cdf = normal.cdf(knee);
    let body_mass = sigma * (2.0 * std::f64::consts::PI).sqrt() * (1.0 - knee_cdf);
    let p_tail = tail_mass / (tail_mass + body_mass);

    let mut rng = rng(seed);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let x = if rng.random::<f64>() < p_tail {
                knee + (floor_factor + u * (1.0 - floor_factor)).ln() / tail_beta
            } else {
                let q = knee_cdf + u * (1.0 - knee_cdf);
                normal.inverse_cdf(q.min(1.0 - 1e-16))
            };
            x.exp()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// order flow

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlacementLaw {
    /// P(Δ) ∝ exp(-beta Δ) for Δ ≥ 1, relative to the same-side best.
    Exponential { beta: f64 },
    Uniform { max_delta: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub events: u64,
    /// Target event mix; the cancel share is reached when the book holds
    /// `target_resting` orders (each resting order is cancelled at the same rate).
    pub buy_fraction: f64,
    pub sell_fraction: f64,
    pub cancel_fraction: f64,
    pub target_resting: usize,
    pub placement: PlacementLaw,
    /// Optional (period, boost) weighting of placements at Δ = period·n + 1.
    pub periodic_boost: Option<(usize, f64)>,
    /// Share of limit orders priced at the opposite best.
    pub marketable_fraction: f64,
    /// Share of limit orders placed one tick inside a spread wider than one tick.
    pub improve_fraction: f64,
    pub size_mu: f64,
    pub size_sigma: f64,
    pub lot: u64,
    /// Interval length for the ledger's per-interval event counts.
    pub interval_seconds: u32,
    pub seed: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            events: 10_000,
            buy_fraction: 0.34,
            sell_fraction: 0.34,
            cancel_fraction: 0.32,
            target_resting: 2_000,
            placement: PlacementLaw::Exponential { beta: 0.044 },
            periodic_boost: None,
            marketable_fraction: 0.08,
            improve_fraction: 0.25,
            size_mu: 7.0,
            size_sigma: 0.9,
            lot: 100,
            interval_seconds: 60,
            seed: 1,
        }
    }
}

impl FlowParams {
    fn validate(&self, config: &SessionConfig) -> Result<(), SynthError> {
        let fractions = [
            self.buy_fraction,
            self.sell_fraction,
            self.cancel_fraction,
            self.marketable_fraction,
            self.improve_fraction,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(SynthError::InvalidParams("fractions must lie in [0, 1]".into()));
        }
        let mix = self.buy_fraction + self.sell_fraction + self.cancel_fraction;
        if (mix - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidParams(format!("event mix sums to {mix}, not 1")));
        }
        if self.buy_fraction + self.sell_fraction == 0.0 || self.cancel_fraction >= 1.0 {
            return Err(SynthError::InvalidParams("mix needs some limit orders".into()));
        }
        if self.cancel_fraction > 0.0 && self.target_resting == 0 {
            return Err(SynthError::InvalidParams("target_resting must be positive".into()));
        }
        if !(self.size_sigma >= 0.0) || self.lot == 0 || self.interval_seconds == 0 {
            return Err(SynthError::InvalidParams("size law, lot and interval must be positive".into()));
        }
        if let Some((period, boost)) = self.periodic_boost {
            if period == 0 || !(boost > 0.0) {
                return Err(SynthError::InvalidParams("periodic boost needs period > 0, boost > 0".into()));
            }
        }
        let half_band = (config.band_width() / 2) as f64;
        match self.placement {
            PlacementLaw::Exponential { beta } => {
                if !(beta > 0.0) {
                    return Err(SynthError::InvalidParams(format!("placement rate {beta} must be positive")));
                }
                // Median placement depth beyond half the band means most orders
                // would be priced outside it.
                if std::f64::consts::LN_2 / beta > half_band {
                    return Err(SynthError::BandViolation(format!(
                        "median depth {:.1} ticks exceeds half band {half_band}",
                        std::f64::consts::LN_2 / beta
                    )));
                }
            }
            PlacementLaw::Uniform { max_delta } => {
                if max_delta == 0 {
                    return Err(SynthError::InvalidParams("max_delta must be positive".into()));
                }
                if max_delta > config.band_width() {
                    return Err(SynthError::BandViolation(format!(
                        "max_delta {max_delta} exceeds band width {}",
                        config.band_width()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// What the generator emitted, for checking downstream accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorLedger {
    pub events: u64,
    pub buy_orders: u64,
    pub sell_orders: u64,
    pub cancels: u64,
    pub marketable_orders: u64,
    pub traded_volume: u64,
    pub interval_seconds: u32,
    /// Events per clock interval, indexed like the volume series.
    pub interval_events: Vec<u64>,
    /// Shares placed behind or at the same-side best, by Δ (index 0 is Δ = 1).
    pub buy_placed_by_delta: Vec<u64>,
    pub sell_placed_by_delta: Vec<u64>,
    /// Shares placed strictly inside the spread.
    pub inside_spread_shares: u64,
}

/// Streaming order-flow generator. Yields valid events in wall-time order and
/// keeps a private book so that every cancel names a resting order.
pub struct FlowGenerator {
    params: FlowParams,
    config: SessionConfig,
    book: LimitOrderBook,
    rng: ChaCha8Rng,
    resting: Vec<OrderRef>,
    slots: HashMap<OrderRef, usize>,
    grid: IntervalGrid,
    clock: Vec<(u32, u32)>,
    session_length: u64,
    emitted: u64,
    next_ref: u64,
    cancel_rate: f64,
    ledger: GeneratorLedger,
}

impl FlowGenerator {
    pub fn new(params: FlowParams, config: &SessionConfig) -> Result<Self, SynthError> {
        params.validate(config)?;
        let grid = IntervalGrid::new(config, params.interval_seconds);
        let clock: Vec<(u32, u32)> = if config.session_windows().is_empty() {
            vec![(0, 24 * 3600 * 100 - 1)]
        } else {
            config.session_windows().iter().map(|w| (w.start.0, w.end.0)).collect()
        };
        let session_length = clock.iter().map(|(a, b)| u64::from(b - a)).sum();
        let width = config.band_width();
        let cancel_rate = if params.cancel_fraction > 0.0 {
            params.cancel_fraction / ((1.0 - params.cancel_fraction) * params.target_resting as f64)
        } else {
            0.0
        };
        Ok(FlowGenerator {
            ledger: GeneratorLedger {
                interval_seconds: params.interval_seconds,
                interval_events: vec![0; grid.count()],
                buy_placed_by_delta: vec![0; width],
                sell_placed_by_delta: vec![0; width],
                ..GeneratorLedger::default()
            },
            rng: rng(params.seed),
            params,
            config: config.clone(),
            book: LimitOrderBook::new(config),
            resting: Vec::new(),
            slots: HashMap::new(),
            grid,
            clock,
            session_length,
            emitted: 0,
            next_ref: 1,
            cancel_rate,
        })
    }

    pub fn ledger(&self) -> &GeneratorLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> GeneratorLedger {
        self.ledger
    }

    /// The generator's own copy of the book after the last emitted event.
    pub fn book(&self) -> &LimitOrderBook {
        &self.book
    }

    fn wall_time(&self, i: u64) -> WallTime {
        let mut offset = (u128::from(i) * u128::from(self.session_length) / u128::from(self.params.events.max(1))) as u64;
        for &(start, end) in &self.clock {
            let len = u64::from(end - start);
            if offset <= len {
                return WallTime(start + offset as u32);
            }
            offset -= len;
        }
        WallTime(self.clock.last().map_or(0, |&(_, end)| end))
    }

    fn track(&mut self, r: OrderRef) {
        self.slots.insert(r, self.resting.len());
        self.resting.push(r);
    }

    fn untrack(&mut self, r: OrderRef) {
        if let Some(i) = self.slots.remove(&r) {
            self.resting.swap_remove(i);
            if let Some(&moved) = self.resting.get(i) {
                self.slots.insert(moved, i);
            }
        }
    }

    fn sample_delta(&mut self) -> usize {
        loop {
            let delta = match self.params.placement {
                PlacementLaw::Exponential { beta } => {
                    let u: f64 = 1.0 - self.rng.random::<f64>();
                    1 + (u.ln() / -beta).floor() as usize
                }
                PlacementLaw::Uniform { max_delta } => self.rng.random_range(1..=max_delta),
            };
            match self.params.periodic_boost {
                Some((period, boost)) => {
                    let weight = if delta % period == 1 % period { boost } else { 1.0 };
                    if self.rng.random::<f64>() * boost.max(1.0) < weight {
                        return delta;
                    }
                }
                None => return delta,
            }
        }
    }

    fn sample_size(&mut self) -> u64 {
        let z: f64 = self.rng.sample(StandardNormal);
        let raw = (self.params.size_mu + self.params.size_sigma * z).exp();
        let lots = (raw / self.params.lot as f64).round().max(1.0) as u64;
        lots * self.params.lot
    }

    /// Price for a new limit order on `side`, and the Δ at which it was placed
    /// (0 for inside the spread, `None` when marketable).
    fn place(&mut self, side: Side) -> (i64, Option<usize>) {
        let (lo, hi) = self.config.band();
        let own = self.book.best(side);
        let other = self.book.best(side.opposite());
        let toward = |p: i64, k: i64| match side {
            Side::Buy => p - k,
            Side::Sell => p + k,
        };

        if let Some(opp) = other {
            if self.rng.random::<f64>() < self.params.marketable_fraction {
                return (opp, None);
            }
        }
        if let (Some(o), Some(opp)) = (own, other) {
            if (opp - o).abs() > 1 && self.rng.random::<f64>() < self.params.improve_fraction {
                return (toward(o, -1), Some(0));
            }
        }
        let reference = own
            .or_else(|| other.map(|p| toward(p, 1)))
            .unwrap_or(self.config.prev_close())
            .clamp(lo, hi);
        for _ in 0..64 {
            let delta = self.sample_delta();
            let price = toward(reference, delta as i64 - 1);
            if (lo..=hi).contains(&price) {
                return (price, own.map(|_| delta));
            }
        }
        let edge = match side {
            Side::Buy => lo,
            Side::Sell => hi,
        };
        (edge, own.map(|o| (o - edge).unsigned_abs() as usize + 1))
    }

    fn next_event(&mut self) -> OrderEvent {
        let seq = self.emitted + 1;
        let wall_time = self.wall_time(self.emitted);
        let n = self.resting.len() as f64;
        let cancel_weight = self.cancel_rate * n;
        let p_cancel = cancel_weight / (1.0 + cancel_weight);
        if !self.resting.is_empty() && self.rng.random::<f64>() < p_cancel {
            let pick = self.rng.random_range(0..self.resting.len());
            return OrderEvent::cancel(seq, wall_time, self.resting[pick].0);
        }
        let p_buy = self.params.buy_fraction / (self.params.buy_fraction + self.params.sell_fraction);
        let side = if self.rng.random::<f64>() < p_buy { Side::Buy } else { Side::Sell };
        let (price, placed) = self.place(side);
        let size = self.sample_size();
        let order_ref = self.next_ref;
        self.next_ref += 1;
        match placed {
            None => self.ledger.marketable_orders += 1,
            Some(0) => self.ledger.inside_spread_shares += size,
            Some(delta) => {
                let by_delta = match side {
                    Side::Buy => &mut self.ledger.buy_placed_by_delta,
                    Side::Sell => &mut self.ledger.sell_placed_by_delta,
                };
                if let Some(slot) = by_delta.get_mut(delta - 1) {
                    *slot += size;
                }
            }
        }
        OrderEvent::limit(seq, wall_time, side, order_ref, size, price)
    }
}

impl Iterator for FlowGenerator {
    type Item = OrderEvent;

    fn next(&mut self) -> Option<OrderEvent> {
        if self.emitted >= self.params.events {
            return None;
        }
        let event = self.next_event();
        let delta = self
            .book
            .apply_event(&event)
            .expect("generated events are valid for the generator's own book");
        for fill in &delta.trades {
            if !self.book.contains(fill.resting_ref) {
                self.untrack(fill.resting_ref);
            }
        }
        match event.kind.side() {
            None => {
                self.untrack(event.order_ref);
                self.ledger.cancels += 1;
            }
            Some(side) => {
                if delta.added > 0 {
                    self.track(event.order_ref);
                }
                match side {
                    Side::Buy => self.ledger.buy_orders += 1,
                    Side::Sell => self.ledger.sell_orders += 1,
                }
            }
        }
        self.ledger.traded_volume += delta.traded();
        if let Some(i) = self.grid.index_of(event.wall_time) {
            self.ledger.interval_events[i] += 1;
        }
        self.ledger.events += 1;
        self.emitted += 1;
        Some(event)
    }
}

/// Generates a whole stream in memory.
pub fn generate_order_flow(
    params: &FlowParams,
    config: &SessionConfig,
) -> Result<(Vec<OrderEvent>, GeneratorLedger), SynthError> {
    let mut generator = FlowGenerator::new(*params, config)?;
    let events: Vec<OrderEvent> = generator.by_ref().collect();
    Ok((events, generator.into_ledger()))
}

/// Deliberately corrupt records mixed into a rendered stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvalidInjection {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub malformed: u64,
    pub off_grid: u64,
    pub out_of_band: u64,
}

impl InjectionReport {
    pub fn total(&self) -> u64 {
        self.malformed + self.off_grid + self.out_of_band
    }
}

/// Writes events in the wire format, optionally interleaving invalid records
/// that carry the preceding event's timestamp.
pub fn write_flow_csv<W: Write>(
    events: impl IntoIterator<Item = OrderEvent>,
    config: &SessionConfig,
    mut out: W,
    injection: Option<InvalidInjection>,
) -> io::Result<InjectionReport> {
    let mut report = InjectionReport::default();
    let mut inject_rng = injection.map(|i| rng(i.seed));
    let (_, hi) = config.band();
    writeln!(out, "{WIRE_HEADER}")?;
    for event in events {
        writeln!(out, "{}", format_event_record(&event, config))?;
        if let (Some(inj), Some(r)) = (injection, inject_rng.as_mut()) {
            if r.random::<f64>() < inj.fraction {
                let t = event.wall_time;
                match r.random_range(0..3) {
                    0 => {
                        writeln!(out, "{},{t},B,0,0,{}", event.seq, config.format_price(config.prev_close()))?;
                        report.malformed += 1;
                    }
                    1 => {
                        let base = config.format_price(config.prev_close());
                        writeln!(out, "{},{t},S,0,100,{base}0001", event.seq)?;
                        report.off_grid += 1;
                    }
                    _ => {
                        writeln!(out, "{},{t},S,0,100,{}", event.seq, config.format_price(hi + 1))?;
                        report.out_of_band += 1;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{detect_periodic_peaks, fit_exponential_tail, locate_maximum, PeakConfig};

    #[test]
    fn fgn_rejects_bad_params() {
        assert!(generate_fgn(&FgnParams { hurst: 1.0, n: 64, seed: 0 }).is_err());
        assert!(generate_fgn(&FgnParams { hurst: 0.7, n: 100, seed: 0 }).is_err());
    }

    #[test]
    fn fgn_is_seed_deterministic() {
        let p = FgnParams { hurst: 0.8, n: 1024, seed: 42 };
        assert_eq!(generate_fgn(&p).unwrap(), generate_fgn(&p).unwrap());
        let q = FgnParams { seed: 43, ..p };
        assert_ne!(generate_fgn(&p).unwrap(), generate_fgn(&q).unwrap());
    }

    #[test]
    fn autocovariance_values() {
        assert_eq!(fgn_autocovariance(0.8, 0), 1.0);
        assert!((fgn_autocovariance(0.8, 1) - (2f64.powf(1.6) / 2.0 - 1.0)).abs() < 1e-15);
        assert!(fgn_autocovariance(0.5, 3).abs() < 1e-15);
    }

    #[test]
    fn planted_fixtures_plant_what_they_claim() {
        let exp = generate_planted_shape(&PlantedShape::new(
            Side::Sell,
            300,
            ShapeProfile::Exponential { amplitude: 5e4, beta: 0.025 },
        ))
        .unwrap();
        let fit = fit_exponential_tail(&exp, (1, 300)).unwrap();
        assert!((fit.beta - 0.025).abs() / 0.025 < 1e-10);

        let mode = generate_planted_shape(&PlantedShape::new(
            Side::Sell,
            60,
            ShapeProfile::Mode { amplitude: 1e4, delta_max: 11, beta: 0.2 },
        ))
        .unwrap();
        assert_eq!(locate_maximum(&mode), 11);

        let mut periodic = PlantedShape::new(Side::Buy, 100, ShapeProfile::Exponential { amplitude: 1e4, beta: 0.044 });
        periodic.periodic_boost = Some((5, 1.3));
        let report = detect_periodic_peaks(&generate_planted_shape(&periodic).unwrap(), PeakConfig::default()).unwrap();
        assert!(report.has_peaks);

        let mut cut = PlantedShape::new(Side::Buy, 50, ShapeProfile::Flat { level: 1.0 });
        cut.truncate_after = Some(40);
        let s = generate_planted_shape(&cut).unwrap();
        assert_eq!(s.v(40), 1.0);
        assert_eq!(s.v(41), 0.0);
    }

    #[test]
    fn flow_is_deterministic_and_valid() {
        let config = SessionConfig::default();
        let params = FlowParams { events: 1_000, seed: 9, ..FlowParams::default() };
        let (a, ledger) = generate_order_flow(&params, &config).unwrap();
        let (b, _) = generate_order_flow(&params, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ledger.events, 1_000);
        assert_eq!(ledger.buy_orders + ledger.sell_orders + ledger.cancels, 1_000);
        assert_eq!(ledger.interval_events.iter().sum::<u64>(), 1_000);
        assert!(a.windows(2).all(|w| w[0].wall_time <= w[1].wall_time));
        let mut book = LimitOrderBook::new(&config);
        for e in &a {
            assert!(config.in_session(e.wall_time));
            book.apply_event(e).unwrap();
        }
        book.check_invariants().unwrap();
    }

    #[test]
    fn flow_param_validation() {
        let config = SessionConfig::default();
        let bad_mix = FlowParams { buy_fraction: 0.5, ..FlowParams::default() };
        assert!(matches!(FlowGenerator::new(bad_mix, &config), Err(SynthError::InvalidParams(_))));
        let too_wide = FlowParams { placement: PlacementLaw::Uniform { max_delta: 500 }, ..FlowParams::default() };
        assert!(matches!(FlowGenerator::new(too_wide, &config), Err(SynthError::BandViolation(_))));
        let too_slow = FlowParams { placement: PlacementLaw::Exponential { beta: 0.001 }, ..FlowParams::default() };
        assert!(matches!(FlowGenerator::new(too_slow, &config), Err(SynthError::BandViolation(_))));
    }

    #[test]
    fn tailed_sampler_is_deterministic() {
        let p = TailedLognormal { mu: 9.0, sigma: 0.8, tail_beta: 4.19, knee_log10: 3.5, floor_log10: 1.5 };
        let a = sample_tailed_lognormal(&p, 1000, 3).unwrap();
        assert_eq!(a, sample_tailed_lognormal(&p, 1000, 3).unwrap());
        let floor = 10f64.powf(1.5);
        assert!(a.iter().all(|&v| v >= floor * 0.999_999));
    }
}
