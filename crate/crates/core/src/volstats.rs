//! Statistics of the volume resting at a fixed relative level: clock-time
//! averaged series, the distribution of ln v, and temporal dependence (ACF and
//! detrended fluctuation analysis).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::book::{LimitOrderBook, ShapeSnapshot};
use crate::orderflow::{SessionConfig, SessionWindow, Side, WallTime};
use crate::regression::{ols, RegressionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VolStatsError {
    #[error("need at least {needed} positive values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("all values are equal; the distribution is degenerate")]
    Degenerate,
    #[error("fit range [{lo}, {hi}] is empty")]
    EmptyRange { lo: f64, hi: f64 },
    #[error("only {got} usable points inside the fit range (need 3)")]
    InsufficientPoints { got: usize },
    #[error("series of length {len} too short (need {needed})")]
    TooShort { len: usize, needed: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("fluctuation function vanishes at box size {ell}")]
    ZeroFluctuation { ell: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Per-interval mean of V(Δ, t) at one level, over fixed clock intervals.
///
/// Intervals in which no event occurred are listed in `gaps` and carry no
/// value; `values[i]` belongs to interval `indices[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSeries {
    pub side: Side,
    pub delta: usize,
    pub dt_seconds: u32,
    pub interval_count: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub gaps: Vec<usize>,
}

impl VolumeSeries {
    /// Gap-free values with zero volumes removed, and how many zeros were dropped.
    pub fn positive_values(&self) -> (Vec<f64>, usize) {
        let kept: Vec<f64> = self.values.iter().copied().filter(|&v| v > 0.0).collect();
        let dropped = self.values.len() - kept.len();
        (kept, dropped)
    }
}

/// Consecutive clock intervals over the session windows, numbered across
/// windows without gaps for the break between them.
#[derive(Debug, Clone)]
pub struct IntervalGrid {
    windows: Vec<(SessionWindow, usize)>,
    dt: u32,
    count: usize,
}

impl IntervalGrid {
    pub fn new(session: &SessionConfig, dt_seconds: u32) -> Self {
        let dt = dt_seconds * WallTime::CENTIS_PER_SECOND;
        let whole_day = [SessionWindow {
            start: WallTime(0),
            end: WallTime(24 * 3600 * 100 - 1),
        }];
        let source = if session.session_windows().is_empty() {
            &whole_day[..]
        } else {
            session.session_windows()
        };
        let mut windows = Vec::with_capacity(source.len());
        let mut count = 0;
        for &w in source {
            windows.push((w, count));
            count += (w.end.0 - w.start.0).div_ceil(dt) as usize;
        }
        IntervalGrid { windows, dt, count }
    }

    /// Intervals are right-closed, (start + k·dt, start + (k+1)·dt]; the window
    /// opening instant joins the first interval.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn index_of(&self, t: WallTime) -> Option<usize> {
        let (w, offset) = self.windows.iter().find(|(w, _)| w.contains(t))?;
        let elapsed = t.0 - w.start.0;
        let k = elapsed.div_ceil(self.dt).saturating_sub(1) as usize;
        Some(offset + k)
    }
}

/// Incremental builder for a [`VolumeSeries`]; feed one observation per event.
#[derive(Debug, Clone)]
pub struct VolumeSeriesBuilder {
    side: Side,
    delta: usize,
    dt_seconds: u32,
    grid: IntervalGrid,
    sums: Vec<u128>,
    counts: Vec<u64>,
    outside: u64,
}

impl VolumeSeriesBuilder {
    pub fn new(side: Side, delta: usize, dt_seconds: u32, session: &SessionConfig) -> Result<Self, VolStatsError> {
        if dt_seconds == 0 {
            return Err(VolStatsError::InvalidConfig("dt must be positive".into()));
        }
        if delta == 0 {
            return Err(VolStatsError::InvalidConfig("delta is 1-based".into()));
        }
        let grid = IntervalGrid::new(session, dt_seconds);
        Ok(VolumeSeriesBuilder {
            side,
            delta,
            dt_seconds,
            sums: vec![0; grid.count],
            counts: vec![0; grid.count],
            grid,
            outside: 0,
        })
    }

    pub fn push(&mut self, wall_time: WallTime, volume: u64) {
        match self.grid.index_of(wall_time) {
            Some(i) => {
                self.sums[i] += u128::from(volume);
                self.counts[i] += 1;
            }
            None => self.outside += 1,
        }
    }

    pub fn push_snapshot(&mut self, snapshot: &ShapeSnapshot) {
        self.push(snapshot.wall_time, snapshot.volume(self.delta));
    }

    /// Records V(Δ) of the book's current state at its last event time.
    pub fn push_book(&mut self, book: &LimitOrderBook) {
        let mut volume = 0;
        book.for_each_level(self.side, self.delta, |d, v| {
            if d == self.delta {
                volume = v;
            }
        });
        self.push(book.wall_time(), volume);
    }

    /// Observations whose time fell outside every session window.
    pub fn outside_session(&self) -> u64 {
        self.outside
    }

    pub fn finish(self) -> VolumeSeries {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut gaps = Vec::new();
        for (i, (&s, &n)) in self.sums.iter().zip(&self.counts).enumerate() {
            if n == 0 {
                gaps.push(i);
            } else {
                indices.push(i);
                values.push(s as f64 / n as f64);
            }
        }
        VolumeSeries {
            side: self.side,
            delta: self.delta,
            dt_seconds: self.dt_seconds,
            interval_count: self.grid.count,
            indices,
            values,
            gaps,
        }
    }
}

/// Averages V(Δ, t_i) over the events in each clock interval of length `dt_seconds`.
pub fn minute_average_volumes<'a>(
    snapshots: impl IntoIterator<Item = &'a ShapeSnapshot>,
    side: Side,
    delta: usize,
    dt_seconds: u32,
    session: &SessionConfig,
) -> Result<VolumeSeries, VolStatsError> {
    let mut builder = VolumeSeriesBuilder::new(side, delta, dt_seconds, session)?;
    for s in snapshots {
        builder.push_snapshot(s);
    }
    Ok(builder.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    FreedmanDiaconis,
    Count(usize),
    Width(f64),
}

/// Equal-width histogram density of ln v.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHistogram {
    /// Left edge of the first bin, in ln v.
    pub origin: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub n: usize,
    /// Non-positive values that were excluded.
    pub dropped: usize,
}

impl LogHistogram {
    pub fn center(&self, bin: usize) -> f64 {
        self.origin + (bin as f64 + 0.5) * self.bin_width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.center(i)).collect()
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(&next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// Histogram of ln v for the positive entries of `values`.
///
/// A sample with no spread gets a single bin of width 1 centred on its value.
pub fn empirical_log_pdf(values: &[f64], binning: Binning) -> Result<LogHistogram, VolStatsError> {
    let mut logs: Vec<f64> = values.iter().filter(|&&v| v > 0.0 && v.is_finite()).map(|v| v.ln()).collect();
    let dropped = values.len() - logs.len();
    if logs.len() < 2 {
        return Err(VolStatsError::TooFewValues {
            needed: 2,
            got: logs.len(),
        });
    }
    logs.sort_by(f64::total_cmp);
    let n = logs.len();
    let (min, max) = (logs[0], logs[n - 1]);
    let range = max - min;

    let (origin, width, bins) = if range == 0.0 {
        (min - 0.5, 1.0, 1)
    } else {
        let width = match binning {
            Binning::Count(k) if k > 0 => range / k as f64,
            Binning::Count(_) => return Err(VolStatsError::InvalidConfig("bin count must be positive".into())),
            Binning::Width(w) if w > 0.0 && w.is_finite() => w,
            Binning::Width(w) => return Err(VolStatsError::InvalidConfig(format!("bad bin width {w}"))),
            Binning::FreedmanDiaconis => {
                let iqr = quantile(&logs, 0.75) - quantile(&logs, 0.25);
                let w = 2.0 * iqr * (n as f64).powf(-1.0 / 3.0);
                if w > 0.0 {
                    w
                } else {
                    range / (n as f64).sqrt().ceil()
                }
            }
        };
        let bins = match binning {
            Binning::Count(k) => k,
            _ => ((range / width).ceil() as usize).max(1),
        };
        (min, width, bins)
    };

    let mut counts = vec![0u64; bins];
    for &x in &logs {
        let i = (((x - origin) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let norm = n as f64 * width;
    let density = counts.iter().map(|&c| c as f64 / norm).collect();
    Ok(LogHistogram {
        origin,
        bin_width: width,
        counts,
        density,
        n,
        dropped,
    })
}

/// Normal fit to ln v, i.e. a lognormal fit to v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalFit {
    pub mu: f64,
    pub sigma_ln: f64,
    /// Kolmogorov-Smirnov distance between ln v and Normal(mu, sigma_ln).
    pub ks_distance: f64,
    pub n: usize,
    pub dropped: usize,
}

impl LognormalFit {
    /// Density f(ln v) of the fitted normal at `x = ln v`.
    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma_ln;
        (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * self.sigma_ln)
    }

    /// Density of v itself: f(ln v) / v.
    pub fn pdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else {
            self.log_density(v.ln()) / v
        }
    }

    pub fn log_cdf(&self, x: f64) -> f64 {
        0.5 * erfc(-(x - self.mu) / (self.sigma_ln * std::f64::consts::SQRT_2))
    }
}

/// Maximum-likelihood lognormal fit: mean and (1/n) standard deviation of ln v.
pub fn fit_lognormal(values: &[f64]) -> Result<LognormalFit, VolStatsError> {
    let mut logs: Vec<f64> = values.iter().filter(|&&v| v > 0.0 && v.is_finite()).map(|v| v.ln()).collect();
    let dropped = values.len() - logs.len();
    let n = logs.len();
    if n < 30 {
        return Err(VolStatsError::TooFewValues { needed: 30, got: n });
    }
    if logs.iter().all(|&x| x == logs[0]) {
        return Err(VolStatsError::Degenerate);
    }
    let nf = n as f64;
    let mu = logs.iter().sum::<f64>() / nf;
    let sigma_ln = (logs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / nf).sqrt();
    let mut fit = LognormalFit {
        mu,
        sigma_ln,
        ks_distance: 0.0,
        n,
        dropped,
    };
    logs.sort_by(f64::total_cmp);
    fit.ks_distance = logs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = fit.log_cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Power-law slope of the left tail of f(ln v).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawTailFit {
    /// Exponent in f(ln v) ∝ v^beta.
    pub beta_delta: f64,
    pub stderr: f64,
    /// Open window in log10 v.
    pub fit_range: (f64, f64),
    pub bins_used: usize,
    pub r_squared: f64,
}

/// Regresses ln f(ln v) on ln v over histogram bins whose centre lies strictly
/// inside the log10 window; empty bins are skipped.
pub fn fit_left_tail_powerlaw(
    histogram: &LogHistogram,
    fit_range: (f64, f64),
) -> Result<PowerLawTailFit, VolStatsError> {
    let (lo, hi) = fit_range;
    if !(lo < hi) {
        return Err(VolStatsError::EmptyRange { lo, hi });
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, &d) in histogram.density.iter().enumerate() {
        let c = histogram.center(i);
        let log10v = c / std::f64::consts::LN_10;
        if log10v > lo && log10v < hi && d > 0.0 {
            x.push(c);
            y.push(d.ln());
        }
    }
    if x.len() < 3 {
        return Err(VolStatsError::InsufficientPoints { got: x.len() });
    }
    let fit = ols(&x, &y)?;
    Ok(PowerLawTailFit {
        beta_delta: fit.slope,
        stderr: fit.slope_stderr,
        fit_range,
        bins_used: x.len(),
        r_squared: fit.r_squared,
    })
}

/// Biased sample autocorrelation C(0..=max_lag) with C(0) = 1.
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Result<Vec<f64>, VolStatsError> {
    let n = values.len();
    if n <= max_lag {
        return Err(VolStatsError::TooShort {
            len: n,
            needed: max_lag + 1,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    if c0 == 0.0 {
        return Err(VolStatsError::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|lag| {
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / c0
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcfDecayFit {
    /// Exponent in C(ℓ) ∝ ℓ^(-gamma).
    pub gamma: f64,
    pub stderr: f64,
    pub lag_range: (usize, usize),
    pub lags_used: usize,
}

/// Log-log slope of the ACF over an inclusive lag window; non-positive lags are skipped.
pub fn fit_acf_decay(acf: &[f64], lag_range: (usize, usize)) -> Result<AcfDecayFit, VolStatsError> {
    let (lo, hi) = lag_range;
    if lo == 0 || hi >= acf.len() || lo > hi {
        return Err(VolStatsError::EmptyRange {
            lo: lo as f64,
            hi: hi as f64,
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = (lo..=hi)
        .filter(|&l| acf[l] > 0.0)
        .map(|l| ((l as f64).ln(), acf[l].ln()))
        .unzip();
    if x.len() < 3 {
        return Err(VolStatsError::InsufficientPoints { got: x.len() });
    }
    let fit = ols(&x, &y)?;
    Ok(AcfDecayFit {
        gamma: -fit.slope,
        stderr: fit.slope_stderr,
        lag_range,
        lags_used: x.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfaConfig {
    pub min_box: usize,
    /// Largest box; `None` means n / 4.
    pub max_box: Option<usize>,
    /// Geometric step between consecutive box sizes.
    pub ratio: f64,
    /// Polynomial detrending order (1 = DFA1).
    pub order: usize,
    /// Inclusive box-size window for the Hurst fit; `None` picks the central decade.
    pub fit_range: Option<(usize, usize)>,
}

impl Default for DfaConfig {
    fn default() -> Self {
        DfaConfig {
            min_box: 8,
            max_box: None,
            ratio: 2f64.powf(0.25),
            order: 1,
            fit_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaResult {
    pub box_sizes: Vec<usize>,
    pub fluctuation: Vec<f64>,
    pub hurst: f64,
    pub hurst_stderr: f64,
    pub fit_range: (usize, usize),
    /// Autocorrelation exponent implied by the Hurst index, 2 - 2H.
    pub gamma: f64,
    pub order: usize,
}

/// Geometric grid of distinct integer box sizes in `[min_box, max_box]`.
pub fn box_sizes(n: usize, config: &DfaConfig) -> Vec<usize> {
    let max_box = config.max_box.unwrap_or(n / 4);
    let mut sizes = Vec::new();
    let mut s = config.min_box as f64;
    loop {
        let l = s.round() as usize;
        if l > max_box {
            break;
        }
        if sizes.last() != Some(&l) {
            sizes.push(l);
        }
        s *= config.ratio;
    }
    sizes
}

/// One decade of box sizes centred (geometrically) on the grid, or the whole
/// grid when it spans less than a decade.
fn central_decade(sizes: &[usize]) -> (usize, usize) {
    let (first, last) = (sizes[0], sizes[sizes.len() - 1]);
    if (last as f64) < 10.0 * first as f64 {
        return (first, last);
    }
    let center = ((first as f64).ln() + (last as f64).ln()) / 2.0;
    let half = 10f64.ln() / 2.0;
    let lo = (center - half).exp();
    let hi = (center + half).exp();
    let lo = sizes.iter().copied().find(|&l| l as f64 >= lo - 1e-9).unwrap_or(first);
    let hi = sizes.iter().copied().rev().find(|&l| l as f64 <= hi + 1e-9).unwrap_or(last);
    (lo, hi)
}

/// Orthonormal basis of polynomials up to `order` on the points 0..len.
fn polynomial_basis(len: usize, order: usize) -> Vec<Vec<f64>> {
    let mid = (len as f64 - 1.0) / 2.0;
    let scale = len as f64;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for p in 0..=order {
        let mut v: Vec<f64> = (0..len).map(|i| ((i as f64 - mid) / scale).powi(p as i32)).collect();
        // Two passes of modified Gram-Schmidt keep the basis orthogonal to rounding.
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
}

fn residual_sum_squares(segment: &[f64], basis: &[Vec<f64>], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(segment);
    for q in basis {
        let c: f64 = q.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
        scratch.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
    }
    scratch.iter().map(|x| x * x).sum()
}

/// F(ℓ): RMS residual of the detrended profile over 2⌊n/ℓ⌋ boxes taken from
/// both ends of the series.
fn fluctuation(profile: &[f64], ell: usize, order: usize) -> f64 {
    let n = profile.len();
    let boxes = n / ell;
    let basis = polynomial_basis(ell, order);
    let mut scratch = Vec::with_capacity(ell);
    let mut total = 0.0;
    for j in 0..boxes {
        total += residual_sum_squares(&profile[j * ell..(j + 1) * ell], &basis, &mut scratch);
        total += residual_sum_squares(&profile[n - (j + 1) * ell..n - j * ell], &basis, &mut scratch);
    }
    (total / (2 * boxes * ell) as f64).sqrt()
}

/// Detrended fluctuation analysis of `values`.
pub fn dfa(values: &[f64], config: &DfaConfig) -> Result<DfaResult, VolStatsError> {
    if config.min_box < config.order + 2 {
        return Err(VolStatsError::InvalidConfig(format!(
            "min_box {} too small for detrending order {}",
            config.min_box, config.order
        )));
    }
    if !(config.ratio > 1.0) {
        return Err(VolStatsError::InvalidConfig(format!("box ratio {} must exceed 1", config.ratio)));
    }
    let n = values.len();
    let needed = 4 * config.min_box;
    if n < needed {
        return Err(VolStatsError::TooShort { len: n, needed });
    }
    let sizes = box_sizes(n, config);
    if sizes.len() < 3 {
        return Err(VolStatsError::TooShort { len: n, needed });
    }

    let mean = values.iter().sum::<f64>() / n as f64;
    let profile: Vec<f64> = values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v - mean;
            Some(*acc)
        })
        .collect();

    let fluct: Vec<f64> = sizes.par_iter().map(|&ell| fluctuation(&profile, ell, config.order)).collect();

    let fit_range = config.fit_range.unwrap_or_else(|| central_decade(&sizes));
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&ell, &f) in sizes.iter().zip(&fluct) {
        if ell >= fit_range.0 && ell <= fit_range.1 {
            if !(f > 0.0) {
                return Err(VolStatsError::ZeroFluctuation { ell });
            }
            x.push((ell as f64).ln());
            y.push(f.ln());
        }
    }
    if x.len() < 3 {
        return Err(VolStatsError::InsufficientPoints { got: x.len() });
    }
    let fit = ols(&x, &y)?;
    Ok(DfaResult {
        box_sizes: sizes,
        fluctuation: fluct,
        hurst: fit.slope,
        hurst_stderr: fit.slope_stderr,
        fit_range,
        gamma: 2.0 - 2.0 * fit.slope,
        order: config.order,
    })
}
