//! Event-time averaged book shape, its dispersion, the exponential tail fit and
//! detection of periodic peaks in the shape.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{LimitOrderBook, ShapeSnapshot};
use crate::orderflow::Side;
use crate::regression::{ols, RegressionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("no snapshots to average")]
    Empty,
    #[error("snapshot for {got_side} side with depth {got_depth} does not match accumulator ({side}, {depth})")]
    Mismatch {
        side: Side,
        depth: usize,
        got_side: Side,
        got_depth: usize,
    },
    #[error("fit range [{lo}, {hi}] invalid for depth {depth} (need 1 <= lo, hi <= depth, at least 3 levels)")]
    BadRange { lo: usize, hi: usize, depth: usize },
    #[error("V({delta}) = {value} is not positive; cannot take its logarithm")]
    NonPositive { delta: usize, value: f64 },
    #[error("shape depth {depth} too small for period {period} (need {needed})")]
    TooShallow { depth: usize, period: usize, needed: usize },
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Mean and population standard deviation of V(Δ, t) over event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedShape {
    pub side: Side,
    /// `mean[k]` is V(Δ = k + 1).
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Number of snapshots averaged.
    pub m: u64,
}

impl AveragedShape {
    pub fn depth(&self) -> usize {
        self.mean.len()
    }

    /// Mean volume at 1-based level `delta`.
    pub fn v(&self, delta: usize) -> f64 {
        self.mean[delta - 1]
    }

    /// Builds a shape directly from mean values (sigma zero, M = 1).
    pub fn from_means(side: Side, mean: Vec<f64>) -> Self {
        let sigma = vec![0.0; mean.len()];
        AveragedShape {
            side,
            mean,
            sigma,
            m: 1,
        }
    }
}

/// Streaming reduction of shape snapshots into exact integer sums.
///
/// Sums of V are kept in `u64` and sums of V² in `u128`, so the variance is
/// formed as `M·ΣV² − (ΣV)²` without cancellation. Accumulators over disjoint
/// snapshot sets can be merged in any order with identical results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeAccumulator {
    side: Side,
    count: u64,
    sum: Vec<u64>,
    sum_sq: Vec<u128>,
}

impl ShapeAccumulator {
    pub fn new(side: Side, depth: usize) -> Self {
        ShapeAccumulator {
            side,
            count: 0,
            sum: vec![0; depth],
            sum_sq: vec![0; depth],
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn depth(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    #[inline]
    fn add_level(&mut self, delta: usize, volume: u64) {
        let i = delta - 1;
        self.sum[i] += volume;
        self.sum_sq[i] += u128::from(volume) * u128::from(volume);
    }

    pub fn add(&mut self, snapshot: &ShapeSnapshot) -> Result<(), ShapeError> {
        if snapshot.side != self.side || snapshot.depth() != self.depth() {
            return Err(ShapeError::Mismatch {
                side: self.side,
                depth: self.depth(),
                got_side: snapshot.side,
                got_depth: snapshot.depth(),
            });
        }
        self.count += 1;
        for (k, &v) in snapshot.volumes.iter().enumerate() {
            if v != 0 {
                self.add_level(k + 1, v);
            }
        }
        Ok(())
    }

    /// Adds the book's current profile on this accumulator's side without
    /// materialising a snapshot; touches only occupied levels.
    pub fn add_book(&mut self, book: &LimitOrderBook) {
        self.count += 1;
        let depth = self.depth();
        book.for_each_level(self.side, depth, |delta, v| self.add_level(delta, v));
    }

    pub fn merge(&mut self, other: &ShapeAccumulator) -> Result<(), ShapeError> {
        if other.side != self.side || other.depth() != self.depth() {
            return Err(ShapeError::Mismatch {
                side: self.side,
                depth: self.depth(),
                got_side: other.side,
                got_depth: other.depth(),
            });
        }
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<AveragedShape, ShapeError> {
        if self.count == 0 {
            return Err(ShapeError::Empty);
        }
        let m = self.count;
        let mf = m as f64;
        let mean = self.sum.iter().map(|&s| s as f64 / mf).collect();
        let sigma = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(&s, &sq)| {
                let s = u128::from(s);
                let numerator = u128::from(m) * sq - s * s;
                (numerator as f64).sqrt() / mf
            })
            .collect();
        Ok(AveragedShape {
            side: self.side,
            mean,
            sigma,
            m,
        })
    }
}

/// Averages a stream of same-side, same-depth snapshots.
pub fn average_shape<'a>(
    snapshots: impl IntoIterator<Item = &'a ShapeSnapshot>,
) -> Result<AveragedShape, ShapeError> {
    let mut iter = snapshots.into_iter();
    let first = iter.next().ok_or(ShapeError::Empty)?;
    let mut acc = ShapeAccumulator::new(first.side, first.depth());
    acc.add(first)?;
    for s in iter {
        acc.add(s)?;
    }
    acc.finish()
}

/// Smallest Δ attaining the maximum mean volume.
pub fn locate_maximum(shape: &AveragedShape) -> usize {
    let mut best = 0;
    for (i, &v) in shape.mean.iter().enumerate() {
        if v > shape.mean[best] {
            best = i;
        }
    }
    best + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    /// Decay rate per tick in V(Δ) ∝ exp(-beta Δ).
    pub beta: f64,
    #[serde(rename = "stderr")]
    pub beta_stderr: f64,
    #[serde(rename = "range")]
    pub fit_range: (usize, usize),
    #[serde(rename = "r2")]
    pub r_squared: f64,
}

/// Least-squares fit of ln V(Δ) against Δ over the inclusive level range.
pub fn fit_exponential_tail(
    shape: &AveragedShape,
    fit_range: (usize, usize),
) -> Result<ExponentialFit, ShapeError> {
    let (lo, hi) = fit_range;
    let depth = shape.depth();
    if lo < 1 || hi > depth || hi < lo + 2 {
        return Err(ShapeError::BadRange { lo, hi, depth });
    }
    let mut x = Vec::with_capacity(hi - lo + 1);
    let mut y = Vec::with_capacity(hi - lo + 1);
    for delta in lo..=hi {
        let v = shape.v(delta);
        if !(v > 0.0) {
            return Err(ShapeError::NonPositive { delta, value: v });
        }
        x.push(delta as f64);
        y.push(v.ln());
    }
    let fit = ols(&x, &y)?;
    Ok(ExponentialFit {
        beta: -fit.slope,
        beta_stderr: fit.slope_stderr,
        fit_range,
        r_squared: fit.r_squared,
    })
}

/// Suggested tail window: from the shape's maximum to the last positive level,
/// trimmed by 5% of the support (at least one level) to stay clear of the
/// abrupt drop at the price-band edge. `None` if fewer than 3 levels remain.
pub fn default_tail_range(shape: &AveragedShape) -> Option<(usize, usize)> {
    let lo = locate_maximum(shape);
    let last = shape.mean.iter().rposition(|&v| v > 0.0)? + 1;
    let trim = (last / 20).max(1);
    let hi = last.checked_sub(trim)?;
    (hi >= lo + 2).then_some((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    pub period: usize,
    /// Geometric-mean ratio above which the shape is said to have peaks.
    pub threshold: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            period: 5,
            threshold: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub period: usize,
    pub threshold: f64,
    /// Levels Δ = period·n + 1 (n ≥ 1) that had two positive-mean neighbours.
    pub positions: Vec<usize>,
    /// V(Δ) / mean(V(Δ-1), V(Δ+1)) at each position.
    pub ratios: Vec<f64>,
    /// Geometric mean of `ratios`; 1.0 when no position qualified.
    pub mean_ratio: f64,
    pub has_peaks: bool,
}

/// Compares V at Δ = period·n + 1 with the average of its two neighbours.
///
/// Δ = 1 has no left neighbour and is skipped. Positions where V or the
/// neighbour mean is zero are skipped too.
pub fn detect_periodic_peaks(shape: &AveragedShape, config: PeakConfig) -> Result<PeakReport, ShapeError> {
    let depth = shape.depth();
    let needed = 2 * config.period + 1;
    if config.period == 0 || depth < needed {
        return Err(ShapeError::TooShallow {
            depth,
            period: config.period,
            needed,
        });
    }
    let mut positions = Vec::new();
    let mut ratios = Vec::new();
    let mut delta = config.period + 1;
    while delta < depth {
        let neighbours = 0.5 * (shape.v(delta - 1) + shape.v(delta + 1));
        let v = shape.v(delta);
        if neighbours > 0.0 && v > 0.0 {
            positions.push(delta);
            ratios.push(v / neighbours);
        }
        delta += config.period;
    }
    let mean_ratio = if ratios.is_empty() {
        1.0
    } else {
        (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp()
    };
    Ok(PeakReport {
        period: config.period,
        threshold: config.threshold,
        positions,
        ratios,
        mean_ratio,
        has_peaks: mean_ratio > config.threshold,
    })
}
