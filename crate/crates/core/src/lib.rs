//! Limit-order-book reconstruction from an order-flow event stream, plus the
//! statistics computed on top of the rebuilt book: averaged shape functions,
//! virtual price impact, clock-time volume series, distribution fits and
//! detrended fluctuation analysis.
//!
//! The crate is organised bottom-up:
//!
//! - [`orderflow`]: wire-format parsing, validation and stream accounting.
//! - [`book`]: the price-time priority matching engine and its snapshots.
//! - [`shape`]: event-time averaged shape, dispersion, tail fits, peak detection.
//! - [`volstats`]: per-level volume series, lognormal / power-law fits, ACF, DFA.
//! - [`synthgen`]: seeded generators that stand in for proprietary market data.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod book;
pub mod orderflow;
pub mod regression;
pub mod shape;
pub mod synthgen;
pub mod volstats;

#[cfg(feature = "reference")]
pub mod reference;

pub use book::{BookDelta, BookError, Fill, Impact, LimitOrderBook, ShapeSnapshot};
pub use orderflow::{
    EventKind, OrderEvent, OrderRef, Rejection, RejectReason, SessionConfig, Side, StreamReport,
    WallTime,
};
pub use shape::{AveragedShape, ExponentialFit, PeakReport, ShapeAccumulator};
pub use volstats::{DfaConfig, DfaResult, LogHistogram, LognormalFit, PowerLawTailFit, VolumeSeries};
