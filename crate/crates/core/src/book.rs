//! Two-sided limit-order book under price-time priority.
//!
//! Incoming limit orders that reach the opposite best trade immediately at the
//! resting orders' prices, best price first and oldest order first within a
//! price; any unfilled remainder rests at its limit. Cancels remove whatever is
//! left of the referenced order.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orderflow::{EventKind, OrderEvent, OrderRef, SessionConfig, Side, WallTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BookError {
    #[error("cancel references unknown order {0}")]
    CancelUnknown(OrderRef),
    #[error("order reference {0} is already resting")]
    DuplicateRef(OrderRef),
    #[error("limit order {0} has zero size")]
    ZeroSize(OrderRef),
    #[error("price {price} outside band [{lo}, {hi}]")]
    OutOfBand { price: i64, lo: i64, hi: i64 },
    #[error("no resting liquidity on the {0} side")]
    NoLiquidity(Side),
}

/// One execution against a resting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fill {
    pub price: i64,
    pub size: u64,
    pub resting_ref: OrderRef,
}

/// Volume accounting for a single applied event.
///
/// `added` is what came to rest in the book (the unfilled part of a limit
/// order), so `added - traded - cancelled` is exactly the change in total
/// resting volume across both sides.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BookDelta {
    pub trades: Vec<Fill>,
    pub added: u64,
    pub cancelled: u64,
}

impl BookDelta {
    pub fn traded(&self) -> u64 {
        self.trades.iter().map(|f| f.size).sum()
    }

    /// Net change in resting volume implied by this delta.
    pub fn net_change(&self) -> i128 {
        self.added as i128 - self.traded() as i128 - self.cancelled as i128
    }
}

/// FIFO queue of resting orders at one price.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceLevel {
    pub price: i64,
    queue: VecDeque<(OrderRef, u64)>,
    total: u64,
}

impl PriceLevel {
    fn new(price: i64) -> Self {
        PriceLevel {
            price,
            queue: VecDeque::new(),
            total: 0,
        }
    }

    fn push(&mut self, order_ref: OrderRef, size: u64) {
        self.queue.push_back((order_ref, size));
        self.total += size;
    }

    fn remove(&mut self, order_ref: OrderRef) -> Option<u64> {
        let pos = self.queue.iter().position(|&(r, _)| r == order_ref)?;
        let (_, size) = self.queue.remove(pos)?;
        self.total -= size;
        Some(size)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn orders(&self) -> impl Iterator<Item = (OrderRef, u64)> + '_ {
        self.queue.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// A resting order as seen from outside the book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RestingOrder {
    pub side: Side,
    pub price: i64,
    pub order_ref: OrderRef,
    pub size: u64,
}

/// Instantaneous volume profile of one side, indexed by relative level.
///
/// `volumes[0]` is Δ = 1, the same-side best price; `volumes[k]` is the
/// resting size `k` ticks behind the best. `empty` is set when the side had no
/// orders, in which case every entry is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeSnapshot {
    pub t: u64,
    pub wall_time: WallTime,
    pub side: Side,
    pub volumes: Vec<u64>,
    pub empty: bool,
}

impl ShapeSnapshot {
    /// Volume at 1-based relative level `delta`; zero beyond the captured depth.
    pub fn volume(&self, delta: usize) -> u64 {
        delta
            .checked_sub(1)
            .and_then(|i| self.volumes.get(i))
            .copied()
            .unwrap_or(0)
    }

    pub fn depth(&self) -> usize {
        self.volumes.len()
    }
}

/// Result of walking the book with a hypothetical market order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Impact {
    /// Largest n with cumulative depth over levels 1..=n not exceeding ω.
    pub ticks: u64,
    /// ω covered the whole opposite side; `ticks` is then the deepest occupied level.
    pub saturated: bool,
}

impl Impact {
    pub fn in_currency(&self, tick_size: f64) -> f64 {
        self.ticks as f64 * tick_size
    }
}

#[derive(Debug, Clone)]
pub struct LimitOrderBook {
    bids: BTreeMap<i64, PriceLevel>,
    asks: BTreeMap<i64, PriceLevel>,
    index: HashMap<OrderRef, (Side, i64)>,
    band: (i64, i64),
    resting: [u64; 2],
    last_seq: u64,
    last_time: WallTime,
}

fn slot(side: Side) -> usize {
    match side {
        Side::Buy => 0,
        Side::Sell => 1,
    }
}

impl LimitOrderBook {
    pub fn new(config: &SessionConfig) -> Self {
        LimitOrderBook {
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            index: HashMap::new(),
            band: config.band(),
            resting: [0, 0],
            last_seq: 0,
            last_time: WallTime::default(),
        }
    }

    fn levels(&self, side: Side) -> &BTreeMap<i64, PriceLevel> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn levels_mut(&mut self, side: Side) -> &mut BTreeMap<i64, PriceLevel> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    pub fn best_bid(&self) -> Option<i64> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<i64> {
        self.asks.keys().next().copied()
    }

    pub fn best(&self, side: Side) -> Option<i64> {
        match side {
            Side::Buy => self.best_bid(),
            Side::Sell => self.best_ask(),
        }
    }

    /// Total resting size on one side.
    pub fn total_volume(&self, side: Side) -> u64 {
        self.resting[slot(side)]
    }

    pub fn order_count(&self) -> usize {
        self.index.len()
    }

    pub fn level_count(&self, side: Side) -> usize {
        self.levels(side).len()
    }

    pub fn contains(&self, order_ref: OrderRef) -> bool {
        self.index.contains_key(&order_ref)
    }

    /// Event time of the last applied event.
    pub fn event_time(&self) -> u64 {
        self.last_seq
    }

    pub fn wall_time(&self) -> WallTime {
        self.last_time
    }

    pub fn band(&self) -> (i64, i64) {
        self.band
    }

    /// Applies one validated event and reports the volume it moved.
    ///
    /// # Panics
    ///
    /// If the book ends up crossed, which would be an engine bug.
    pub fn apply_event(&mut self, event: &OrderEvent) -> Result<BookDelta, BookError> {
        let delta = match event.kind {
            EventKind::Cancel => self.cancel(event.order_ref)?,
            EventKind::BuyLimit => self.submit(Side::Buy, event)?,
            EventKind::SellLimit => self.submit(Side::Sell, event)?,
        };
        self.last_seq = event.seq;
        self.last_time = event.wall_time;
        if let (Some(bid), Some(ask)) = (self.best_bid(), self.best_ask()) {
            assert!(bid < ask, "crossed book after event {}: bid {bid} >= ask {ask}", event.seq);
        }
        Ok(delta)
    }

    fn cancel(&mut self, order_ref: OrderRef) -> Result<BookDelta, BookError> {
        let (side, price) = self
            .index
            .remove(&order_ref)
            .ok_or(BookError::CancelUnknown(order_ref))?;
        let levels = self.levels_mut(side);
        let level = levels.get_mut(&price).expect("indexed order has a level");
        let size = level.remove(order_ref).expect("indexed order is queued at its level");
        if level.is_empty() {
            levels.remove(&price);
        }
        self.resting[slot(side)] -= size;
        Ok(BookDelta {
            trades: Vec::new(),
            added: 0,
            cancelled: size,
        })
    }

    fn submit(&mut self, side: Side, event: &OrderEvent) -> Result<BookDelta, BookError> {
        let (lo, hi) = self.band;
        if event.price < lo || event.price > hi {
            return Err(BookError::OutOfBand {
                price: event.price,
                lo,
                hi,
            });
        }
        if event.size == 0 {
            return Err(BookError::ZeroSize(event.order_ref));
        }
        if self.index.contains_key(&event.order_ref) {
            return Err(BookError::DuplicateRef(event.order_ref));
        }

        let mut remaining = event.size;
        let mut trades = Vec::new();
        let opposite = side.opposite();
        while remaining > 0 {
            let levels = match opposite {
                Side::Buy => &mut self.bids,
                Side::Sell => &mut self.asks,
            };
            let mut entry = match opposite {
                Side::Buy => levels.last_entry(),
                Side::Sell => levels.first_entry(),
            };
            let Some(level) = entry.as_mut() else { break };
            let crosses = match side {
                Side::Buy => *level.key() <= event.price,
                Side::Sell => *level.key() >= event.price,
            };
            if !crosses {
                break;
            }
            let level = level.get_mut();
            while remaining > 0 {
                let Some(front) = level.queue.front_mut() else { break };
                let take = remaining.min(front.1);
                trades.push(Fill {
                    price: level.price,
                    size: take,
                    resting_ref: front.0,
                });
                front.1 -= take;
                level.total -= take;
                remaining -= take;
                if front.1 == 0 {
                    let (filled, _) = level.queue.pop_front().expect("front exists");
                    self.index.remove(&filled);
                }
            }
            let emptied = level.is_empty();
            if emptied {
                entry.expect("level entry").remove();
            }
        }
        let traded = event.size - remaining;
        self.resting[slot(opposite)] -= traded;

        if remaining > 0 {
            self.levels_mut(side)
                .entry(event.price)
                .or_insert_with(|| PriceLevel::new(event.price))
                .push(event.order_ref, remaining);
            self.index.insert(event.order_ref, (side, event.price));
            self.resting[slot(side)] += remaining;
        }
        Ok(BookDelta {
            trades,
            added: remaining,
            cancelled: 0,
        })
    }

    /// Visits occupied levels of one side from the best outward, passing the
    /// 1-based relative level Δ and the level's total size. Stops past `depth`.
    pub fn for_each_level(&self, side: Side, depth: usize, mut f: impl FnMut(usize, u64)) {
        let Some(best) = self.best(side) else { return };
        let mut visit = |price: i64, level: &PriceLevel| -> bool {
            let delta = (price - best).unsigned_abs() as usize + 1;
            if delta > depth {
                return false;
            }
            f(delta, level.total);
            true
        };
        match side {
            Side::Buy => {
                for (&p, l) in self.bids.iter().rev() {
                    if !visit(p, l) {
                        break;
                    }
                }
            }
            Side::Sell => {
                for (&p, l) in self.asks.iter() {
                    if !visit(p, l) {
                        break;
                    }
                }
            }
        }
    }

    /// Volume profile V(Δ, t) of one side for Δ = 1..=depth.
    pub fn snapshot_shape(&self, side: Side, depth: usize) -> ShapeSnapshot {
        let mut volumes = vec![0u64; depth];
        self.for_each_level(side, depth, |delta, v| volumes[delta - 1] = v);
        ShapeSnapshot {
            t: self.last_seq,
            wall_time: self.last_time,
            side,
            volumes,
            empty: self.levels(side).is_empty(),
        }
    }

    /// Price displacement, in ticks, of a hypothetical market order of size
    /// `omega` submitted on `side`; it walks the opposite side of the book.
    ///
    /// Returns sup{n : V(1) + ... + V(n) <= ω}. When ω is below V(1) the set is
    /// empty and the impact is 0; when ω covers all resting volume the supremum
    /// is unbounded and the deepest occupied level is returned, flagged saturated.
    pub fn virtual_price_impact(&self, side: Side, omega: u64) -> Result<Impact, BookError> {
        let opposite = side.opposite();
        if self.levels(opposite).is_empty() {
            return Err(BookError::NoLiquidity(opposite));
        }
        let mut cumulative = 0u64;
        let mut result = None;
        let mut deepest = 0usize;
        self.for_each_level(opposite, usize::MAX, |delta, v| {
            if result.is_some() {
                return;
            }
            if cumulative + v > omega {
                result = Some(delta as u64 - 1);
            } else {
                cumulative += v;
                deepest = delta;
            }
        });
        Ok(match result {
            Some(ticks) => Impact {
                ticks,
                saturated: false,
            },
            None => Impact {
                ticks: deepest as u64,
                saturated: true,
            },
        })
    }

    /// All resting orders in priority order: bids from the highest price, then
    /// asks from the lowest, FIFO within each price.
    pub fn resting_orders(&self) -> Vec<RestingOrder> {
        let bids = self.bids.values().rev().map(|l| (Side::Buy, l));
        let asks = self.asks.values().map(|l| (Side::Sell, l));
        bids.chain(asks)
            .flat_map(|(side, level)| {
                level.orders().map(move |(order_ref, size)| RestingOrder {
                    side,
                    price: level.price,
                    order_ref,
                    size,
                })
            })
            .collect()
    }

    /// Full structural check; O(book size). Meant for tests and debugging.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let (Some(b), Some(a)) = (self.best_bid(), self.best_ask()) {
            if b >= a {
                return Err(format!("crossed: bid {b} >= ask {a}"));
            }
        }
        let mut seen = 0usize;
        for side in [Side::Buy, Side::Sell] {
            let mut side_total = 0u64;
            for (&price, level) in self.levels(side) {
                if level.price != price || level.is_empty() {
                    return Err(format!("level {price} on {side} is empty or mislabelled"));
                }
                if price < self.band.0 || price > self.band.1 {
                    return Err(format!("level {price} on {side} outside band"));
                }
                let mut level_total = 0;
                for (r, size) in level.orders() {
                    if size == 0 {
                        return Err(format!("order {r} rests with zero size"));
                    }
                    if self.index.get(&r) != Some(&(side, price)) {
                        return Err(format!("order {r} missing from index"));
                    }
                    level_total += size;
                    seen += 1;
                }
                if level_total != level.total {
                    return Err(format!("level {price} cached total {} != {level_total}", level.total));
                }
                side_total += level_total;
            }
            if side_total != self.resting[slot(side)] {
                return Err(format!("{side} resting total out of sync"));
            }
        }
        if seen != self.index.len() {
            return Err(format!("index has {} entries, book has {seen} orders", self.index.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> WallTime {
        WallTime::from_hms(9, 30, 0, 0)
    }

    fn book() -> LimitOrderBook {
        LimitOrderBook::new(&SessionConfig::default())
    }

    #[test]
    fn empty_book_has_no_best() {
        let b = book();
        assert_eq!((b.best_bid(), b.best_ask()), (None, None));
        let snap = b.snapshot_shape(Side::Buy, 5);
        assert!(snap.empty);
        assert_eq!(snap.volumes, vec![0; 5]);
    }

    #[test]
    fn resting_buy() {
        let mut b = book();
        let d = b.apply_event(&OrderEvent::limit(1, t(), Side::Buy, 1, 100, 1000)).unwrap();
        assert_eq!(d, BookDelta { trades: vec![], added: 100, cancelled: 0 });
        assert_eq!(b.best_bid(), Some(1000));
        assert_eq!(b.snapshot_shape(Side::Buy, 3).volume(1), 100);
    }

    #[test]
    fn marketable_buy_walks_asks() {
        let mut b = book();
        b.apply_event(&OrderEvent::limit(1, t(), Side::Sell, 1, 30, 1001)).unwrap();
        b.apply_event(&OrderEvent::limit(2, t(), Side::Sell, 2, 30, 1002)).unwrap();
        let d = b.apply_event(&OrderEvent::limit(3, t(), Side::Buy, 3, 50, 1002)).unwrap();
        assert_eq!(
            d.trades,
            vec![
                Fill { price: 1001, size: 30, resting_ref: OrderRef(1) },
                Fill { price: 1002, size: 20, resting_ref: OrderRef(2) },
            ]
        );
        assert_eq!(d.added, 0);
        assert_eq!(b.best_ask(), Some(1002));
        assert_eq!(b.best_bid(), None);
        assert_eq!(b.snapshot_shape(Side::Sell, 2).volumes, vec![10, 0]);
        b.check_invariants().unwrap();
    }

    #[test]
    fn residual_rests_at_limit() {
        let mut b = book();
        b.apply_event(&OrderEvent::limit(1, t(), Side::Buy, 1, 40, 1000)).unwrap();
        let d = b.apply_event(&OrderEvent::limit(2, t(), Side::Sell, 2, 100, 999)).unwrap();
        assert_eq!(d.traded(), 40);
        assert_eq!(d.added, 60);
        assert_eq!((b.best_bid(), b.best_ask()), (None, Some(999)));
        assert_eq!(d.net_change(), 60 - 40);
    }

    #[test]
    fn time_priority_within_level() {
        let mut b = book();
        b.apply_event(&OrderEvent::limit(1, t(), Side::Sell, 10, 5, 1001)).unwrap();
        b.apply_event(&OrderEvent::limit(2, t(), Side::Sell, 11, 5, 1001)).unwrap();
        let d = b.apply_event(&OrderEvent::limit(3, t(), Side::Buy, 12, 7, 1005)).unwrap();
        assert_eq!(d.trades[0].resting_ref, OrderRef(10));
        assert_eq!(d.trades[1], Fill { price: 1001, size: 2, resting_ref: OrderRef(11) });
        assert!(!b.contains(OrderRef(10)));
        assert!(b.contains(OrderRef(11)));
    }

    #[test]
    fn cancel_removes_level() {
        let mut b = book();
        b.apply_event(&OrderEvent::limit(1, t(), Side::Buy, 1, 100, 1000)).unwrap();
        let d = b.apply_event(&OrderEvent::cancel(2, t(), 1)).unwrap();
        assert_eq!(d.cancelled, 100);
        assert_eq!(b.best_bid(), None);
        assert_eq!(b.level_count(Side::Buy), 0);
        assert_eq!(
            b.apply_event(&OrderEvent::cancel(3, t(), 1)).unwrap_err(),
            BookError::CancelUnknown(OrderRef(1))
        );
    }

    #[test]
    fn rejects_duplicates_and_out_of_band() {
        let mut b = book();
        b.apply_event(&OrderEvent::limit(1, t(), Side::Buy, 1, 100, 1000)).unwrap();
        assert_eq!(
            b.apply_event(&OrderEvent::limit(2, t(), Side::Buy, 1, 100, 999)).unwrap_err(),
            BookError::DuplicateRef(OrderRef(1))
        );
        assert!(matches!(
            b.apply_event(&OrderEvent::limit(3, t(), Side::Buy, 2, 100, 1101)),
            Err(BookError::OutOfBand { .. })
        ));
    }

    #[test]
    fn snapshot_indexes_from_same_side_best() {
        let mut b = book();
        b.apply_event(&OrderEvent::limit(1, t(), Side::Buy, 1, 100, 1000)).unwrap();
        b.apply_event(&OrderEvent::limit(2, t(), Side::Buy, 2, 50, 998)).unwrap();
        let s = b.snapshot_shape(Side::Buy, 5);
        assert_eq!(s.volumes, vec![100, 0, 50, 0, 0]);
        assert_eq!(s.t, 2);
        assert_eq!(b.snapshot_shape(Side::Buy, 2).volumes, vec![100, 0]);
    }

    #[test]
    fn impact_conventions() {
        let mut b = book();
        for (i, p) in (1001..=1004).enumerate() {
            b.apply_event(&OrderEvent::limit(i as u64 + 1, t(), Side::Sell, i as u64 + 1, 30, p)).unwrap();
        }
        let walk = |w| b.virtual_price_impact(Side::Buy, w).unwrap();
        assert_eq!(walk(60), Impact { ticks: 2, saturated: false });
        assert_eq!(walk(29), Impact { ticks: 0, saturated: false });
        assert_eq!(walk(30), Impact { ticks: 1, saturated: false });
        assert_eq!(walk(119), Impact { ticks: 3, saturated: false });
        assert_eq!(walk(120), Impact { ticks: 4, saturated: true });
        assert_eq!(walk(1_000), Impact { ticks: 4, saturated: true });
        assert_eq!(
            b.virtual_price_impact(Side::Sell, 10).unwrap_err(),
            BookError::NoLiquidity(Side::Buy)
        );
    }

    #[test]
    fn impact_skips_gaps_literally() {
        let mut b = book();
        b.apply_event(&OrderEvent::limit(1, t(), Side::Buy, 1, 100, 1000)).unwrap();
        b.apply_event(&OrderEvent::limit(2, t(), Side::Buy, 2, 100, 997)).unwrap();
        // V = [100, 0, 0, 100]; partial sums 100, 100, 100, 200
        let i = b.virtual_price_impact(Side::Sell, 150).unwrap();
        assert_eq!(i, Impact { ticks: 3, saturated: false });
        assert_eq!(b.virtual_price_impact(Side::Sell, 50).unwrap().ticks, 0);
    }
}
