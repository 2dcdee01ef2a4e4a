//! Naive reference matcher: a flat list of orders rescanned in full for every
//! event. Slow by construction and shares no code with [`crate::book`], so it
//! serves as an oracle for the engine in tests.

use crate::book::{BookDelta, BookError, Fill, Impact, RestingOrder};
use crate::orderflow::{EventKind, OrderEvent, Side};

#[derive(Debug, Clone)]
struct NaiveOrder {
    side: Side,
    price: i64,
    order_ref: u64,
    size: u64,
    arrival: u64,
}

#[derive(Debug, Clone, Default)]
pub struct NaiveBook {
    orders: Vec<NaiveOrder>,
    arrivals: u64,
}

impl NaiveBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, event: &OrderEvent) -> Result<BookDelta, BookError> {
        let mut delta = BookDelta::default();
        if event.kind == EventKind::Cancel {
            let pos = self
                .orders
                .iter()
                .position(|o| o.order_ref == event.order_ref.0)
                .ok_or(BookError::CancelUnknown(event.order_ref))?;
            delta.cancelled = self.orders.remove(pos).size;
            return Ok(delta);
        }
        let side = event.kind.side().unwrap();
        let mut remaining = event.size;
        while remaining > 0 {
            // Best opposite order: best price, then earliest arrival.
            let mut best: Option<usize> = None;
            for (i, o) in self.orders.iter().enumerate() {
                if o.side == side {
                    continue;
                }
                let crosses = match side {
                    Side::Buy => o.price <= event.price,
                    Side::Sell => o.price >= event.price,
                };
                if !crosses {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(j) => {
                        let b = &self.orders[j];
                        let price_better = match side {
                            Side::Buy => o.price < b.price,
                            Side::Sell => o.price > b.price,
                        };
                        price_better || (o.price == b.price && o.arrival < b.arrival)
                    }
                };
                if better {
                    best = Some(i);
                }
            }
            let Some(i) = best else { break };
            let take = remaining.min(self.orders[i].size);
            delta.trades.push(Fill {
                price: self.orders[i].price,
                size: take,
                resting_ref: crate::orderflow::OrderRef(self.orders[i].order_ref),
            });
            self.orders[i].size -= take;
            remaining -= take;
            if self.orders[i].size == 0 {
                self.orders.remove(i);
            }
        }
        if remaining > 0 {
            self.arrivals += 1;
            self.orders.push(NaiveOrder {
                side,
                price: event.price,
                order_ref: event.order_ref.0,
                size: remaining,
                arrival: self.arrivals,
            });
            delta.added = remaining;
        }
        Ok(delta)
    }

    /// Resting orders in the same priority order as
    /// [`crate::book::LimitOrderBook::resting_orders`].
    pub fn resting_orders(&self) -> Vec<RestingOrder> {
        let mut bids: Vec<&NaiveOrder> = self.orders.iter().filter(|o| o.side == Side::Buy).collect();
        let mut asks: Vec<&NaiveOrder> = self.orders.iter().filter(|o| o.side == Side::Sell).collect();
        bids.sort_by_key(|o| (-o.price, o.arrival));
        asks.sort_by_key(|o| (o.price, o.arrival));
        bids.into_iter()
            .chain(asks)
            .map(|o| RestingOrder {
                side: o.side,
                price: o.price,
                order_ref: crate::orderflow::OrderRef(o.order_ref),
                size: o.size,
            })
            .collect()
    }

    pub fn best(&self, side: Side) -> Option<i64> {
        let prices = self.orders.iter().filter(|o| o.side == side).map(|o| o.price);
        match side {
            Side::Buy => prices.max(),
            Side::Sell => prices.min(),
        }
    }

    /// V(Δ) for Δ = 1..=depth by summing every order at each candidate price.
    pub fn snapshot(&self, side: Side, depth: usize) -> Vec<u64> {
        let Some(best) = self.best(side) else {
            return vec![0; depth];
        };
        (0..depth as i64)
            .map(|k| {
                let price = match side {
                    Side::Buy => best - k,
                    Side::Sell => best + k,
                };
                self.orders
                    .iter()
                    .filter(|o| o.side == side && o.price == price)
                    .map(|o| o.size)
                    .sum()
            })
            .collect()
    }

    pub fn total(&self, side: Side) -> u64 {
        self.orders.iter().filter(|o| o.side == side).map(|o| o.size).sum()
    }

    /// Walks the opposite side level by level, extending n while the running
    /// sum stays within ω.
    pub fn impact(&self, side: Side, omega: u64, max_depth: usize) -> Result<Impact, BookError> {
        let opposite = side.opposite();
        let total = self.total(opposite);
        if total == 0 {
            return Err(BookError::NoLiquidity(opposite));
        }
        let v = self.snapshot(opposite, max_depth);
        let deepest = v.iter().rposition(|&x| x > 0).map_or(0, |i| i + 1);
        if omega >= total {
            return Ok(Impact {
                ticks: deepest as u64,
                saturated: true,
            });
        }
        let mut sum = 0;
        let mut n = 0;
        for (k, &x) in v.iter().enumerate() {
            sum += x;
            if sum <= omega {
                n = k + 1;
            } else {
                break;
            }
        }
        Ok(Impact {
            ticks: n as u64,
            saturated: false,
        })
    }
}
