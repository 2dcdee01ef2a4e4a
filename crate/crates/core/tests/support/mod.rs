#![allow(dead_code)]

use lobshape::reference::NaiveBook;
use lobshape::{OrderEvent, Side, WallTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random stream over a narrow price window so that orders cross often.
/// About one event in five is a cancel of a currently resting order; a small
/// share of cancels name an order that does not exist.
pub fn random_stream(seed: u64, len: usize) -> Vec<OrderEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shadow = NaiveBook::new();
    let mut events = Vec::with_capacity(len);
    let mut next_ref = 1u64;
    let t = WallTime::from_hms(10, 0, 0, 0);
    for seq in 1..=len as u64 {
        let resting = shadow.resting_orders();
        let event = if !resting.is_empty() && rng.random::<f64>() < 0.2 {
            if rng.random::<f64>() < 0.02 {
                OrderEvent::cancel(seq, t, 1_000_000 + seq)
            } else {
                let pick = resting[rng.random_range(0..resting.len())];
                OrderEvent::cancel(seq, t, pick.order_ref.0)
            }
        } else {
            let side = if rng.random::<bool>() { Side::Buy } else { Side::Sell };
            let price = rng.random_range(995..=1005);
            let size = rng.random_range(1..=12) * 10;
            next_ref += 1;
            OrderEvent::limit(seq, t, side, next_ref, size, price)
        };
        let _ = shadow.apply(&event);
        events.push(event);
    }
    events
}
