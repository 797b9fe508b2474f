//! Reference replay of an event log on a bare constant-function pool.
//!
//! The replayer knows nothing about vaults, rebates or OCT bookkeeping. It
//! re-derives every price move, escrow withdrawal and batch settlement from
//! the logged update targets and revealed orders alone, so comparing its final
//! reserves with the engine's checks that a β ≡ 0 pool behaves like a plain
//! CFMM executing the same batches.

use std::collections::BTreeMap;

use crate::allocation::{clearing_price_with_limits, settle_market_batch, OrderBounds, Order};
use crate::cfmm::{PoolCurve, Reserves, Tokens};
use crate::engine::{Event, EventKind};
use crate::error::{MathError, MathResult};
use crate::ids::{OctId, Side};

struct Batch {
    snapshot: Reserves,
    escrow: Tokens,
    octs: Vec<OctId>,
}

#[derive(Clone, Debug)]
pub struct PlainCfmm {
    pub curve: PoolCurve,
    pub bounds: OrderBounds,
    pub reserves: Reserves,
}

impl PlainCfmm {
    pub fn new(curve: PoolCurve, bounds: OrderBounds, reserves: Reserves) -> Self {
        PlainCfmm {
            curve,
            bounds,
            reserves,
        }
    }

    /// Replays `events` and returns the resulting reserves.
    pub fn replay(mut self, events: &[Event]) -> MathResult<Reserves> {
        let mut open: BTreeMap<u64, Batch> = BTreeMap::new();
        let mut revealed: BTreeMap<OctId, Order> = BTreeMap::new();
        for e in events {
            match &e.kind {
                EventKind::Update {
                    allocation_height,
                    target,
                    allocated,
                    ..
                } => {
                    let k = self.curve.invariant(&self.reserves);
                    let moved = self.curve.reserves_at_price(k, *target)?;
                    if allocated.is_empty() {
                        self.reserves = moved;
                        continue;
                    }
                    let n = allocated.len() as f64;
                    let p = target.value();
                    let escrow = Tokens::new(n * self.bounds.max_y * p, n * self.bounds.max_x / p);
                    self.reserves = moved.apply(-escrow)?;
                    open.insert(
                        *allocation_height,
                        Batch {
                            snapshot: moved,
                            escrow,
                            octs: allocated.clone(),
                        },
                    );
                }
                EventKind::Revealed { oct, order } => {
                    revealed.insert(*oct, *order);
                }
                EventKind::Executed { allocation, .. } => {
                    let batch = open.remove(allocation).ok_or_else(|| {
                        MathError::Solvency(format!("replay: unknown allocation {allocation}"))
                    })?;
                    let orders: Vec<Order> = batch
                        .octs
                        .iter()
                        .filter_map(|id| revealed.remove(id))
                        .collect();
                    let delta = if orders.iter().all(|o| o.limit.is_none()) {
                        let (dx, dy) = orders.iter().fold((0.0, 0.0), |(dx, dy), o| match o.side {
                            Side::BuyY => (dx + o.size, dy),
                            Side::SellY => (dx, dy + o.size),
                        });
                        settle_market_batch(self.curve, &batch.snapshot, dx, dy)?.pool_delta
                    } else {
                        clearing_price_with_limits(
                            self.curve,
                            &orders,
                            &batch.snapshot,
                            Some(batch.escrow),
                        )
                        .pool_delta
                    };
                    self.reserves = self.reserves.apply(batch.escrow + delta)?;
                }
                EventKind::VaultReentry { deposited, .. } => {
                    self.reserves = self.reserves.apply(*deposited)?;
                }
                _ => {}
            }
        }
        Ok(self.reserves)
    }
}
