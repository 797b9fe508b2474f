#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use v0lver_core::allocation::{Order, OrderBounds};
use v0lver_core::diamond::RebateSchedule;
use v0lver_core::engine::{ChainState, EngineConfig, OctState, ReentryPolicy, SealedOrder};
use v0lver_core::ids::{AgentId, OctId, Side, Token};
use v0lver_core::{PoolCurve, Price, Reserves, Tokens};

/// Random bounded order owned by `owner`.
pub fn random_order<R: Rng>(rng: &mut R, bounds: OrderBounds, eps: f64, owner: AgentId) -> Order {
    let side = if rng.random_bool(0.5) { Side::BuyY } else { Side::SellY };
    let size = bounds.for_side(side) * (1.0 - rng.random::<f64>());
    let limit = if rng.random_bool(0.5) {
        let off = rng.random_range(-0.05..0.05);
        Price::new(eps * (1.0 + off)).ok()
    } else {
        None
    };
    Order { side, size, limit, owner }
}

#[derive(Debug, Default, Clone)]
pub struct FuzzReport {
    pub steps: u64,
    pub blocks: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub octs: u64,
    pub executed: u64,
    pub burned: u64,
    pub illegal_transitions: Vec<String>,
    pub invariant_errors: Vec<String>,
    pub max_conservation_error: f64,
}

impl FuzzReport {
    pub fn clean(&self) -> bool {
        self.illegal_transitions.is_empty() && self.invariant_errors.is_empty()
    }
}

fn conservation_error(chain: &ChainState) -> f64 {
    let l = chain.ledger();
    let diff = chain.internal_supply() + l.burned() - l.initial() - l.external_in();
    diff.max_abs()
}

/// Drives a chain with `steps` random actions (valid and invalid), checking
/// after every one that supply is conserved and that every OCT moved only
/// along a legal lifecycle edge.
pub fn fuzz_engine(seed: u64, steps: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = OrderBounds::new(1.0, 1.0).unwrap();
    let config = EngineConfig {
        curve: PoolCurve::ConstantProduct,
        schedule: RebateSchedule::linear(rng.random_range(1..6), rng.random_range(0.0..0.95)).unwrap(),
        bounds,
        reveal_window: rng.random_range(1..4),
        conversion_frequency: rng.random_range(1..4),
        reentry: if rng.random_bool(0.5) {
            ReentryPolicy::EveryConversionBlock
        } else {
            ReentryPolicy::WhenIdle
        },
    };
    let producers: Vec<(u32, Tokens)> = (0..3).map(|i| (i, Tokens::new(1e4, 1e4))).collect();
    let mut eps = 1.0;
    let mut chain = ChainState::new(
        config,
        Reserves::new(1e4, 1e4).unwrap(),
        &producers,
        Price::new(eps).unwrap(),
    )
    .unwrap();

    let mut report = FuzzReport::default();
    let mut secrets: HashMap<OctId, SealedOrder> = HashMap::new();
    let mut live: BTreeMap<OctId, OctState> = BTreeMap::new();
    let mut terminal: BTreeMap<OctId, OctState> = BTreeMap::new();
    let mut next_id = 0u64;

    for step in 0..steps {
        let roll = rng.random_range(0..100);
        let result = match roll {
            0..=24 => {
                let owner = if rng.random_bool(0.8) {
                    AgentId::User(rng.random_range(0..50))
                } else {
                    AgentId::Producer(rng.random_range(0..3))
                };
                let mut order = random_order(&mut rng, bounds, eps, owner);
                if rng.random_bool(0.03) {
                    order.size *= 3.0;
                }
                let sealed = SealedOrder { order, salt: rng.random() };
                let side = if rng.random_bool(0.97) {
                    order.side.sold()
                } else {
                    match order.side.sold() {
                        Token::X => Token::Y,
                        Token::Y => Token::X,
                    }
                };
                chain.submit_oct(owner, side, sealed.commitment()).map(|id| {
                    secrets.insert(id, sealed);
                })
            }
            25..=34 => {
                let pool: Vec<OctId> = chain.mempool().collect();
                let k = rng.random_range(0..=pool.len());
                let mut set: Vec<OctId> = pool.into_iter().choose_multiple(&mut rng, k);
                if rng.random_bool(0.05) {
                    set.push(OctId(rng.random_range(0..1_000_000)));
                }
                chain.insert_octs(rng.random_range(0..3), &set)
            }
            35..=46 => {
                let h = chain.height();
                let lo = chain.last_allocation().map_or(0, |a| a + 1);
                let h_a = if rng.random_bool(0.9) && lo <= h {
                    rng.random_range(lo..=h)
                } else {
                    rng.random_range(0..=h + 2)
                };
                let p = Price::new(eps * (1.0 + rng.random_range(-0.03..0.03))).unwrap();
                chain.apply_update_tx(rng.random_range(0..3), h_a, p).map(|_| ())
            }
            47..=71 => {
                let candidates: Vec<OctId> = live
                    .iter()
                    .filter(|(_, s)| matches!(s, OctState::Allocated { .. }))
                    .map(|(id, _)| *id)
                    .collect();
                match candidates.into_iter().choose(&mut rng) {
                    Some(id) => {
                        let mut sealed = secrets[&id];
                        match rng.random_range(0..20) {
                            0 => sealed.salt ^= 1,
                            1 => sealed.order.size *= 1.5,
                            2 => sealed.order.size = 0.0,
                            _ => {}
                        }
                        chain.reveal_order(id, &sealed)
                    }
                    None => Ok(()),
                }
            }
            72..=76 => {
                let ids: Vec<u64> = chain.open_allocations().map(|a| a.pool.id).collect();
                let id = ids
                    .into_iter()
                    .choose(&mut rng)
                    .unwrap_or_else(|| rng.random_range(0..10));
                let proposed = rng
                    .random_bool(0.3)
                    .then(|| Price::new(eps * (1.0 + rng.random_range(-0.02..0.02))).unwrap());
                chain.execute_batch(id, proposed).map(|_| ())
            }
            77..=81 => {
                eps *= (0.02 * (rng.random::<f64>() - 0.5)).exp();
                chain.set_external_price(Price::new(eps).unwrap());
                Ok(())
            }
            _ => {
                report.blocks += 1;
                chain.advance_block().map(|_| ())
            }
        };
        match result {
            Ok(()) => report.accepted += 1,
            Err(e) if e.is_invariant_violation() => {
                report.invariant_errors.push(format!("step {step}: {e}"))
            }
            Err(_) => report.rejected += 1,
        }

        let err = conservation_error(&chain);
        report.max_conservation_error = report.max_conservation_error.max(err);
        if err > 1e-6 {
            report
                .invariant_errors
                .push(format!("step {step}: conservation error {err}"));
        }

        // Lifecycle: compare every live OCT with its previous state and pick
        // up new ones; sweep terminal ones now and then.
        let mut moved = Vec::new();
        for (id, prev) in live.iter_mut() {
            let now = chain.oct(*id).expect("OCTs are never removed").state;
            if now != *prev {
                if !prev.may_become(&now) {
                    report.illegal_transitions.push(format!(
                        "step {step}: {id} {} -> {}",
                        prev.name(),
                        now.name()
                    ));
                }
                *prev = now;
            }
            if now.is_terminal() {
                moved.push(*id);
            }
        }
        for id in moved {
            let s = live.remove(&id).unwrap();
            terminal.insert(id, s);
        }
        while let Some(oct) = chain.oct(OctId(next_id)) {
            next_id += 1;
            if oct.state != OctState::Pending {
                report
                    .illegal_transitions
                    .push(format!("step {step}: {} born {}", oct.id, oct.state.name()));
            }
            live.insert(oct.id, oct.state);
            report.octs += 1;
        }
        if step % 1000 == 999 {
            for (id, s) in &terminal {
                if chain.oct(*id).map(|o| o.state) != Some(*s) {
                    report
                        .illegal_transitions
                        .push(format!("step {step}: terminal {id} changed"));
                }
            }
        }
        report.steps += 1;
    }
    for s in terminal.values() {
        match s {
            OctState::Executed { .. } => report.executed += 1,
            OctState::Burned { .. } => report.burned += 1,
            _ => {}
        }
    }
    report
}

/// Root of `f` on `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ in
/// sign.
pub fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "root not bracketed on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Execution price of a market batch `(dx, dy)` against a constant-product
/// snapshot `(x0, y0)`, found numerically from the two settlement
/// conditions: the escrow trades along the snapshot curve,
/// `(x0 + dx − dy·p)(y0 + dy − dx/p) = x0·y0`, and users clear at `p`.
///
/// The conditions also hold at the trivial `p = dx/dy`, where the escrow does
/// not trade; the bracket is shrunk toward it until the sign flips so only the
/// trading root is found.
pub fn market_price_oracle(x0: f64, y0: f64, dx: f64, dy: f64) -> f64 {
    let p0 = x0 / y0;
    // (x0 + a)(y0 + b) − x0·y0 with the x0·y0 term cancelled analytically.
    let g = |p: f64| {
        let a = dx - dy * p;
        let b = dy - dx / p;
        x0 * b + a * y0 + a * b
    };
    if (dx - dy * p0).abs() <= 1e-15 * dx.max(dy * p0) {
        return p0;
    }
    let trivial = if dy > 0.0 { dx / dy } else { f64::INFINITY };
    let mut far = if trivial.is_finite() {
        p0 + 0.5 * (trivial - p0)
    } else {
        // Only buyers of y: the trading root lies below (x0 + dx)/y0.
        (x0 + dx) / y0
    };
    for _ in 0..200 {
        if g(far) > 0.0 {
            break;
        }
        far = if trivial.is_finite() {
            far + 0.5 * (trivial - far)
        } else {
            far * 2.0
        };
    }
    let (lo, hi) = if far > p0 { (p0, far) } else { (far, p0) };
    bisect(lo, hi, g)
}
