//! Allocation pools and batch settlement.
//!
//! An allocation pool escrows liquidity for a set of allocated orders. Revealed
//! orders are settled at one uniform price against that escrow, which trades
//! as if the batch imbalance had been sent to the corresponding CFMM frozen at
//! allocation time (the snapshot).

use serde::{Deserialize, Serialize};

use crate::cfmm::{PoolCurve, Price, Reserves, Tokens};
use crate::error::{MathError, MathResult};
use crate::ids::{AgentId, OctId, Side};

/// Relative tolerance for volume ties and volume-maximality checks.
pub const VOLUME_TOL: f64 = 1e-12;

/// Per-order collateral bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderBounds {
    pub max_x: f64,
    pub max_y: f64,
}

impl OrderBounds {
    pub fn new(max_x: f64, max_y: f64) -> MathResult<Self> {
        for (name, v) in [("max_x", max_x), ("max_y", max_y)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MathError::Parameter { name, value: v });
            }
        }
        Ok(OrderBounds { max_x, max_y })
    }

    pub fn for_side(&self, side: Side) -> f64 {
        match side {
            Side::BuyY => self.max_x,
            Side::SellY => self.max_y,
        }
    }
}

/// A plain order. `size` is denominated in the token the order sells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub side: Side,
    pub size: f64,
    /// Worst acceptable price: a ceiling for buyers of y, a floor for sellers.
    pub limit: Option<Price>,
    pub owner: AgentId,
}

impl Order {
    pub fn market(side: Side, size: f64, owner: AgentId) -> Self {
        Order {
            side,
            size,
            limit: None,
            owner,
        }
    }

    pub fn admits(&self, p: f64) -> bool {
        match (self.side, self.limit) {
            (_, None) => true,
            (Side::BuyY, Some(l)) => l.value() >= p,
            (Side::SellY, Some(l)) => l.value() <= p,
        }
    }

    fn is_marginal_at(&self, p: f64) -> bool {
        self.limit.is_some_and(|l| l.value() == p)
    }
}

/// Solves `f(R) = f(R_x + max_x, R_y − λ_y) = f(R_x − λ_x, R_y + max_y)`.
///
/// Returns `(λ_x, λ_y)`: the largest escrow a single bounded order could draw.
pub fn allocation_bound(
    curve: PoolCurve,
    r: &Reserves,
    max_x: f64,
    max_y: f64,
) -> MathResult<(f64, f64)> {
    for (name, v) in [("max_x", max_x), ("max_y", max_y)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(MathError::Parameter { name, value: v });
        }
    }
    let (lx, ly) = match curve {
        PoolCurve::ConstantProduct => (
            r.x() * max_y / (r.y() + max_y),
            r.y() * max_x / (r.x() + max_x),
        ),
    };
    if lx >= r.x() || ly >= r.y() {
        return Err(MathError::Domain {
            x: r.x() - lx,
            y: r.y() - ly,
        });
    }
    Ok((lx, ly))
}

/// Escrow backing one batch of allocated orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationPool {
    /// Allocation height `H_a`; unique per pool.
    pub id: u64,
    /// Block height of the update transaction that created it.
    pub created_at: u64,
    pub curve: PoolCurve,
    /// Live reserves of the protocol pool at funding time.
    pub snapshot: Reserves,
    pub producer_fraction: f64,
    pub producer_contribution: Tokens,
    pub pool_contribution: Tokens,
    /// Current escrow holdings.
    pub reserves: Tokens,
    pub allocated_octs: Vec<OctId>,
}

impl AllocationPool {
    /// Applies a settlement's escrow delta, failing on overdraw.
    pub fn apply(&mut self, settlement: &Settlement) -> MathResult<()> {
        let after = self.reserves + settlement.pool_delta;
        let tol_x = 1e-9 * self.reserves.x.abs().max(1.0);
        let tol_y = 1e-9 * self.reserves.y.abs().max(1.0);
        if after.x < -tol_x || after.y < -tol_y {
            return Err(MathError::Solvency(format!(
                "escrow ({}, {}) cannot absorb delta ({}, {})",
                self.reserves.x, self.reserves.y, settlement.pool_delta.x, settlement.pool_delta.y
            )));
        }
        self.reserves = Tokens::new(after.x.max(0.0), after.y.max(0.0));
        Ok(())
    }
}

/// Escrow for `t_a` allocated orders at price `p`.
///
/// Total escrow is `(t_a·max_y·p, t_a·max_x/p)`; a fraction `beta` comes from
/// the producer and the rest from `pool_reserves`, which must stay positive.
#[allow(clippy::too_many_arguments)]
pub fn create_allocation_pool(
    id: u64,
    created_at: u64,
    t_a: usize,
    p: Price,
    bounds: OrderBounds,
    beta: f64,
    curve: PoolCurve,
    pool_reserves: &Reserves,
    allocated_octs: Vec<OctId>,
) -> MathResult<AllocationPool> {
    if !(0.0..1.0).contains(&beta) {
        return Err(MathError::Parameter {
            name: "beta",
            value: beta,
        });
    }
    let n = t_a as f64;
    let total = Tokens::new(n * bounds.max_y * p.value(), n * bounds.max_x / p.value());
    let producer_contribution = total * beta;
    let pool_contribution = total * (1.0 - beta);
    if pool_contribution.x >= pool_reserves.x() {
        return Err(MathError::Funding {
            what: "pool reserves (x)",
            need: pool_contribution.x,
            have: pool_reserves.x(),
        });
    }
    if pool_contribution.y >= pool_reserves.y() {
        return Err(MathError::Funding {
            what: "pool reserves (y)",
            need: pool_contribution.y,
            have: pool_reserves.y(),
        });
    }
    Ok(AllocationPool {
        id,
        created_at,
        curve,
        snapshot: *pool_reserves,
        producer_fraction: beta,
        producer_contribution,
        pool_contribution,
        reserves: total,
        allocated_octs,
    })
}

/// What one order executed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    /// Index into the order slice passed to the solver.
    pub index: usize,
    pub fraction: f64,
    /// Amount of the sold token delivered.
    pub sold: f64,
    /// Amount of the other token received.
    pub received: f64,
}

/// A uniform-price settlement of one batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub price: Price,
    /// Escrow-side delta; positive components flow into the escrow.
    pub pool_delta: Tokens,
    pub fills: Vec<Fill>,
    /// Token-y volume delivered to buyers of y (pool included).
    pub volume: f64,
}

impl Settlement {
    fn empty(price: Price) -> Self {
        Settlement {
            price,
            pool_delta: Tokens::ZERO,
            fills: Vec::new(),
            volume: 0.0,
        }
    }
}

/// Settles aggregate market flow `dx` (x sold) and `dy` (y sold) against the
/// snapshot CFMM.
///
/// The execution price satisfies `(dy + Δy)·p_e = dx` with the escrow's trade
/// keeping the snapshot invariant constant; for constant product this gives
/// `p_e = (R_x + dx) / (R_y + dy)` on either side of the pool price.
pub fn settle_market_batch(
    curve: PoolCurve,
    snapshot: &Reserves,
    dx: f64,
    dy: f64,
) -> MathResult<Settlement> {
    for (name, v) in [("dx", dx), ("dy", dy)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(MathError::Parameter { name, value: v });
        }
    }
    let p0 = curve.price(snapshot);
    if dx == dy * p0.value() {
        return Ok(Settlement {
            price: p0,
            pool_delta: Tokens::ZERO,
            fills: Vec::new(),
            volume: dy,
        });
    }
    let pe = match curve {
        PoolCurve::ConstantProduct => Price::new((snapshot.x() + dx) / (snapshot.y() + dy))?,
    };
    let p = pe.value();
    Ok(Settlement {
        price: pe,
        pool_delta: Tokens::new(dx - dy * p, dy - dx / p),
        fills: Vec::new(),
        volume: dx / p,
    })
}

/// Demand and supply of token y at a candidate price, with the escrow's
/// replicated-curve liquidity on whichever side it falls.
struct Book<'a> {
    curve: PoolCurve,
    snapshot: Reserves,
    p0: f64,
    caps: Option<Tokens>,
    orders: &'a [Order],
}

#[derive(Clone, Copy, Debug)]
struct Sides {
    demand: f64,
    supply: f64,
    /// Positive when the pool supplies y, negative when it demands y.
    pool_y: f64,
}

impl Sides {
    fn volume(&self) -> f64 {
        self.demand.min(self.supply)
    }
}

impl<'a> Book<'a> {
    fn new(
        curve: PoolCurve,
        orders: &'a [Order],
        snapshot: &Reserves,
        caps: Option<Tokens>,
    ) -> Self {
        Book {
            curve,
            snapshot: *snapshot,
            p0: curve.price(snapshot).value(),
            caps,
            orders,
        }
    }

    fn pool_y(&self, p: f64) -> f64 {
        let Ok(price) = Price::new(p) else {
            return 0.0;
        };
        let d = self.curve.uniform_trade(&self.snapshot, price);
        if d.y < 0.0 {
            let out = -d.y;
            self.caps.map_or(out, |c| out.min(c.y.max(0.0)))
        } else if d.x < 0.0 {
            let x_out = self.caps.map_or(-d.x, |c| (-d.x).min(c.x.max(0.0)));
            -(x_out / p)
        } else {
            0.0
        }
    }

    /// Eligibility is decided at `elig_p`, quantities at `p`.
    fn sides_with(&self, p: f64, elig_p: f64) -> Sides {
        let mut buy_x = 0.0;
        let mut sell_y = 0.0;
        for o in self.orders.iter().filter(|o| o.admits(elig_p)) {
            match o.side {
                Side::BuyY => buy_x += o.size,
                Side::SellY => sell_y += o.size,
            }
        }
        let pool_y = self.pool_y(p);
        Sides {
            demand: buy_x / p + (-pool_y).max(0.0),
            supply: sell_y + pool_y.max(0.0),
            pool_y,
        }
    }

    fn sides(&self, p: f64) -> Sides {
        self.sides_with(p, p)
    }

    fn volume(&self, p: f64) -> f64 {
        self.sides(p).volume()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .orders
            .iter()
            .filter_map(|o| o.limit.map(Price::value))
            .chain(std::iter::once(self.p0))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Market-balance crossing inside the open interval `(lo, hi)`, where
    /// order eligibility is constant.
    fn crossing(&self, lo: f64, hi: f64) -> Option<f64> {
        let mid = match (lo > 0.0, hi.is_finite()) {
            (true, true) => (lo * hi).sqrt(),
            (false, true) => hi / 2.0,
            (true, false) => lo * 2.0,
            (false, false) => return None,
        };
        let (mut dx, mut dy) = (0.0, 0.0);
        for o in self.orders.iter().filter(|o| o.admits(mid)) {
            match o.side {
                Side::BuyY => dx += o.size,
                Side::SellY => dy += o.size,
            }
        }
        let closed = match self.curve {
            PoolCurve::ConstantProduct => {
                (self.snapshot.x() + dx) / (self.snapshot.y() + dy)
            }
        };
        if closed > lo && closed < hi {
            let uncapped = self.curve.uniform_trade(&self.snapshot, Price::unchecked(closed));
            let within_caps = self
                .caps
                .is_none_or(|c| -uncapped.x <= c.x && -uncapped.y <= c.y);
            if within_caps {
                return Some(closed);
            }
        }
        // Escrow caps bind (or no closed-form crossing): bisect the excess
        // demand, which is non-increasing in p.
        let excess = |p: f64| {
            let s = self.sides_with(p, mid);
            s.demand - s.supply
        };
        let a = if lo > 0.0 { lo } else { hi * 1e-6 };
        let b = if hi.is_finite() { hi } else { lo * 1e6 };
        let (mut a, mut b) = (a, b);
        if !(excess(a) > 0.0 && excess(b) < 0.0) {
            return None;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if excess(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }

    /// Every price at which the volume maximum can be attained.
    fn candidates(&self) -> Vec<f64> {
        let bps = self.breakpoints();
        let mut out = bps.clone();
        let mut lo = 0.0;
        for &b in bps.iter().chain(std::iter::once(&f64::INFINITY)) {
            if let Some(c) = self.crossing(lo, b) {
                out.push(c);
            }
            lo = b;
        }
        out
    }

    fn best(&self) -> (f64, f64) {
        let mut best_p = self.p0;
        let mut best_v = self.volume(self.p0);
        for p in self.candidates() {
            let v = self.volume(p);
            let tie = (v - best_v).abs() <= VOLUME_TOL * best_v.max(v);
            let closer = (p / self.p0).ln().abs() < (best_p / self.p0).ln().abs();
            if (!tie && v > best_v) || (tie && closer) {
                best_p = p;
                best_v = v;
            }
        }
        (best_p, best_v)
    }

    fn settle_at(&self, p: f64) -> Settlement {
        let price = Price::unchecked(p);
        let s = self.sides(p);
        let volume = s.volume();
        if volume <= 0.0 {
            return Settlement::empty(price);
        }

        // Crossings computed in closed form balance only to rounding; the
        // escrow absorbs that residual instead of rationing anyone.
        let balanced = (s.demand - s.supply).abs() <= VOLUME_TOL * s.demand.max(s.supply);
        let demand_long = !balanced && s.demand > s.supply;
        let supply_long = !balanced && s.supply > s.demand;
        let long_side = if demand_long { Side::BuyY } else { Side::SellY };
        // Amount of y each long-side participant wants.
        let want = |o: &Order| match o.side {
            Side::BuyY => o.size / p,
            Side::SellY => o.size,
        };
        let pool_on_long = (demand_long && s.pool_y < 0.0) || (supply_long && s.pool_y > 0.0);

        let (mut frac_inframarginal, mut frac_marginal) = (1.0, 1.0);
        if demand_long || supply_long {
            let pool_amt = if pool_on_long { s.pool_y.abs().min(volume) } else { 0.0 };
            let rest = volume - pool_amt;
            let (mut inf, mut marg) = (0.0, 0.0);
            for o in self
                .orders
                .iter()
                .filter(|o| o.side == long_side && o.admits(p))
            {
                if o.is_marginal_at(p) {
                    marg += want(o);
                } else {
                    inf += want(o);
                }
            }
            if inf >= rest {
                frac_inframarginal = if inf > 0.0 { rest / inf } else { 0.0 };
                frac_marginal = 0.0;
            } else {
                frac_marginal = if marg > 0.0 { (rest - inf) / marg } else { 0.0 };
            }
        }

        let mut fills = Vec::new();
        let mut delta = Tokens::ZERO;
        for (index, o) in self.orders.iter().enumerate() {
            if !o.admits(p) {
                continue;
            }
            let fraction = if o.side == long_side && (demand_long || supply_long) {
                if o.is_marginal_at(p) {
                    frac_marginal
                } else {
                    frac_inframarginal
                }
            } else {
                1.0
            };
            let sold = fraction * o.size;
            let received = match o.side {
                Side::BuyY => {
                    let got = sold / p;
                    delta += Tokens::new(sold, -got);
                    got
                }
                Side::SellY => {
                    let got = sold * p;
                    delta += Tokens::new(-got, sold);
                    got
                }
            };
            if fraction > 0.0 {
                fills.push(Fill {
                    index,
                    fraction,
                    sold,
                    received,
                });
            }
        }
        Settlement {
            price,
            pool_delta: delta,
            fills,
            volume,
        }
    }
}

/// Uniform-price, volume-maximising settlement of `orders` against the
/// snapshot curve (capped by `caps`, the escrow holdings, when given).
///
/// Ties in volume go to the price closest to the snapshot price; on the long
/// side the escrow is served first, then orders with strictly better limits,
/// then orders whose limit equals the clearing price, pro-rata.
pub fn clearing_price_with_limits(
    curve: PoolCurve,
    orders: &[Order],
    snapshot: &Reserves,
    caps: Option<Tokens>,
) -> Settlement {
    let book = Book::new(curve, orders, snapshot, caps);
    if orders.is_empty() {
        return Settlement::empty(Price::unchecked(book.p0));
    }
    let (p, _) = book.best();
    book.settle_at(p)
}

/// Settlement of `orders` at a given price, without optimising it.
pub fn settle_at_price(
    curve: PoolCurve,
    orders: &[Order],
    snapshot: &Reserves,
    caps: Option<Tokens>,
    price: Price,
) -> Settlement {
    Book::new(curve, orders, snapshot, caps).settle_at(price.value())
}

/// Token-y volume executable at `price`.
pub fn executable_volume(
    curve: PoolCurve,
    orders: &[Order],
    snapshot: &Reserves,
    caps: Option<Tokens>,
    price: Price,
) -> f64 {
    Book::new(curve, orders, snapshot, caps).volume(price.value())
}

/// True iff `proposed` attains the maximal executable volume.
pub fn verify_clearing_price(
    curve: PoolCurve,
    orders: &[Order],
    snapshot: &Reserves,
    caps: Option<Tokens>,
    proposed: Price,
) -> bool {
    let book = Book::new(curve, orders, snapshot, caps);
    let max = book
        .candidates()
        .into_iter()
        .map(|p| book.volume(p))
        .fold(book.volume(book.p0), f64::max);
    let got = book.volume(proposed.value());
    got >= max - VOLUME_TOL * max
}

/// Splits what is left in the escrow: `1 − beta` to the pool, `beta` to the
/// producer.
pub fn redistribute(final_pool: &AllocationPool, beta: f64) -> (Tokens, Tokens) {
    let rest = final_pool.reserves;
    let to_producer = rest * beta;
    (rest - to_producer, to_producer)
}
