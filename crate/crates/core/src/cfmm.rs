//! Constant-function market maker mathematics.
//!
//! Prices are quoted as token-x per token-y. A pool is a point `(x, y)` on the
//! level set `f(x, y) = k` of its invariant; arbitrage moves the point along
//! that level set, and the loss-versus-rebalancing (LVR) of a move is the value
//! it hands to the mover when valued at the external price.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{MathError, MathResult};

/// Relative tolerance for "the point lies on the intended level set".
pub const FEASIBILITY_TOL: f64 = 1e-12;
/// Relative tolerance for matching a pool price against a target price.
pub const PRICE_TOL: f64 = 1e-9;
/// Relative tolerance used when comparing invariant levels of two points
/// produced by independent computations.
pub const LEVEL_TOL: f64 = 1e-9;

/// A strictly positive, finite price in token-x per token-y.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Price(f64);

impl Price {
    pub fn new(value: f64) -> MathResult<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Price(value))
        } else {
            Err(MathError::InvalidPrice(value))
        }
    }

    /// For values already known to be positive and finite.
    #[inline]
    pub(crate) fn unchecked(value: f64) -> Self {
        debug_assert!(value.is_finite() && value > 0.0);
        Price(value)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Scales the price by a positive factor.
    pub fn scaled(self, factor: f64) -> MathResult<Self> {
        Price::new(self.0 * factor)
    }

    /// `|self − other| / other`.
    pub fn rel_diff(self, other: Price) -> f64 {
        (self.0 - other.0).abs() / other.0
    }
}

impl TryFrom<f64> for Price {
    type Error = MathError;

    fn try_from(value: f64) -> MathResult<Self> {
        Price::new(value)
    }
}

impl From<Price> for f64 {
    fn from(p: Price) -> f64 {
        p.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A signed pair of token amounts. Used for balances, flows and deltas.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tokens {
    pub x: f64,
    pub y: f64,
}

impl Tokens {
    pub const ZERO: Tokens = Tokens { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Tokens { x, y }
    }

    /// Value in token-x units at price `eps`.
    #[inline]
    pub fn value_at(self, eps: Price) -> f64 {
        self.x + self.y * eps.value()
    }

    pub fn is_zero(self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }

    /// True when neither component is below `-tol`.
    pub fn is_nonnegative(self, tol: f64) -> bool {
        self.x >= -tol && self.y >= -tol
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }
}

impl Add for Tokens {
    type Output = Tokens;
    fn add(self, rhs: Tokens) -> Tokens {
        Tokens::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Tokens {
    fn add_assign(&mut self, rhs: Tokens) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Tokens {
    type Output = Tokens;
    fn sub(self, rhs: Tokens) -> Tokens {
        Tokens::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Tokens {
    fn sub_assign(&mut self, rhs: Tokens) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Tokens {
    type Output = Tokens;
    fn mul(self, rhs: f64) -> Tokens {
        Tokens::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Tokens {
    type Output = Tokens;
    fn neg(self) -> Tokens {
        Tokens::new(-self.x, -self.y)
    }
}

impl std::iter::Sum for Tokens {
    fn sum<I: Iterator<Item = Tokens>>(iter: I) -> Tokens {
        iter.fold(Tokens::ZERO, |a, b| a + b)
    }
}

/// Reserves of a live pool. Both sides are strictly positive and finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Tokens", into = "Tokens")]
pub struct Reserves {
    x: f64,
    y: f64,
}

impl Reserves {
    pub fn new(x: f64, y: f64) -> MathResult<Self> {
        if x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0 {
            Ok(Reserves { x, y })
        } else {
            Err(MathError::Domain { x, y })
        }
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn tokens(&self) -> Tokens {
        Tokens::new(self.x, self.y)
    }

    /// Applies a signed delta, failing if the result leaves the domain.
    pub fn apply(&self, delta: Tokens) -> MathResult<Reserves> {
        Reserves::new(self.x + delta.x, self.y + delta.y)
    }

    pub fn value_at(&self, eps: Price) -> f64 {
        self.tokens().value_at(eps)
    }
}

impl TryFrom<Tokens> for Reserves {
    type Error = MathError;
    fn try_from(t: Tokens) -> MathResult<Self> {
        Reserves::new(t.x, t.y)
    }
}

impl From<Reserves> for Tokens {
    fn from(r: Reserves) -> Tokens {
        r.tokens()
    }
}

/// Curve family of a pool.
///
/// Every supported family must have the property that the LVR-maximising
/// move lands on the point whose pool price equals the external price; the
/// rest of the protocol relies on it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolCurve {
    /// `x · y = k`, price `x / y`.
    #[default]
    ConstantProduct,
}

impl PoolCurve {
    /// Whether the max-LVR move of this family lands exactly at the external price.
    pub fn lands_at_external_price(&self) -> bool {
        match self {
            PoolCurve::ConstantProduct => true,
        }
    }

    /// The pool constant `f(x, y)`.
    pub fn invariant(&self, r: &Reserves) -> f64 {
        match self {
            PoolCurve::ConstantProduct => r.x * r.y,
        }
    }

    pub fn price(&self, r: &Reserves) -> Price {
        match self {
            // Reserves are positive and finite, so the ratio is too.
            PoolCurve::ConstantProduct => Price(r.x / r.y),
        }
    }

    /// The point of level set `k` whose pool price is `p`.
    pub fn reserves_at_price(&self, k: f64, p: Price) -> MathResult<Reserves> {
        if !(k.is_finite() && k > 0.0) {
            return Err(MathError::Parameter { name: "k", value: k });
        }
        match self {
            PoolCurve::ConstantProduct => Reserves::new((k * p.0).sqrt(), (k / p.0).sqrt()),
        }
    }

    /// LVR of moving the pool from `before` to `after` when the external price
    /// is `eps`; positive means the mover profits.
    pub fn lvr_value(&self, before: &Reserves, after: &Reserves, eps: Price) -> MathResult<f64> {
        let k0 = self.invariant(before);
        let k1 = self.invariant(after);
        if (k0 - k1).abs() > LEVEL_TOL * k0.max(k1) {
            return Err(MathError::Inconsistent {
                before: k0,
                after: k1,
            });
        }
        Ok(lvr_of_move(before, after, eps))
    }

    /// The feasible point maximising LVR against `eps`, and that maximal LVR.
    pub fn max_lvr(&self, r: &Reserves, eps: Price) -> (Reserves, f64) {
        if self.price(r) == eps {
            return (*r, 0.0);
        }
        match self {
            PoolCurve::ConstantProduct => {
                let k = self.invariant(r);
                let target = self
                    .reserves_at_price(k, eps)
                    .expect("positive k and price give positive reserves");
                // (√x − √(y·ε))², algebraically equal to x + yε − 2√(kε) and never negative.
                let gap = r.x.sqrt() - (r.y * eps.0).sqrt();
                (target, gap * gap)
            }
        }
    }

    /// Pool-side delta of trading at a single average price `p` such that the
    /// pool lands back on its own level set.
    ///
    /// For `p` above the pool price the pool sells y and receives `p` x per y;
    /// below it the pool sells x. The sign convention is pool-centric:
    /// positive components flow into the pool.
    pub fn uniform_trade(&self, r: &Reserves, p: Price) -> Tokens {
        match self {
            PoolCurve::ConstantProduct => {
                let p0 = self.price(r).0;
                if p.0 > p0 {
                    let y_out = r.y - r.x / p.0;
                    Tokens::new(y_out * p.0, -y_out)
                } else if p.0 < p0 {
                    let x_out = r.x - p.0 * r.y;
                    Tokens::new(-x_out, x_out / p.0)
                } else {
                    Tokens::ZERO
                }
            }
        }
    }
}

/// `R_x,t − R_x,t+1 + (R_y,t − R_y,t+1)·ε` without a level-set check.
#[inline]
pub fn lvr_of_move(before: &Reserves, after: &Reserves, eps: Price) -> f64 {
    (before.x - after.x) + (before.y - after.y) * eps.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: f64, y: f64) -> Reserves {
        Reserves::new(x, y).unwrap()
    }

    fn p(v: f64) -> Price {
        Price::new(v).unwrap()
    }

    const CP: PoolCurve = PoolCurve::ConstantProduct;

    #[test]
    fn price_examples() {
        assert_eq!(CP.price(&r(100.0, 100.0)).value(), 1.0);
        assert_eq!(CP.price(&r(200.0, 100.0)).value(), 2.0);
        let pt = r(110.0, 10000.0 / 110.0);
        assert!((CP.price(&pt).value() - 1.21).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(Reserves::new(0.0, 1.0).is_err());
        assert!(Reserves::new(1.0, -1.0).is_err());
        assert!(Reserves::new(f64::NAN, 1.0).is_err());
        assert!(Price::new(0.0).is_err());
        assert!(Price::new(-2.0).is_err());
        assert!(Price::new(f64::NAN).is_err());
        assert!(Price::new(f64::INFINITY).is_err());
        assert!(CP.reserves_at_price(0.0, p(1.0)).is_err());
    }

    #[test]
    fn reserves_at_price_examples() {
        let a = CP.reserves_at_price(10000.0, p(1.0)).unwrap();
        assert!((a.x() - 100.0).abs() < 1e-12 && (a.y() - 100.0).abs() < 1e-12);
        let b = CP.reserves_at_price(10000.0, p(1.21)).unwrap();
        assert!((b.x() - 110.0).abs() < 1e-10);
        assert!((b.y() - 90.909_090_909_090_9).abs() < 1e-10);
        let c = CP.reserves_at_price(10000.0, p(4.0)).unwrap();
        assert!((c.x() - 200.0).abs() < 1e-12 && (c.y() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn lvr_value_examples() {
        let a = r(100.0, 100.0);
        let b = r(110.0, 10000.0 / 110.0);
        assert_eq!(CP.lvr_value(&a, &a, p(3.0)).unwrap(), 0.0);
        assert!((CP.lvr_value(&a, &b, p(1.21)).unwrap() - 1.0).abs() < 1e-10);
        let stale = CP.lvr_value(&a, &b, p(1.0)).unwrap();
        assert!((stale + 10.0 / 11.0).abs() < 1e-10);
    }

    #[test]
    fn lvr_value_rejects_points_on_different_levels() {
        let err = CP.lvr_value(&r(100.0, 100.0), &r(100.0, 101.0), p(1.0));
        assert!(matches!(err, Err(MathError::Inconsistent { .. })));
    }

    #[test]
    fn max_lvr_examples() {
        let a = r(100.0, 100.0);
        let (pt, l) = CP.max_lvr(&a, p(1.0));
        assert_eq!((pt, l), (a, 0.0));

        let (pt, l) = CP.max_lvr(&a, p(1.21));
        assert!((pt.x() - 110.0).abs() < 1e-10);
        assert!((pt.y() - 10000.0 / 110.0).abs() < 1e-10);
        assert!((l - 1.0).abs() < 1e-10);

        let (pt, l) = CP.max_lvr(&a, p(0.81));
        assert!((pt.x() - 90.0).abs() < 1e-10);
        assert!((pt.y() - 10000.0 / 90.0).abs() < 1e-10);
        assert!((l - 1.0).abs() < 1e-10);
    }

    #[test]
    fn uniform_trade_lands_on_level_set() {
        let a = r(100.0, 100.0);
        for &pe in &[0.5, 0.9, 1.047_619_047_619_047_7, 1.3, 4.0] {
            let d = CP.uniform_trade(&a, p(pe));
            let after = a.apply(d).unwrap();
            let rel = (CP.invariant(&after) - 10000.0).abs() / 10000.0;
            assert!(rel < 1e-12, "p={pe} rel={rel}");
            // Average price of the trade is exactly p.
            assert!((d.x + d.y * pe).abs() < 1e-9);
        }
        assert_eq!(CP.uniform_trade(&a, p(1.0)), Tokens::ZERO);
    }

    #[test]
    fn price_serde_rejects_nonpositive() {
        assert!(serde_json::from_str::<Price>("-1.0").is_err());
        assert_eq!(serde_json::from_str::<Price>("2.5").unwrap().value(), 2.5);
    }
}
