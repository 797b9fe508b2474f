use proptest::prelude::*;

use v0lver_core::cfmm::lvr_of_move;
use v0lver_core::{PoolCurve, Price, Reserves};

const CP: PoolCurve = PoolCurve::ConstantProduct;

fn reserves() -> impl Strategy<Value = Reserves> {
    (1.0f64..7.0, 1.0f64..7.0).prop_map(|(a, b)| Reserves::new(10f64.powf(a), 10f64.powf(b)).unwrap())
}

fn near_price(r: &Reserves, log_shift: f64) -> Price {
    Price::new(CP.price(r).value() * log_shift.exp()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn price_condition_holds_at_target(r in reserves(), s in -2.0f64..2.0) {
        let p = near_price(&r, s);
        let t = CP.reserves_at_price(CP.invariant(&r), p).unwrap();
        prop_assert!((CP.price(&t).value() - p.value()).abs() <= 1e-12 * p.value());
        prop_assert!((CP.invariant(&t) - CP.invariant(&r)).abs() <= 1e-12 * CP.invariant(&r));
    }

    #[test]
    fn max_lvr_is_nonnegative_and_zero_at_pool_price(r in reserves(), s in -2.0f64..2.0) {
        let (_, l) = CP.max_lvr(&r, near_price(&r, s));
        prop_assert!(l >= 0.0);
        let (_, l0) = CP.max_lvr(&r, CP.price(&r));
        prop_assert_eq!(l0, 0.0);
    }

    /// Doubling reserves doubles the LVR (the invariant is homogeneous).
    #[test]
    fn max_lvr_scales_with_reserves(r in reserves(), s in -1.0f64..1.0, c in 0.1f64..10.0) {
        let eps = near_price(&r, s);
        let scaled = Reserves::new(r.x() * c, r.y() * c).unwrap();
        let (_, l) = CP.max_lvr(&r, eps);
        let (_, lc) = CP.max_lvr(&scaled, eps);
        prop_assert!((lc - c * l).abs() <= 1e-9 * (r.x() + r.y() * eps.value()) * c);
    }

    /// Brute force over a log-spaced grid of curve points never beats the
    /// closed-form maximiser.
    #[test]
    fn max_lvr_beats_grid(r in reserves(), s in -1.5f64..1.5) {
        let eps = near_price(&r, s);
        let (at, l) = CP.max_lvr(&r, eps);
        let k = CP.invariant(&r);
        let scale = r.x() + r.y() * eps.value();
        let mut best = f64::NEG_INFINITY;
        for i in 0..=400 {
            let q = Price::new(eps.value() * (-(2.0f64)).exp() * (4.0 * i as f64 / 400.0).exp()).unwrap();
            let pt = CP.reserves_at_price(k, q).unwrap();
            best = best.max(lvr_of_move(&r, &pt, eps));
        }
        prop_assert!(best <= l + 1e-9 * scale);
        prop_assert!((lvr_of_move(&r, &at, eps) - l).abs() <= 1e-9 * scale);
    }

    /// A uniform-price trade keeps the pool on its level set and its x per y
    /// equals the quoted price.
    #[test]
    fn uniform_trade_stays_on_curve(r in reserves(), s in -0.5f64..0.5) {
        let p = near_price(&r, s);
        let d = CP.uniform_trade(&r, p);
        let after = r.apply(d).unwrap();
        prop_assert!((CP.invariant(&after) - CP.invariant(&r)).abs() <= 1e-9 * CP.invariant(&r));
        if d.y != 0.0 {
            prop_assert!((-d.x / d.y - p.value()).abs() <= 1e-9 * p.value());
        }
    }
}

#[test]
fn lvr_example_values() {
    let r = Reserves::new(100.0, 100.0).unwrap();
    let (t, l) = CP.max_lvr(&r, Price::new(4.0).unwrap());
    assert!((t.x() - 200.0).abs() < 1e-12 && (t.y() - 50.0).abs() < 1e-12);
    assert!((l - 100.0).abs() < 1e-12);
}
