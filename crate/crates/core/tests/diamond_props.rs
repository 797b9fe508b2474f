use proptest::prelude::*;

use v0lver_core::diamond::{apply_rebated_move, producer_arb_payoff, vault_reenter, RebateSchedule, Vault};
use v0lver_core::{PoolCurve, Price, Reserves};

const CP: PoolCurve = PoolCurve::ConstantProduct;

fn case() -> impl Strategy<Value = (Reserves, Price, f64)> {
    (1.0f64..6.0, 1.0f64..6.0, -1.0f64..1.0, 0.0f64..0.999).prop_map(|(a, b, s, beta)| {
        let r = Reserves::new(10f64.powf(a), 10f64.powf(b)).unwrap();
        let eps = Price::new(r.x() / r.y() * s.exp()).unwrap();
        (r, eps, beta)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn honest_payoff_is_rebated_lvr((r, eps, beta) in case()) {
        let (_, l) = CP.max_lvr(&r, eps);
        let m = apply_rebated_move(CP, &r, eps, beta).unwrap();
        let scale = r.x() + r.y() * eps.value();
        prop_assert!((producer_arb_payoff(&m, eps) - (1.0 - beta) * l).abs() <= 1e-9 * scale);
    }

    #[test]
    fn any_other_target_pays_less((r, eps, beta) in case(), s in -1.0f64..1.0) {
        let (_, l) = CP.max_lvr(&r, eps);
        let p = Price::new(eps.value() * s.exp()).unwrap();
        let m = apply_rebated_move(CP, &r, p, beta).unwrap();
        let scale = r.x() + r.y() * eps.value();
        prop_assert!(producer_arb_payoff(&m, eps) <= (1.0 - beta) * l + 1e-9 * scale);
    }

    /// Live reserves sit at the target, and live + vault + producer flow
    /// account for every token.
    #[test]
    fn move_lands_at_target_and_conserves((r, eps, beta) in case(), s in -1.0f64..1.0) {
        let p = Price::new(eps.value() * s.exp()).unwrap();
        let m = apply_rebated_move(CP, &r, p, beta).unwrap();
        prop_assert!((CP.price(&m.new_reserves).value() - p.value()).abs() <= 1e-9 * p.value());
        let total = m.new_reserves.tokens() + m.vault_deposit + m.producer_flow - r.tokens();
        prop_assert!(total.max_abs() <= 1e-9 * (r.x() + r.y()));
        prop_assert!(m.vault_deposit.x >= 0.0 && m.vault_deposit.y >= 0.0);
    }

    /// Re-entry deposits at ratio ε and carries the vault's value.
    #[test]
    fn reentry_preserves_value((r, eps, _) in case(), vx in 0.0f64..100.0, vy in 0.0f64..100.0) {
        let v = Vault::new(vx, vy).unwrap();
        let re = vault_reenter(&r, &v, eps).unwrap();
        let d = re.deposited;
        prop_assert!((d.value_at(eps) - v.holdings().value_at(eps)).abs() <= 1e-9 * (1.0 + d.value_at(eps)));
        if !v.is_empty() {
            prop_assert!((d.x / d.y - eps.value()).abs() <= 1e-9 * eps.value());
        }
    }

    #[test]
    fn schedule_is_monotone(z in 1u32..20, b0 in 0.0f64..0.999, g in 0u64..40) {
        let s = RebateSchedule::linear(z, b0).unwrap();
        prop_assert!(s.beta_at(g + 1) <= s.beta_at(g));
        prop_assert!((0.0..1.0).contains(&s.beta_at(g)));
        prop_assert_eq!(s.beta_at(u64::from(z)), 0.0);
    }
}
