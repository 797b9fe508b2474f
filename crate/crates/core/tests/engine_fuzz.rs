mod common;

use proptest::prelude::*;

use v0lver_core::sim::{simulate, ScenarioConfig, SimOptions};
use v0lver_core::engine::EventKind;

use common::fuzz_engine;

#[test]
fn long_fuzz_conserves_supply_and_respects_lifecycle() {
    let r = fuzz_engine(0xF00D, 100_000);
    assert!(r.clean(), "{:?} {:?}", r.illegal_transitions.first(), r.invariant_errors.first());
    assert!(r.max_conservation_error <= 1e-6);
    assert!(r.executed > 0 && r.burned > 0 && r.rejected > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn short_fuzz_runs_are_clean(seed in any::<u64>()) {
        let r = fuzz_engine(seed, 5_000);
        prop_assert!(r.clean(), "{:?} {:?}", r.illegal_transitions.first(), r.invariant_errors.first());
    }

    /// Simulated chains never carry two update transactions in one block and
    /// allocation heights strictly increase.
    #[test]
    fn one_update_per_block(seed in any::<u64>()) {
        let cfg = ScenarioConfig { horizon: 80, ..Default::default() };
        let run = simulate(&cfg, seed, cfg.schedule, SimOptions { record_events: true, record_rows: false }).unwrap();
        let mut last_block = None;
        let mut last_alloc = None;
        for e in &run.events {
            if let EventKind::Update { allocation_height, .. } = e.kind {
                prop_assert!(last_block != Some(e.height));
                prop_assert!(last_alloc.is_none_or(|a| allocation_height > a));
                prop_assert!(allocation_height <= e.height);
                last_block = Some(e.height);
                last_alloc = Some(allocation_height);
            }
        }
    }
}
