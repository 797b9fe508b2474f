use v0lver_core::agents::{FlowDirection, ProducerStrategy, UpdatePolicy};
use v0lver_core::allocation::settle_market_batch;
use v0lver_core::diamond::RebateSchedule;
use v0lver_core::sim::{
    dominance_sweep, equilibrium_experiment, lvr_experiment, run_scenario, simulate,
    user_price_experiment, ScenarioConfig, SimOptions,
};
use v0lver_core::{PoolCurve, Price, Reserves};

fn small() -> ScenarioConfig {
    ScenarioConfig {
        runs: 8,
        horizon: 120,
        ..Default::default()
    }
}

fn with_strategy(cfg: &mut ScenarioConfig, count: u32, s: ProducerStrategy) {
    cfg.producers.groups.truncate(1);
    cfg.producers.groups[0].count = count;
    cfg.producers.groups[0].strategy = s;
}

#[test]
fn no_flow_no_volatility_gives_zero_metrics() {
    let mut cfg = small();
    cfg.users.arrival_rate = 0.0;
    cfg.price.sigma = 0.0;
    let run = run_scenario(&cfg, 3, SimOptions::default()).unwrap();
    let m = &run.metrics;
    assert_eq!(m.realized_lvr, 0.0);
    assert_eq!(m.baseline_lvr, Some(0.0));
    assert!(m.deviations.is_empty());
    assert_eq!(m.executed_orders + m.burned_octs, 0);
    assert_eq!(m.payoffs.arbitrage + m.payoffs.escrow + m.payoffs.own_orders, 0.0);
    assert!(m.constant_series.iter().all(|&k| k == m.constant_series[0]));
}

#[test]
fn same_seed_same_metrics() {
    let cfg = small();
    let a = run_scenario(&cfg, 11, SimOptions { record_events: true, record_rows: true }).unwrap();
    let b = run_scenario(&cfg, 11, SimOptions { record_events: true, record_rows: true }).unwrap();
    assert_eq!(serde_json::to_string(&a.metrics).unwrap(), serde_json::to_string(&b.metrics).unwrap());
    assert_eq!(a.events, b.events);
    assert_eq!(a.rows, b.rows);
}

#[test]
fn disabled_schedule_matches_its_twin_exactly() {
    let mut cfg = small();
    cfg.schedule = RebateSchedule::disabled();
    let run = run_scenario(&cfg, 5, SimOptions::default()).unwrap();
    assert_eq!(Some(run.metrics.realized_lvr), run.metrics.baseline_lvr);
    let r = lvr_experiment(&cfg, 2).unwrap();
    let ci = r.ratio.unwrap();
    assert!((ci.mean - 1.0).abs() < 1e-12 && ci.se < 1e-12);
}

#[test]
fn zero_volatility_ratio_is_flagged_undefined() {
    let mut cfg = small();
    cfg.price.sigma = 0.0;
    cfg.users.arrival_rate = 0.0;
    let r = lvr_experiment(&cfg, 2).unwrap();
    assert!(r.undefined);
    assert!(r.ratio.is_none());
    assert!(!r.contains_expected && !r.excludes_one);
}

#[test]
fn payoff_decomposition_reconciles() {
    let mut cfg = small();
    cfg.producers.groups[0].strategy.alpha = 0.3;
    cfg.users.reveal_probability = 0.7;
    let run = simulate(&cfg, 9, cfg.schedule, SimOptions::default()).unwrap();
    assert!(run.metrics.max_reconciliation_error <= 1e-9, "{}", run.metrics.max_reconciliation_error);
    assert!(run.metrics.burned_octs > 0);
}

#[test]
fn never_updating_roster_has_empty_histogram() {
    let mut cfg = small();
    with_strategy(&mut cfg, 3, ProducerStrategy { update: UpdatePolicy::Never, ..Default::default() });
    let r = equilibrium_experiment(&cfg, 2).unwrap();
    assert_eq!(r.updates, 0);
    assert!(r.histogram.is_empty() && r.gap0_fraction.is_none());
}

#[test]
fn threshold_monopolist_waits_for_the_rebate_to_expire() {
    let mut cfg = small();
    with_strategy(
        &mut cfg,
        1,
        ProducerStrategy { update: UpdatePolicy::Threshold { min_payoff: 100.0 }, ..Default::default() },
    );
    let r = equilibrium_experiment(&cfg, 2).unwrap();
    let z = u64::from(cfg.schedule.z_max());
    assert!(r.max_gap.unwrap() >= z, "{:?}", r.histogram);
    assert!(r.gap0_fraction.unwrap() < 0.5);
}

#[test]
fn best_response_monopolist_also_waits() {
    let mut cfg = small();
    with_strategy(&mut cfg, 1, ProducerStrategy::default());
    let r = equilibrium_experiment(&cfg, 2).unwrap();
    assert!(r.max_gap.unwrap() >= u64::from(cfg.schedule.z_max()));
}

#[test]
fn competitive_roster_updates_at_gap_zero() {
    let r = equilibrium_experiment(&small(), 2).unwrap();
    assert!(r.gap0_fraction.unwrap() >= 0.99);
}

#[test]
fn one_sided_flow_is_flagged_and_costs_users() {
    for direction in [FlowDirection::BuyOnly, FlowDirection::SellOnly] {
        let mut cfg = small();
        cfg.users.direction = direction;
        with_strategy(&mut cfg, 4, ProducerStrategy::honest());
        let r = user_price_experiment(&cfg, 2).unwrap();
        assert!(r.stress);
        assert!(r.welfare_mean < 0.0 && r.welfare_mean.abs() > 3.0 * r.welfare_se, "{r:?}");
    }
}

#[test]
fn balanced_batch_at_eps_executes_at_eps() {
    let eps = 1.25;
    let snap = Reserves::new(125.0, 100.0).unwrap();
    let s = settle_market_batch(PoolCurve::ConstantProduct, &snap, 3.0 * eps, 3.0).unwrap();
    assert_eq!(s.price, Price::new(eps).unwrap());
    assert!(s.pool_delta.is_zero());
}

#[test]
fn dominance_without_orders_is_rebated_lvr_curve() {
    let mut cfg = ScenarioConfig::default();
    cfg.dominance.batch_size = 0;
    cfg.dominance.alphas = vec![0.0];
    cfg.dominance.trials = 3;
    let r = dominance_sweep(&cfg, 1).unwrap();
    let curve = PoolCurve::ConstantProduct;
    let r0 = cfg.reserves();
    let eps = Price::new(r.eps).unwrap();
    let k = curve.invariant(&r0);
    for p in &r.points {
        let target = curve.reserves_at_price(k, eps.scaled(p.multiplier).unwrap()).unwrap();
        let lvr = v0lver_core::cfmm::lvr_of_move(&r0, &target, eps);
        assert!((p.utility - (1.0 - r.beta) * lvr).abs() <= 1e-9 * r0.value_at(eps));
        assert!(p.se <= 1e-12 * p.utility.abs().max(1.0));
    }
    assert_eq!(r.argmax_multiplier, 1.0);
}

#[test]
fn dominance_scales_with_one_minus_beta() {
    let mut a = ScenarioConfig::default();
    a.dominance.trials = 200;
    a.dominance.alphas = vec![0.0, 0.5];
    let mut b = a.clone();
    b.schedule = RebateSchedule::linear(4, 0.95).unwrap();
    let ra = dominance_sweep(&a, 2).unwrap();
    let rb = dominance_sweep(&b, 2).unwrap();
    let factor = (1.0 - rb.beta) / (1.0 - ra.beta);
    for (pa, pb) in ra.points.iter().zip(&rb.points) {
        if pa.alpha == 0.0 {
            assert!((pb.utility - factor * pa.utility).abs() <= 1e-9 * pa.utility.abs().max(1.0));
        }
        // Utilities shrink toward zero as the rebate grows.
        assert!(pb.utility.abs() <= pa.utility.abs() + 1e-9);
    }
}
