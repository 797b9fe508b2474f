use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{draw_order, producer_utility, FlowDirection};
use crate::allocation::{clearing_price_with_limits, create_allocation_pool, Order};
use crate::cfmm::{Price, Reserves, Tokens};
use crate::diamond::apply_rebated_move;
use crate::error::MathError;
use crate::ids::AgentId;

use super::config::{ConfigError, ScenarioConfig};
use super::run::{rng_stream, run_scenario, simulate, SimError, SimOptions, SingleRun};

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Option<MeanCi> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanCi {
            n,
            mean,
            se,
            lo: mean - Z95 * se,
            hi: mean + Z95 * se,
        })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Maps `f` over `0..n` on a pool of `jobs` threads (0 = all cores), keeping
/// the output in index order.
pub fn par_map<T, F>(jobs: usize, n: u32, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u32) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

fn run_seed(cfg: &ScenarioConfig, i: u32) -> u64 {
    cfg.seed.wrapping_add(u64::from(i))
}

fn collect<T>(results: Vec<Result<T, SimError>>) -> Result<Vec<T>, SimError> {
    results.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LvrReport {
    pub runs: u32,
    pub blocks: u64,
    /// `1 − β(0)`.
    pub expected_ratio: f64,
    /// Per-run ratio of summed normalized LVR, V0LVER over twin.
    pub ratio: Option<MeanCi>,
    /// Per-run ratio of summed raw LVR.
    pub raw_ratio: Option<MeanCi>,
    pub contains_expected: bool,
    pub excludes_one: bool,
    /// Set when the twin extracted no LVR (e.g. σ = 0), so the ratio is undefined.
    pub undefined: bool,
    pub per_run: Vec<Option<f64>>,
}

/// LVR of the configured pool relative to its β ≡ 0 twin over `cfg.runs`
/// paired runs.
pub fn lvr_experiment(cfg: &ScenarioConfig, jobs: usize) -> Result<LvrReport, SimError> {
    cfg.validate()?;
    let runs = collect(par_map(jobs, cfg.runs, |i| {
        run_scenario(cfg, run_seed(cfg, i), SimOptions::default()).map(|r| r.metrics)
    }))?;
    let ratio_of = |num: f64, den: Option<f64>| match den {
        Some(d) if d > 0.0 => Some(num / d),
        _ => None,
    };
    let per_run: Vec<Option<f64>> = runs
        .iter()
        .map(|m| ratio_of(m.realized_lvr_normalized, m.baseline_lvr_normalized))
        .collect();
    let raw: Vec<Option<f64>> = runs
        .iter()
        .map(|m| ratio_of(m.realized_lvr, m.baseline_lvr))
        .collect();
    let undefined = per_run.iter().any(Option::is_none);
    let defined: Vec<f64> = per_run.iter().flatten().copied().collect();
    let raw_defined: Vec<f64> = raw.iter().flatten().copied().collect();
    let ratio = if undefined { None } else { MeanCi::of(&defined) };
    let raw_ratio = if undefined { None } else { MeanCi::of(&raw_defined) };
    let expected_ratio = 1.0 - cfg.schedule.beta_at(0);
    Ok(LvrReport {
        runs: cfg.runs,
        blocks: cfg.horizon,
        expected_ratio,
        contains_expected: ratio.is_some_and(|c| c.contains(expected_ratio)),
        excludes_one: ratio.is_some_and(|c| !c.contains(1.0)),
        ratio,
        raw_ratio,
        undefined,
        per_run,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub runs: u32,
    pub updates: u64,
    pub rejected_updates: u64,
    /// Update count per gap `H − H_a`.
    pub histogram: BTreeMap<u64, u64>,
    /// Share of updates at gap 0; `None` without updates.
    pub gap0_fraction: Option<f64>,
    pub max_gap: Option<u64>,
}

/// Gap histogram of update transactions over `cfg.runs` runs.
pub fn equilibrium_experiment(cfg: &ScenarioConfig, jobs: usize) -> Result<EquilibriumReport, SimError> {
    cfg.validate()?;
    let runs = collect(par_map(jobs, cfg.runs, |i| {
        simulate(cfg, run_seed(cfg, i), cfg.schedule, SimOptions::default()).map(|r| r.metrics)
    }))?;
    let mut histogram = BTreeMap::new();
    let (mut updates, mut rejected) = (0, 0);
    for m in &runs {
        updates += m.updates;
        rejected += m.rejected_updates;
        for (g, c) in &m.gap_histogram {
            *histogram.entry(*g).or_insert(0) += c;
        }
    }
    let gap0 = histogram.get(&0).copied().unwrap_or(0);
    Ok(EquilibriumReport {
        runs: cfg.runs,
        updates,
        rejected_updates: rejected,
        gap0_fraction: (updates > 0).then(|| gap0 as f64 / updates as f64),
        max_gap: histogram.keys().next_back().copied(),
        histogram,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserPriceReport {
    pub runs: u32,
    pub orders: usize,
    pub batches: usize,
    /// Mean of `(p_c − ε_alloc)/ε_alloc` over executed user orders.
    pub mean: f64,
    /// Standard error clustered by batch (orders in a batch share a price).
    pub se: f64,
    pub within_3se: bool,
    /// Mean signed gain to users (positive = better than ε).
    pub welfare_mean: f64,
    pub welfare_se: f64,
    /// Set for one-sided flow, where deviations reflect price impact.
    pub stress: bool,
}

/// Cluster-robust mean and standard error; `items` are `(cluster, value)`.
pub fn clustered_mean(items: &[((u32, u64), f64)]) -> (f64, f64) {
    let n = items.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = items.iter().map(|(_, v)| v).sum::<f64>() / n as f64;
    let mut sums: BTreeMap<(u32, u64), f64> = BTreeMap::new();
    for (c, v) in items {
        *sums.entry(*c).or_default() += v - mean;
    }
    let g = sums.len() as f64;
    if g < 2.0 {
        return (mean, 0.0);
    }
    let var = sums.values().map(|s| s * s).sum::<f64>() / (n as f64).powi(2) * g / (g - 1.0);
    (mean, var.sqrt())
}

/// Execution-price deviation from ε at allocation over `cfg.runs` runs.
pub fn user_price_experiment(cfg: &ScenarioConfig, jobs: usize) -> Result<UserPriceReport, SimError> {
    cfg.validate()?;
    let runs = collect(par_map(jobs, cfg.runs, |i| {
        simulate(cfg, run_seed(cfg, i), cfg.schedule, SimOptions::default()).map(|r| r.metrics)
    }))?;
    let mut devs = Vec::new();
    let mut welfare = Vec::new();
    for (i, m) in runs.iter().enumerate() {
        for d in m.deviations.iter().filter(|d| !d.producer_order) {
            devs.push(((i as u32, d.allocation), d.rel));
            welfare.push(((i as u32, d.allocation), d.welfare()));
        }
    }
    let (mean, se) = clustered_mean(&devs);
    let (welfare_mean, welfare_se) = clustered_mean(&welfare);
    let batches = devs
        .iter()
        .map(|(c, _)| *c)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(UserPriceReport {
        runs: cfg.runs,
        orders: devs.len(),
        batches,
        mean,
        se,
        within_3se: mean.abs() <= 3.0 * se || mean == 0.0,
        welfare_mean,
        welfare_se,
        stress: cfg.users.direction != FlowDirection::Symmetric,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominancePoint {
    pub multiplier: f64,
    pub alpha: f64,
    pub utility: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub eps: f64,
    pub pool_price: f64,
    pub beta: f64,
    pub trials: u32,
    pub batch_size: u32,
    pub points: Vec<DominancePoint>,
    pub argmax_multiplier: f64,
    pub argmax_alpha: f64,
}

impl DominanceReport {
    pub fn point(&self, multiplier: f64, alpha: f64) -> Option<&DominancePoint> {
        self.points
            .iter()
            .find(|p| p.multiplier == multiplier && p.alpha == alpha)
    }
}

/// Own orders added to a batch of `n` user orders so they make up `alpha`.
pub fn own_order_count(alpha: f64, n: u32) -> usize {
    if alpha <= 0.0 {
        0
    } else {
        (alpha / (1.0 - alpha) * f64::from(n)).round() as usize
    }
}

/// Monte-Carlo producer utility over price multipliers × own-order shares, in
/// one frozen update context: the configured pool at its own price, external
/// price shifted by `eps_shift`, rebate `β(0)`.
///
/// Every grid point sees the same random batches.
pub fn dominance_sweep(cfg: &ScenarioConfig, jobs: usize) -> Result<DominanceReport, SimError> {
    cfg.validate()?;
    let d = &cfg.dominance;
    let curve = cfg.pool.curve;
    let r0 = cfg.reserves();
    let p0 = curve.price(&r0);
    let eps = p0
        .scaled(d.eps_shift)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let beta = cfg.schedule.beta_at(0);
    let bounds = cfg.bounds();
    let n = d.batch_size;
    let max_own = d.alphas.iter().map(|&a| own_order_count(a, n)).max().unwrap_or(0);

    struct Context {
        multiplier: f64,
        p: Price,
        live: Reserves,
        b: f64,
    }
    let contexts: Vec<Context> = d
        .multipliers
        .iter()
        .map(|&m| {
            let p = eps.scaled(m)?;
            let moved = apply_rebated_move(curve, &r0, p, beta)?;
            Ok(Context {
                multiplier: m,
                p,
                live: moved.new_reserves,
                b: moved.live_fraction(),
            })
        })
        .collect::<Result<_, MathError>>()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let cells = contexts.len() * d.alphas.len();
    let trial = |t: u32| -> Result<Vec<f64>, MathError> {
        let mut rng = rng_stream(cfg.seed, u64::from(t));
        let users: Vec<Order> = (0..n)
            .map(|j| draw_order(&cfg.users, eps, bounds, AgentId::User(j), &mut rng))
            .collect();
        let own: Vec<Order> = (0..max_own)
            .map(|_| draw_order(&cfg.users, eps, bounds, AgentId::Producer(0), &mut rng))
            .collect();
        let mut out = Vec::with_capacity(cells);
        for c in &contexts {
            for &alpha in &d.alphas {
                let k = own_order_count(alpha, n);
                let mut orders = users.clone();
                orders.extend_from_slice(&own[..k]);
                let post = if orders.is_empty() {
                    c.live
                } else {
                    let escrow = create_allocation_pool(
                        0,
                        0,
                        orders.len(),
                        c.p,
                        bounds,
                        beta,
                        curve,
                        &c.live,
                        Vec::new(),
                    )?;
                    let s = clearing_price_with_limits(curve, &orders, &c.live, Some(escrow.reserves));
                    c.live.apply(s.pool_delta)?
                };
                let r1 = Reserves::new(post.x() / c.b, post.y() / c.b)?;
                out.push(producer_utility(curve, &r0, c.p, alpha, eps, beta, c.b, &r1)?);
            }
        }
        Ok(out)
    };
    let samples: Vec<Vec<f64>> = par_map(jobs, d.trials, trial)
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e: MathError| SimError::Engine {
            seed: cfg.seed,
            height: 0,
            source: e.into(),
            events: Vec::new(),
        })?;

    let mut points = Vec::with_capacity(cells);
    for (ci, c) in contexts.iter().enumerate() {
        for (ai, &alpha) in d.alphas.iter().enumerate() {
            let idx = ci * d.alphas.len() + ai;
            let col: Vec<f64> = samples.iter().map(|s| s[idx]).collect();
            let stats = MeanCi::of(&col).expect("at least one trial");
            points.push(DominancePoint {
                multiplier: c.multiplier,
                alpha,
                utility: stats.mean,
                se: stats.se,
            });
        }
    }
    let best = points
        .iter()
        .copied()
        .fold(None::<DominancePoint>, |acc, p| match acc {
            Some(a) if a.utility >= p.utility => Some(a),
            _ => Some(p),
        })
        .expect("nonempty grid");
    Ok(DominanceReport {
        eps: eps.value(),
        pool_price: p0.value(),
        beta,
        trials: d.trials,
        batch_size: n,
        points,
        argmax_multiplier: best.multiplier,
        argmax_alpha: best.alpha,
    })
}

/// A single run plus its twin, with events and per-block rows recorded.
pub fn detailed_run(cfg: &ScenarioConfig, events: bool) -> Result<SingleRun, SimError> {
    run_scenario(
        cfg,
        cfg.seed,
        SimOptions {
            record_events: events,
            record_rows: true,
        },
    )
}

/// Summary of one run for the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub blocks: u64,
    pub realized_lvr: f64,
    pub baseline_lvr: Option<f64>,
    pub lvr_ratio: Option<f64>,
    pub normalized_lvr_ratio: Option<f64>,
    pub updates: u64,
    pub rejected_updates: u64,
    pub gap_histogram: BTreeMap<u64, u64>,
    pub executed_orders: u64,
    pub burned_octs: u64,
    pub rejected_reveals: u64,
    pub mean_price_deviation: f64,
    pub price_deviation_se: f64,
    pub payoffs: super::run::PayoffTotals,
    pub max_reconciliation_error: f64,
    pub final_reserves: Tokens,
    pub final_vault: Tokens,
    pub final_constant: f64,
    pub final_eps: f64,
}

impl RunSummary {
    pub fn of(run: &SingleRun) -> Self {
        let m = &run.metrics;
        let ratio = |a: f64, b: Option<f64>| b.filter(|b| *b > 0.0).map(|b| a / b);
        let devs: Vec<((u32, u64), f64)> = m
            .deviations
            .iter()
            .filter(|d| !d.producer_order)
            .map(|d| ((0, d.allocation), d.rel))
            .collect();
        let (mean, se) = clustered_mean(&devs);
        RunSummary {
            seed: m.seed,
            blocks: m.blocks,
            realized_lvr: m.realized_lvr,
            baseline_lvr: m.baseline_lvr,
            lvr_ratio: ratio(m.realized_lvr, m.baseline_lvr),
            normalized_lvr_ratio: ratio(m.realized_lvr_normalized, m.baseline_lvr_normalized),
            updates: m.updates,
            rejected_updates: m.rejected_updates,
            gap_histogram: m.gap_histogram.clone(),
            executed_orders: m.executed_orders,
            burned_octs: m.burned_octs,
            rejected_reveals: m.rejected_reveals,
            mean_price_deviation: mean,
            price_deviation_se: se,
            payoffs: m.payoffs,
            max_reconciliation_error: m.max_reconciliation_error,
            final_reserves: m.final_reserves,
            final_vault: m.final_vault,
            final_constant: m.final_reserves.x * m.final_reserves.y,
            final_eps: m.final_eps,
        }
    }
}
