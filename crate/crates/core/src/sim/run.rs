use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{gen_user_octs, producer_act, step_price, ActContext, PriceProcess};
use crate::cfmm::Tokens;
use crate::diamond::RebateSchedule;
use crate::engine::{ChainState, EngineError, Event, SealedOrder};
use crate::ids::{AgentId, OctId, Side, Token};

use super::config::{ConfigError, ScenarioConfig, Selection};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("engine failure at height {height} (seed {seed}): {source}")]
    Engine {
        seed: u64,
        height: u64,
        source: EngineError,
        /// Event log up to the failure (empty unless events were recorded).
        events: Vec<Event>,
    },
}

impl SimError {
    pub fn is_invariant_violation(&self) -> bool {
        match self {
            SimError::Engine { source, .. } => source.is_invariant_violation(),
            SimError::Config(_) => false,
        }
    }

    /// Seed of the failing run, for engine failures.
    pub fn seed(&self) -> Option<u64> {
        match self {
            SimError::Engine { seed, .. } => Some(*seed),
            SimError::Config(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub record_events: bool,
    pub record_rows: bool,
}

/// Independent RNG stream `stream` of a run seeded with `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_PRICE: u64 = 0;
const STREAM_USERS: u64 = 1;
const STREAM_SELECTION: u64 = 2;
const STREAM_PRODUCERS: u64 = 16;

/// Execution-price deviation of one executed order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub allocation: u64,
    pub side: Side,
    /// `(p_c − ε_alloc) / ε_alloc`.
    pub rel: f64,
    pub producer_order: bool,
}

impl Deviation {
    /// Gain to the order owner per unit price: buyers of y gain when the
    /// price is below ε, sellers when above.
    pub fn welfare(&self) -> f64 {
        match self.side {
            Side::BuyY => -self.rel,
            Side::SellY => self.rel,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PayoffTotals {
    /// Arbitrage against the pool through update transactions.
    pub arbitrage: f64,
    /// Net result of escrow deposits and their redistributed share.
    pub escrow: f64,
    /// Result of the producers' own orders, burns included.
    pub own_orders: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub blocks: u64,
    /// Sum of update payoffs at the block's ε.
    pub realized_lvr: f64,
    /// Sum of update payoffs, each divided by the live-reserve value at ε.
    pub realized_lvr_normalized: f64,
    /// The same two sums for the β ≡ 0 twin run.
    pub baseline_lvr: Option<f64>,
    pub baseline_lvr_normalized: Option<f64>,
    pub updates: u64,
    pub rejected_updates: u64,
    pub gap_histogram: BTreeMap<u64, u64>,
    pub deviations: Vec<Deviation>,
    pub executed_orders: u64,
    pub burned_octs: u64,
    pub rejected_reveals: u64,
    pub payoffs: PayoffTotals,
    /// Largest per-block gap between the payoff attribution and the change of
    /// producer holdings, both valued at ε, relative to the holdings' value.
    pub max_reconciliation_error: f64,
    pub constant_series: Vec<f64>,
    pub final_reserves: Tokens,
    pub final_vault: Tokens,
    pub final_eps: f64,
}

/// One row of the per-block series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub height: u64,
    pub eps: f64,
    pub producer: u32,
    pub pool_x: f64,
    pub pool_y: f64,
    pub pool_price: f64,
    pub vault_x: f64,
    pub vault_y: f64,
    pub constant: f64,
    pub updated: bool,
    pub gap: Option<u64>,
    pub beta: Option<f64>,
    pub payoff_arbitrage: f64,
    pub payoff_escrow: f64,
    pub payoff_own_orders: f64,
    pub producer_value_change: f64,
    pub executed_orders: u64,
    pub burned_octs: u64,
    pub mempool: u64,
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub metrics: RunMetrics,
    pub rows: Vec<BlockRow>,
    pub events: Vec<Event>,
    pub chain: ChainState,
}

struct Secret {
    sealed: SealedOrder,
    reveal: bool,
    delay: u64,
}

fn token_vec(side: Token, amount: f64) -> Tokens {
    match side {
        Token::X => Tokens::new(amount, 0.0),
        Token::Y => Tokens::new(0.0, amount),
    }
}

/// Producers' holdings: balances, escrow deposits at cost and collateral of
/// their live OCTs.
fn producer_holdings(chain: &ChainState, n: usize) -> Tokens {
    let balances: Tokens = (0..n as u32).map(|i| chain.ledger().producer(i)).sum();
    let deposits: Tokens = chain
        .open_allocations()
        .map(|a| a.pool.producer_contribution)
        .sum();
    let locked: Tokens = chain
        .octs()
        .filter(|o| matches!(o.owner, AgentId::Producer(_)) && !o.state.is_terminal())
        .map(|o| token_vec(o.collateral_side, o.collateral))
        .sum();
    balances + deposits + locked
}

/// Simulates one run of `cfg` under `schedule`.
pub fn simulate(
    cfg: &ScenarioConfig,
    seed: u64,
    schedule: RebateSchedule,
    opts: SimOptions,
) -> Result<SingleRun, SimError> {
    cfg.validate()?;
    let roster = cfg.producers.expand();
    let n = roster.len();
    let endowments: Vec<(u32, Tokens)> = roster
        .iter()
        .enumerate()
        .map(|(i, (_, e))| (i as u32, *e))
        .collect();
    let eps0 = cfg.eps0();
    let bounds = cfg.bounds();
    let fail = |chain: &mut ChainState, source: EngineError| SimError::Engine {
        seed,
        height: chain.height(),
        source,
        events: chain.take_events(),
    };
    let mut chain = ChainState::new(cfg.engine_config(schedule), cfg.reserves(), &endowments, eps0)
        .map_err(|source| SimError::Engine {
            seed,
            height: 0,
            source,
            events: Vec::new(),
        })?
        .with_event_log(opts.record_events);

    let process = PriceProcess::new(eps0, cfg.price.sigma).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut rng_price = rng_stream(seed, STREAM_PRICE);
    let mut rng_users = rng_stream(seed, STREAM_USERS);
    let mut rng_select = rng_stream(seed, STREAM_SELECTION);
    let mut rng_producers: Vec<ChaCha8Rng> = (0..n as u64)
        .map(|i| rng_stream(seed, STREAM_PRODUCERS + i))
        .collect();
    let q = cfg.producers.repeat_probability();

    let mut metrics = RunMetrics {
        seed,
        blocks: cfg.horizon,
        ..Default::default()
    };
    let mut rows = Vec::new();
    let mut secrets: BTreeMap<OctId, Secret> = BTreeMap::new();
    let mut reveal_queue: BTreeMap<u64, Vec<OctId>> = BTreeMap::new();
    let mut eps = eps0;

    for h in 0..cfg.horizon {
        if h > 0 {
            eps = step_price(&process, eps, &mut rng_price);
        }
        chain.set_external_price(eps);
        let holdings_before = producer_holdings(&chain, n);

        for sealed in gen_user_octs(&cfg.users, eps, bounds, &mut rng_users) {
            let reveal = rng_users.random::<f64>() < cfg.users.reveal_probability;
            let o = sealed.order;
            let id = chain
                .submit_oct(o.owner, o.side.sold(), sealed.commitment())
                .map_err(|e| fail(&mut chain, e))?;
            secrets.insert(
                id,
                Secret {
                    sealed,
                    reveal,
                    delay: cfg.users.reveal_delay,
                },
            );
        }

        let who = match cfg.producers.selection {
            Selection::Rotation => (h % n as u64) as usize,
            Selection::Random => rng_select.random_range(0..n),
        };
        let ctx = ActContext {
            producer: who as u32,
            eps,
            lookahead_q: q,
            sigma: cfg.price.sigma,
            flow: &cfg.users,
        };
        let actions = producer_act(&roster[who].0, &chain, &ctx, &mut rng_producers[who]);
        let mut insert = actions.insert;
        for sealed in actions.own_orders {
            let o = sealed.order;
            match chain.submit_oct(o.owner, o.side.sold(), sealed.commitment()) {
                Ok(id) => {
                    secrets.insert(
                        id,
                        Secret {
                            sealed,
                            reveal: true,
                            delay: 0,
                        },
                    );
                    insert.push(id);
                }
                Err(e) if e.is_invariant_violation() => return Err(fail(&mut chain, e)),
                Err(_) => {}
            }
        }
        chain
            .insert_octs(who as u32, &insert)
            .map_err(|e| fail(&mut chain, e))?;

        let mut payoff_arbitrage = 0.0;
        let mut gap = None;
        let mut beta = None;
        if let Some((h_a, p)) = actions.update {
            match chain.apply_update_tx(who as u32, h_a, p) {
                Ok(u) => {
                    metrics.updates += 1;
                    *metrics.gap_histogram.entry(u.gap).or_default() += 1;
                    metrics.realized_lvr += u.payoff;
                    metrics.realized_lvr_normalized += u.payoff / u.value_before;
                    payoff_arbitrage = u.payoff;
                    gap = Some(u.gap);
                    beta = Some(u.beta);
                    for id in &u.allocated {
                        if let Some(s) = secrets.get(id) {
                            if s.reveal {
                                reveal_queue.entry(h + s.delay).or_default().push(*id);
                            }
                        }
                    }
                }
                Err(e) if e.is_invariant_violation() => return Err(fail(&mut chain, e)),
                Err(_) => metrics.rejected_updates += 1,
            }
        }

        for id in reveal_queue.remove(&h).unwrap_or_default() {
            let sealed = secrets[&id].sealed;
            match chain.reveal_order(id, &sealed) {
                Ok(()) => {}
                Err(e) if e.is_invariant_violation() => return Err(fail(&mut chain, e)),
                Err(_) => metrics.rejected_reveals += 1,
            }
        }

        let out = chain.advance_block().map_err(|e| fail(&mut chain, e))?;

        let mut payoff_escrow = 0.0;
        let mut payoff_own = 0.0;
        let mut executed = 0;
        let mut burned = 0;
        for ex in &out.executions {
            payoff_escrow += (ex.to_producer - ex.producer_contribution).value_at(eps);
            let pc = ex.settlement.price.value();
            let ea = ex.eps_at_allocation.value();
            for f in &ex.fills {
                secrets.remove(&f.oct);
                let own = matches!(f.owner, AgentId::Producer(_));
                if own {
                    let sold = token_vec(f.order.side.sold(), f.sold);
                    let got = match f.order.side.sold() {
                        Token::X => Tokens::new(0.0, f.received),
                        Token::Y => Tokens::new(f.received, 0.0),
                    };
                    payoff_own += (got - sold).value_at(eps);
                }
                if f.sold > 0.0 {
                    executed += 1;
                    metrics.deviations.push(Deviation {
                        allocation: ex.allocation,
                        side: f.order.side,
                        rel: (pc - ea) / ea,
                        producer_order: own,
                    });
                }
            }
            for b in &ex.burned {
                secrets.remove(&b.oct);
                burned += 1;
                if matches!(b.owner, AgentId::Producer(_)) {
                    payoff_own -= token_vec(b.side, b.amount).value_at(eps);
                }
            }
        }
        metrics.executed_orders += executed;
        metrics.burned_octs += burned;
        metrics.payoffs.arbitrage += payoff_arbitrage;
        metrics.payoffs.escrow += payoff_escrow;
        metrics.payoffs.own_orders += payoff_own;

        let value_change = (producer_holdings(&chain, n) - holdings_before).value_at(eps);
        let attributed = payoff_arbitrage + payoff_escrow + payoff_own;
        let scale = holdings_before.value_at(eps).abs().max(1.0);
        metrics.max_reconciliation_error = metrics
            .max_reconciliation_error
            .max((value_change - attributed).abs() / scale);

        let pool = chain.pool();
        metrics.constant_series.push(pool.constant());
        if opts.record_rows {
            rows.push(BlockRow {
                height: h,
                eps: eps.value(),
                producer: who as u32,
                pool_x: pool.reserves.x(),
                pool_y: pool.reserves.y(),
                pool_price: pool.price().value(),
                vault_x: pool.vault.holdings().x,
                vault_y: pool.vault.holdings().y,
                constant: pool.constant(),
                updated: gap.is_some(),
                gap,
                beta,
                payoff_arbitrage,
                payoff_escrow,
                payoff_own_orders: payoff_own,
                producer_value_change: value_change,
                executed_orders: executed,
                burned_octs: burned,
                mempool: chain.mempool().count() as u64,
            });
        }
    }

    metrics.final_reserves = chain.pool().reserves.tokens();
    metrics.final_vault = chain.pool().vault.holdings();
    metrics.final_eps = eps.value();
    let events = chain.take_events();
    Ok(SingleRun {
        metrics,
        rows,
        events,
        chain,
    })
}

/// The β ≡ 0 counterpart of `cfg`: identical seeds, flow and price path.
pub fn twin_schedule() -> RebateSchedule {
    RebateSchedule::disabled()
}

/// Runs `cfg` and its β ≡ 0 twin on the same seed; the twin's LVR fills the
/// baseline fields.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64, opts: SimOptions) -> Result<SingleRun, SimError> {
    let twin = simulate(cfg, seed, twin_schedule(), SimOptions::default())?;
    let mut run = simulate(cfg, seed, cfg.schedule, opts)?;
    run.metrics.baseline_lvr = Some(twin.metrics.realized_lvr);
    run.metrics.baseline_lvr_normalized = Some(twin.metrics.realized_lvr_normalized);
    Ok(run)
}
