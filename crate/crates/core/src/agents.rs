//! Market environment and strategic actors: the external price process, user
//! order flow, and block-producer strategies.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::allocation::{Order, OrderBounds};
use crate::cfmm::{PoolCurve, Price, Reserves};
use crate::diamond::apply_rebated_move;
use crate::engine::{ChainState, SealedOrder};
use crate::error::{MathError, MathResult};
use crate::ids::{AgentId, OctId, Side};

/// Driftless log-normal external price.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceProcess {
    pub eps0: Price,
    /// Per-block volatility of log ε.
    pub sigma: f64,
}

impl PriceProcess {
    pub fn new(eps0: Price, sigma: f64) -> MathResult<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(MathError::Parameter {
                name: "sigma",
                value: sigma,
            });
        }
        Ok(PriceProcess { eps0, sigma })
    }
}

/// `ε' = ε·exp(σξ − σ²/2)`, so `E[ε'] = ε`.
pub fn step_price<R: Rng + ?Sized>(process: &PriceProcess, eps: Price, rng: &mut R) -> Price {
    let xi: f64 = StandardNormal.sample(rng);
    let s = process.sigma;
    let next = eps.value() * (s * xi - 0.5 * s * s).exp();
    Price::new(next).unwrap_or(eps)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LimitPolicy {
    #[default]
    Market,
    /// Buyers of y cap at `ε(1 + offset)`, sellers floor at `ε(1 − offset)`.
    Symmetric { offset: f64 },
}

/// Which sides users trade. Anything but `Symmetric` is a stress setting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowDirection {
    #[default]
    Symmetric,
    BuyOnly,
    SellOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserFlowModel {
    /// Expected OCTs per block (Poisson).
    pub arrival_rate: f64,
    pub population: u32,
    pub limits: LimitPolicy,
    pub direction: FlowDirection,
    pub reveal_probability: f64,
    /// Blocks between allocation and reveal.
    pub reveal_delay: u64,
}

impl Default for UserFlowModel {
    fn default() -> Self {
        UserFlowModel {
            arrival_rate: 2.0,
            population: 1000,
            limits: LimitPolicy::Market,
            direction: FlowDirection::Symmetric,
            reveal_probability: 1.0,
            reveal_delay: 1,
        }
    }
}

/// One order drawn from the flow model.
///
/// The order's value at `eps` is uniform on `(0, min(max_x, ε·max_y)]`, so
/// buyers and sellers of y are identically distributed in value and both fit
/// their collateral.
pub fn draw_order<R: Rng + ?Sized>(
    model: &UserFlowModel,
    eps: Price,
    bounds: OrderBounds,
    owner: AgentId,
    rng: &mut R,
) -> Order {
    let side = match model.direction {
        FlowDirection::Symmetric => {
            if rng.random_bool(0.5) {
                Side::BuyY
            } else {
                Side::SellY
            }
        }
        FlowDirection::BuyOnly => Side::BuyY,
        FlowDirection::SellOnly => Side::SellY,
    };
    let e = eps.value();
    let u = 1.0 - rng.random::<f64>();
    let value = u * bounds.max_x.min(e * bounds.max_y);
    let size = match side {
        Side::BuyY => value.min(bounds.max_x),
        Side::SellY => (value / e).min(bounds.max_y),
    };
    let limit = match model.limits {
        LimitPolicy::Market => None,
        LimitPolicy::Symmetric { offset } => {
            let factor = match side {
                Side::BuyY => 1.0 + offset,
                Side::SellY => 1.0 - offset,
            };
            Price::new(e * factor).ok()
        }
    };
    Order {
        side,
        size,
        limit,
        owner,
    }
}

/// A block's worth of new user orders, each sealed with a fresh salt.
pub fn gen_user_octs<R: Rng + ?Sized>(
    model: &UserFlowModel,
    eps: Price,
    bounds: OrderBounds,
    rng: &mut R,
) -> Vec<SealedOrder> {
    let n = poisson(model.arrival_rate, rng);
    (0..n)
        .map(|_| {
            let user = rng.random_range(0..model.population.max(1));
            let order = draw_order(model, eps, bounds, AgentId::User(user), rng);
            SealedOrder {
                order,
                salt: rng.random(),
            }
        })
        .collect()
}

pub(crate) fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map_or(0, |d| d.sample(rng) as u64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PricePolicy {
    #[default]
    SetToEps,
    /// Target `ε · multiplier`.
    Offset { multiplier: f64 },
    /// Keep the pool price.
    Stale,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UpdatePolicy {
    Always,
    /// Send iff sending now is worth at least what waiting is, given the
    /// chance `q` of also producing the next block.
    #[default]
    BestResponse,
    Threshold { min_payoff: f64 },
    Never,
}

/// Which allocation height an update names.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationTiming {
    /// `H'_A + 1`: the largest gap, hence the smallest rebate.
    #[default]
    Earliest,
    /// The current block.
    Latest,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProducerStrategy {
    pub price: PricePolicy,
    pub update: UpdatePolicy,
    /// Share of each batch made of the producer's own orders.
    pub alpha: f64,
    /// Probability of withholding each mempool OCT.
    pub censor_rate: f64,
    pub timing: AllocationTiming,
    /// Cost of sending an update, used only in the decision.
    pub cost: f64,
}

impl Default for ProducerStrategy {
    fn default() -> Self {
        ProducerStrategy {
            price: PricePolicy::SetToEps,
            update: UpdatePolicy::BestResponse,
            alpha: 0.0,
            censor_rate: 0.0,
            timing: AllocationTiming::Earliest,
            cost: 0.0,
        }
    }
}

impl ProducerStrategy {
    /// Sets the price to ε every block, inserts everything, no own orders.
    pub fn honest() -> Self {
        ProducerStrategy {
            update: UpdatePolicy::Always,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.censor_rate) {
            return Err(format!("censor_rate must be in [0, 1], got {}", self.censor_rate));
        }
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(format!("cost must be nonnegative, got {}", self.cost));
        }
        if let PricePolicy::Offset { multiplier } = self.price {
            if !(multiplier.is_finite() && multiplier > 0.0) {
                return Err(format!("price multiplier must be positive, got {multiplier}"));
            }
        }
        if let UpdatePolicy::Threshold { min_payoff } = self.update {
            if !min_payoff.is_finite() {
                return Err("threshold min_payoff must be finite".into());
            }
        }
        Ok(())
    }
}

/// What the producer knows besides the chain state.
#[derive(Clone, Copy, Debug)]
pub struct ActContext<'a> {
    pub producer: u32,
    pub eps: Price,
    /// Probability that this producer also produces the next block.
    pub lookahead_q: f64,
    /// Per-block volatility, for the expected LVR accrued by waiting.
    pub sigma: f64,
    pub flow: &'a UserFlowModel,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockActions {
    /// Mempool OCTs to insert this block (own OCTs are added by the caller
    /// after submission).
    pub insert: Vec<OctId>,
    /// Orders the producer commits to this block.
    pub own_orders: Vec<SealedOrder>,
    pub update: Option<(u64, Price)>,
}

/// The producer's actions for the current block.
pub fn producer_act<R: Rng + ?Sized>(
    strategy: &ProducerStrategy,
    state: &ChainState,
    ctx: &ActContext<'_>,
    rng: &mut R,
) -> BlockActions {
    let mut actions = BlockActions::default();
    let exclude_users = strategy.alpha >= 1.0;
    for id in state.mempool() {
        let withheld = exclude_users || rng.random::<f64>() < strategy.censor_rate;
        if !withheld {
            actions.insert.push(id);
        }
    }

    let bounds = state.config().bounds;
    let own = if strategy.alpha <= 0.0 {
        0
    } else if exclude_users {
        poisson(ctx.flow.arrival_rate, rng).max(1)
    } else {
        let n = actions.insert.len() as f64;
        (strategy.alpha / (1.0 - strategy.alpha) * n).round() as u64
    };
    for _ in 0..own {
        let order = draw_order(ctx.flow, ctx.eps, bounds, AgentId::Producer(ctx.producer), rng);
        actions.own_orders.push(SealedOrder {
            order,
            salt: rng.random(),
        });
    }

    actions.update = decide_update(strategy, state, ctx);
    actions
}

fn target_price(strategy: &ProducerStrategy, state: &ChainState, eps: Price) -> Price {
    match strategy.price {
        PricePolicy::SetToEps => eps,
        PricePolicy::Offset { multiplier } => eps.scaled(multiplier).unwrap_or(eps),
        PricePolicy::Stale => state.pool().price(),
    }
}

fn decide_update(
    strategy: &ProducerStrategy,
    state: &ChainState,
    ctx: &ActContext<'_>,
) -> Option<(u64, Price)> {
    if state.updated_this_block() || matches!(strategy.update, UpdatePolicy::Never) {
        return None;
    }
    let h = state.height();
    let h_a = match strategy.timing {
        AllocationTiming::Earliest => state.last_allocation().map_or(0, |a| a + 1),
        AllocationTiming::Latest => h,
    };
    if h_a > h || state.last_allocation().is_some_and(|a| h_a <= a) {
        return None;
    }
    let p = target_price(strategy, state, ctx.eps);
    let schedule = state.config().schedule;
    let curve = state.config().curve;
    let reserves = state.pool().reserves;
    let gap = h - h_a;
    let payoff_at = |beta: f64| {
        apply_rebated_move(curve, &reserves, p, beta)
            .map(|m| m.producer_payoff_at(ctx.eps))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let now = payoff_at(schedule.beta_at(gap));
    let send = match strategy.update {
        UpdatePolicy::Always => true,
        UpdatePolicy::Never => false,
        UpdatePolicy::Threshold { min_payoff } => now >= min_payoff,
        UpdatePolicy::BestResponse => {
            if gap >= u64::from(schedule.z_max()) {
                now >= strategy.cost
            } else {
                let next_gap = match strategy.timing {
                    AllocationTiming::Earliest => gap + 1,
                    AllocationTiming::Latest => 0,
                };
                let (_, l) = curve.max_lvr(&reserves, ctx.eps);
                let accrual = ctx.sigma * ctx.sigma / 8.0 * reserves.value_at(ctx.eps);
                let wait = (1.0 - schedule.beta_at(next_gap)) * (l + accrual) - strategy.cost;
                let act = now - strategy.cost;
                act >= 0.0 && act >= ctx.lookahead_q * wait
            }
        }
    };
    send.then_some((h_a, p))
}

/// Producer utility of setting price `p` in one update context:
/// `(1−β)(R₀ − R_p)·ε + α·b·(1−β)(R_p − R₁)·ε`, with token vectors valued at
/// ε, `R_p` the CFMM point at price `p`, and `R₁` the post-batch reserves
/// (same scale as `R_p`).
#[allow(clippy::too_many_arguments)]
pub fn producer_utility(
    curve: PoolCurve,
    r0: &Reserves,
    p: Price,
    alpha: f64,
    eps: Price,
    beta: f64,
    b: f64,
    r1: &Reserves,
) -> MathResult<f64> {
    let rp = curve.reserves_at_price(curve.invariant(r0), p)?;
    let arb = (1.0 - beta) * (r0.tokens() - rp.tokens()).value_at(eps);
    let own = alpha * b * (1.0 - beta) * (rp.tokens() - r1.tokens()).value_at(eps);
    Ok(arb + own)
}
