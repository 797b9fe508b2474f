//! The protocol state machine: block progression, order-commitment lifecycle,
//! update transactions, reveal windows, burning and batch execution.

mod event;
mod oct;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{
    clearing_price_with_limits, create_allocation_pool, redistribute, settle_at_price,
    verify_clearing_price, AllocationPool, Order, OrderBounds, Settlement,
};
use crate::cfmm::{PoolCurve, Price, Reserves, Tokens};
use crate::diamond::{apply_rebated_move, vault_reenter, RebateSchedule, RebatedMoveResult, Reentry, V0lverPool, Vault};
use crate::error::MathError;
use crate::ids::{AgentId, OctId, Token};

pub use event::{Event, EventKind};
pub use oct::{Commitment, Oct, OctState, SealedOrder};

/// Absolute per-token tolerance of the supply-conservation check.
pub const CONSERVATION_TOL: f64 = 1e-6;
const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown OCT {0}")]
    UnknownOct(OctId),
    #[error("{oct}: cannot {action} while {state}")]
    InvalidTransition {
        oct: OctId,
        state: &'static str,
        action: &'static str,
    },
    #[error("invalid insert: {0}")]
    InvalidInsert(String),
    #[error("invalid update transaction: {0}")]
    InvalidUpdate(String),
    #[error("reveal of {oct} rejected: {reason}")]
    RevealRejected { oct: OctId, reason: RevealRejection },
    #[error("allocation {0} does not exist")]
    UnknownAllocation(u64),
    #[error("allocation {0} was already executed")]
    DoubleExecution(u64),
    #[error("allocation {0} is not due for execution")]
    NotDue(u64),
    #[error("proposed clearing price {0} does not maximise volume")]
    PriceRejected(Price),
    #[error("{agent:?} cannot fund {what}")]
    InsufficientFunds { agent: AgentId, what: &'static str },
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl EngineError {
    /// True for failures that indicate a bug rather than a rejected action.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            EngineError::Invariant(_) | EngineError::Math(MathError::Solvency(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealRejection {
    Late,
    CommitmentMismatch,
    SideMismatch,
    Oversize,
    NonPositiveSize,
}

impl std::fmt::Display for RevealRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RevealRejection::Late => "reveal window closed",
            RevealRejection::CommitmentMismatch => "order does not open the commitment",
            RevealRejection::SideMismatch => "order side does not match collateral",
            RevealRejection::Oversize => "order size exceeds collateral",
            RevealRejection::NonPositiveSize => "order size must be positive",
        };
        f.write_str(s)
    }
}

/// Static protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub curve: PoolCurve,
    pub schedule: RebateSchedule,
    pub bounds: OrderBounds,
    /// Blocks after allocation during which reveals are accepted.
    pub reveal_window: u64,
    /// Vault re-entry fires at the end of every block `H` with
    /// `(H + 1) % conversion_frequency == 0`.
    pub conversion_frequency: u64,
    pub reentry: ReentryPolicy,
}

/// When the vault is converted back into reserves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReentryPolicy {
    /// Every conversion block, regardless of open allocations.
    #[default]
    EveryConversionBlock,
    /// Conversion blocks with no open allocation only.
    WhenIdle,
}

/// Token balances outside the pool, vault and escrows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    initial: Tokens,
    /// Net tokens that entered from outside the system (user collateral,
    /// vault conversions). Signed.
    external_in: Tokens,
    burned: Tokens,
    locked: Tokens,
    producers: BTreeMap<u32, Tokens>,
    users: BTreeMap<u32, Tokens>,
}

impl Ledger {
    pub fn producer(&self, id: u32) -> Tokens {
        self.producers.get(&id).copied().unwrap_or_default()
    }

    pub fn user(&self, id: u32) -> Tokens {
        self.users.get(&id).copied().unwrap_or_default()
    }

    pub fn burned(&self) -> Tokens {
        self.burned
    }

    pub fn locked(&self) -> Tokens {
        self.locked
    }

    pub fn external_in(&self) -> Tokens {
        self.external_in
    }

    pub fn initial(&self) -> Tokens {
        self.initial
    }

    fn balance_mut(&mut self, agent: AgentId) -> &mut Tokens {
        match agent {
            AgentId::User(n) => self.users.entry(n).or_default(),
            AgentId::Producer(n) => self.producers.entry(n).or_default(),
        }
    }

    fn balance(&self, agent: AgentId) -> Tokens {
        match agent {
            AgentId::User(n) => self.user(n),
            AgentId::Producer(n) => self.producer(n),
        }
    }
}

/// An allocation pool together with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAllocation {
    pub pool: AllocationPool,
    pub producer: u32,
    pub eps_at_allocation: Price,
}

/// What an accepted update transaction did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateOutcome {
    pub producer: u32,
    pub allocation_height: u64,
    pub gap: u64,
    pub beta: f64,
    pub moved: RebatedMoveResult,
    pub allocated: Vec<OctId>,
    pub allocation: Option<u64>,
    /// Producer's arbitrage payoff at the current external price.
    pub payoff: f64,
    /// Value of the live reserves at the external price, before the move.
    pub value_before: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub oct: OctId,
    pub owner: AgentId,
    pub order: Order,
    pub sold: f64,
    pub received: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnRecord {
    pub oct: OctId,
    pub owner: AgentId,
    pub side: Token,
    pub amount: f64,
}

/// What one batch execution did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub allocation: u64,
    pub producer: u32,
    pub eps_at_allocation: Price,
    pub snapshot: Reserves,
    pub settlement: Settlement,
    pub fills: Vec<FillRecord>,
    pub burned: Vec<BurnRecord>,
    pub producer_contribution: Tokens,
    pub to_pool: Tokens,
    pub to_producer: Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub height: u64,
    pub executions: Vec<ExecutionOutcome>,
    pub reentry: Option<Reentry>,
}

/// Chain state: height, mempool, inserted-but-unallocated sets, last
/// allocation height, the protocol pool, open allocation pools and all OCTs.
#[derive(Debug, Clone)]
pub struct ChainState {
    config: EngineConfig,
    height: u64,
    eps: Price,
    mempool: BTreeSet<OctId>,
    inserted: VecDeque<(u64, Vec<OctId>)>,
    last_allocation: Option<u64>,
    pool: V0lverPool,
    open: BTreeMap<u64, OpenAllocation>,
    executed: BTreeSet<u64>,
    octs: BTreeMap<OctId, Oct>,
    next_oct: u64,
    ledger: Ledger,
    updated_this_block: bool,
    inserted_this_block: bool,
    record_events: bool,
    events: Vec<Event>,
}

impl ChainState {
    /// A chain at height 0 with no allocation yet (`H'_A = −1`).
    pub fn new(
        config: EngineConfig,
        reserves: Reserves,
        producers: &[(u32, Tokens)],
        eps: Price,
    ) -> Result<Self, EngineError> {
        if config.conversion_frequency == 0 {
            return Err(MathError::Parameter {
                name: "conversion_frequency",
                value: 0.0,
            }
            .into());
        }
        let mut balances = BTreeMap::new();
        for &(id, t) in producers {
            if !(t.is_nonnegative(0.0) && t.x.is_finite() && t.y.is_finite()) {
                return Err(MathError::Parameter {
                    name: "endowment",
                    value: t.x.min(t.y),
                }
                .into());
            }
            *balances.entry(id).or_insert(Tokens::ZERO) += t;
        }
        let initial = reserves.tokens() + balances.values().copied().sum::<Tokens>();
        Ok(ChainState {
            config,
            height: 0,
            eps,
            mempool: BTreeSet::new(),
            inserted: VecDeque::new(),
            last_allocation: None,
            pool: V0lverPool::new(config.curve, reserves, config.schedule),
            open: BTreeMap::new(),
            executed: BTreeSet::new(),
            octs: BTreeMap::new(),
            next_oct: 0,
            ledger: Ledger {
                initial,
                external_in: Tokens::ZERO,
                burned: Tokens::ZERO,
                locked: Tokens::ZERO,
                producers: balances,
                users: BTreeMap::new(),
            },
            updated_this_block: false,
            inserted_this_block: false,
            record_events: false,
            events: Vec::new(),
        })
    }

    pub fn with_event_log(mut self, on: bool) -> Self {
        self.record_events = on;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn eps(&self) -> Price {
        self.eps
    }

    pub fn pool(&self) -> &V0lverPool {
        &self.pool
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// `H'_A`; `None` before the first update.
    pub fn last_allocation(&self) -> Option<u64> {
        self.last_allocation
    }

    pub fn mempool(&self) -> impl Iterator<Item = OctId> + '_ {
        self.mempool.iter().copied()
    }

    /// Inserted-but-unallocated OCTs as `(insertion height, set)`.
    pub fn inserted(&self) -> impl Iterator<Item = (u64, &[OctId])> + '_ {
        self.inserted.iter().map(|(h, v)| (*h, v.as_slice()))
    }

    pub fn unallocated_count(&self) -> usize {
        self.inserted.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn open_allocations(&self) -> impl Iterator<Item = &OpenAllocation> + '_ {
        self.open.values()
    }

    pub fn oct(&self, id: OctId) -> Option<&Oct> {
        self.octs.get(&id)
    }

    pub fn octs(&self) -> impl Iterator<Item = &Oct> + '_ {
        self.octs.values()
    }

    pub fn updated_this_block(&self) -> bool {
        self.updated_this_block
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    /// Sets the external price used for valuation and vault re-entry.
    pub fn set_external_price(&mut self, eps: Price) {
        self.eps = eps;
    }

    fn emit(&mut self, kind: EventKind) {
        if self.record_events {
            self.events.push(Event {
                height: self.height,
                kind,
            });
        }
    }

    /// Submits an OCT to the mempool, locking `max_x` or `max_y` of
    /// collateral. Users' collateral enters from outside; producers pay from
    /// their balance.
    pub fn submit_oct(
        &mut self,
        owner: AgentId,
        side: Token,
        commitment: Commitment,
    ) -> Result<OctId, EngineError> {
        let amount = match side {
            Token::X => self.config.bounds.max_x,
            Token::Y => self.config.bounds.max_y,
        };
        let lock = token_amount(side, amount);
        match owner {
            AgentId::User(_) => self.ledger.external_in += lock,
            AgentId::Producer(_) => {
                let bal = self.ledger.balance(owner) - lock;
                if !bal.is_nonnegative(BALANCE_TOL) {
                    return Err(EngineError::InsufficientFunds {
                        agent: owner,
                        what: "collateral",
                    });
                }
                *self.ledger.balance_mut(owner) = bal;
            }
        }
        self.ledger.locked += lock;
        let id = OctId(self.next_oct);
        self.next_oct += 1;
        self.octs.insert(
            id,
            Oct {
                id,
                owner,
                commitment,
                collateral_side: side,
                collateral: amount,
                state: OctState::Pending,
                submitted_at: self.height,
                inserted_at: None,
                allocated_at: None,
                revealed_at: None,
            },
        );
        self.mempool.insert(id);
        self.emit(EventKind::OctSubmitted {
            oct: id,
            owner,
            side,
            collateral: amount,
        });
        Ok(id)
    }

    /// Moves `set` from the mempool into this block's inserted set.
    pub fn insert_octs(&mut self, producer: u32, set: &[OctId]) -> Result<(), EngineError> {
        if self.inserted_this_block {
            return Err(EngineError::InvalidInsert(format!(
                "block {} already has an inserted set",
                self.height
            )));
        }
        let mut seen = BTreeSet::new();
        for id in set {
            if !seen.insert(*id) {
                return Err(EngineError::InvalidInsert(format!("{id} listed twice")));
            }
            if !self.mempool.contains(id) {
                return match self.octs.get(id) {
                    None => Err(EngineError::UnknownOct(*id)),
                    Some(o) => Err(EngineError::InvalidTransition {
                        oct: *id,
                        state: o.state.name(),
                        action: "insert",
                    }),
                };
            }
        }
        let h = self.height;
        for id in set {
            self.mempool.remove(id);
            let oct = self.octs.get_mut(id).expect("mempool entries exist");
            oct.transition(OctState::Inserted { height: h })
                .map_err(|s| invariant(format!("{id} in mempool while {}", s.name())))?;
            oct.inserted_at = Some(h);
        }
        self.inserted.push_back((h, set.to_vec()));
        self.inserted_this_block = true;
        self.emit(EventKind::OctsInserted {
            producer,
            octs: set.to_vec(),
        });
        Ok(())
    }

    /// Applies an update transaction `(H_a, p)` sent by `producer`.
    ///
    /// Allocates every inserted OCT with insertion height at most `H_a`, moves
    /// the pool to `p` with rebate `β(H − H_a)` and funds the allocation pool.
    pub fn apply_update_tx(
        &mut self,
        producer: u32,
        h_a: u64,
        p: Price,
    ) -> Result<UpdateOutcome, EngineError> {
        if self.updated_this_block {
            return Err(EngineError::InvalidUpdate(format!(
                "block {} already has an update",
                self.height
            )));
        }
        if self.last_allocation.is_some_and(|prev| h_a <= prev) {
            return Err(EngineError::InvalidUpdate(format!(
                "allocation height {h_a} does not exceed {}",
                self.last_allocation.unwrap_or_default()
            )));
        }
        if h_a > self.height {
            return Err(EngineError::InvalidUpdate(format!(
                "allocation height {h_a} is above the current block {}",
                self.height
            )));
        }
        let gap = self.height - h_a;
        let beta = self.config.schedule.beta_at(gap);
        let curve = self.config.curve;
        let agent = AgentId::Producer(producer);

        let allocated: Vec<OctId> = self
            .inserted
            .iter()
            .take_while(|(h, _)| *h <= h_a)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let t_a = allocated.len();

        let value_before = self.pool.reserves.value_at(self.eps);
        let moved = apply_rebated_move(curve, &self.pool.reserves, p, beta)?;
        let escrow = if t_a > 0 {
            Some(create_allocation_pool(
                h_a,
                self.height,
                t_a,
                p,
                self.config.bounds,
                beta,
                curve,
                &moved.new_reserves,
                allocated.clone(),
            )?)
        } else {
            None
        };
        let producer_contribution = escrow
            .as_ref()
            .map_or(Tokens::ZERO, |e| e.producer_contribution);
        let pool_contribution = escrow.as_ref().map_or(Tokens::ZERO, |e| e.pool_contribution);
        let after = self.ledger.balance(agent) + moved.producer_flow - producer_contribution;
        if !after.is_nonnegative(BALANCE_TOL) {
            return Err(EngineError::InsufficientFunds {
                agent,
                what: "update transaction",
            });
        }
        let live = moved.new_reserves.apply(-pool_contribution)?;

        // Validated; commit.
        *self.ledger.balance_mut(agent) = after;
        self.pool.reserves = live;
        self.pool.vault.deposit(moved.vault_deposit);
        while self.inserted.front().is_some_and(|(h, _)| *h <= h_a) {
            self.inserted.pop_front();
        }
        for id in &allocated {
            let oct = self.octs.get_mut(id).expect("inserted OCTs exist");
            oct.transition(OctState::Allocated { allocation: h_a })
                .map_err(|s| invariant(format!("{id} inserted while {}", s.name())))?;
            oct.allocated_at = Some(self.height);
        }
        let allocation = escrow.map(|pool| {
            self.open.insert(
                h_a,
                OpenAllocation {
                    pool,
                    producer,
                    eps_at_allocation: self.eps,
                },
            );
            h_a
        });
        self.last_allocation = Some(h_a);
        self.updated_this_block = true;
        let payoff = moved.producer_payoff_at(self.eps);
        self.emit(EventKind::Update {
            producer,
            allocation_height: h_a,
            gap,
            beta,
            target: p,
            eps: self.eps,
            producer_flow: moved.producer_flow,
            vault_deposit: moved.vault_deposit,
            moved_reserves: moved.new_reserves.tokens(),
            allocated: allocated.clone(),
            escrow: pool_contribution + producer_contribution,
            pool_contribution,
            producer_contribution,
        });
        Ok(UpdateOutcome {
            producer,
            allocation_height: h_a,
            gap,
            beta,
            moved,
            allocated,
            allocation,
            payoff,
            value_before,
        })
    }

    /// Reveals the order behind an allocated OCT.
    pub fn reveal_order(&mut self, id: OctId, sealed: &SealedOrder) -> Result<(), EngineError> {
        let oct = self.octs.get(&id).ok_or(EngineError::UnknownOct(id))?;
        let OctState::Allocated { allocation } = oct.state else {
            return Err(EngineError::InvalidTransition {
                oct: id,
                state: oct.state.name(),
                action: "reveal",
            });
        };
        let opened_at = oct.allocated_at.expect("allocated OCTs record their block");
        let order = sealed.order;
        let rejection = if self.height > opened_at + self.config.reveal_window {
            Some(RevealRejection::Late)
        } else if sealed.commitment() != oct.commitment || order.owner != oct.owner {
            Some(RevealRejection::CommitmentMismatch)
        } else if order.side.sold() != oct.collateral_side {
            Some(RevealRejection::SideMismatch)
        } else if order.size.is_nan() || order.size <= 0.0 {
            Some(RevealRejection::NonPositiveSize)
        } else if order.size > oct.collateral {
            Some(RevealRejection::Oversize)
        } else {
            None
        };
        if let Some(reason) = rejection {
            self.emit(EventKind::RevealRejected {
                oct: id,
                reason: reason.to_string(),
            });
            return Err(EngineError::RevealRejected { oct: id, reason });
        }
        let h = self.height;
        let oct = self.octs.get_mut(&id).expect("checked above");
        oct.transition(OctState::Revealed { allocation, order })
            .map_err(|s| invariant(format!("{id} allocated while {}", s.name())))?;
        oct.revealed_at = Some(h);
        self.emit(EventKind::Revealed { oct: id, order });
        Ok(())
    }

    /// Whether allocation `id` may execute now: every OCT revealed, or the
    /// reveal window has run to its last block.
    pub fn is_due(&self, id: u64) -> bool {
        self.open.get(&id).is_some_and(|a| {
            self.height >= a.pool.created_at + self.config.reveal_window
                || a
                    .pool
                    .allocated_octs
                    .iter()
                    .all(|o| matches!(self.octs[o].state, OctState::Revealed { .. }))
        })
    }

    /// Executes allocation `id`: burns unrevealed collateral, settles the
    /// revealed orders at a uniform price against the escrow and splits the
    /// remainder between pool and producer.
    ///
    /// With `proposed`, that price must pass the volume-maximality check;
    /// otherwise the engine computes the clearing price itself.
    pub fn execute_batch(
        &mut self,
        id: u64,
        proposed: Option<Price>,
    ) -> Result<ExecutionOutcome, EngineError> {
        if self.executed.contains(&id) {
            return Err(EngineError::DoubleExecution(id));
        }
        if !self.open.contains_key(&id) {
            return Err(EngineError::UnknownAllocation(id));
        }
        if !self.is_due(id) {
            return Err(EngineError::NotDue(id));
        }
        let alloc = &self.open[&id];
        let curve = alloc.pool.curve;
        let snapshot = alloc.pool.snapshot;
        let caps = Some(alloc.pool.reserves);
        let mut revealed: Vec<(OctId, Order)> = Vec::new();
        let mut unrevealed: Vec<OctId> = Vec::new();
        for oid in &alloc.pool.allocated_octs {
            match self.octs[oid].state {
                OctState::Revealed { order, .. } => revealed.push((*oid, order)),
                OctState::Allocated { .. } => unrevealed.push(*oid),
                s => {
                    return Err(invariant(format!(
                        "{oid} in open allocation {id} while {}",
                        s.name()
                    )))
                }
            }
        }
        let orders: Vec<Order> = revealed.iter().map(|(_, o)| *o).collect();
        let settlement = match proposed {
            Some(p) => {
                if !verify_clearing_price(curve, &orders, &snapshot, caps, p) {
                    return Err(EngineError::PriceRejected(p));
                }
                settle_at_price(curve, &orders, &snapshot, caps, p)
            }
            None => clearing_price_with_limits(curve, &orders, &snapshot, caps),
        };

        let mut alloc = self.open.remove(&id).expect("checked above");
        self.executed.insert(id);
        alloc.pool.apply(&settlement)?;

        let mut burned = Vec::with_capacity(unrevealed.len());
        for oid in unrevealed {
            let oct = self.octs.get_mut(&oid).expect("allocated OCTs exist");
            oct.transition(OctState::Burned { allocation: id })
                .map_err(|s| invariant(format!("{oid} burned while {}", s.name())))?;
            let lost = token_amount(oct.collateral_side, oct.collateral);
            self.ledger.locked -= lost;
            self.ledger.burned += lost;
            burned.push(BurnRecord {
                oct: oid,
                owner: oct.owner,
                side: oct.collateral_side,
                amount: oct.collateral,
            });
        }

        let price = settlement.price;
        let mut fill_of = vec![None; orders.len()];
        for f in &settlement.fills {
            fill_of[f.index] = Some(*f);
        }
        let mut fills = Vec::with_capacity(revealed.len());
        for (i, (oid, order)) in revealed.iter().enumerate() {
            let oct = self.octs.get_mut(oid).expect("revealed OCTs exist");
            oct.transition(OctState::Executed { allocation: id })
                .map_err(|s| invariant(format!("{oid} executed while {}", s.name())))?;
            let collateral = token_amount(oct.collateral_side, oct.collateral);
            let (sold, received) = fill_of[i].map_or((0.0, 0.0), |f| (f.sold, f.received));
            let credit = match order.side.sold() {
                Token::X => Tokens::new(oct.collateral - sold, received),
                Token::Y => Tokens::new(received, oct.collateral - sold),
            };
            self.ledger.locked -= collateral;
            *self.ledger.balance_mut(oct.owner) += credit;
            fills.push(FillRecord {
                oct: *oid,
                owner: oct.owner,
                order: *order,
                sold,
                received,
            });
        }

        let (to_pool, to_producer) = redistribute(&alloc.pool, alloc.pool.producer_fraction);
        self.pool.reserves = self.pool.reserves.apply(to_pool)?;
        *self.ledger.balance_mut(AgentId::Producer(alloc.producer)) += to_producer;

        if self.record_events {
            for b in &burned {
                self.emit(EventKind::Burned {
                    oct: b.oct,
                    owner: b.owner,
                    side: b.side,
                    amount: b.amount,
                });
            }
            for f in &fills {
                self.emit(EventKind::Fill {
                    oct: f.oct,
                    owner: f.owner,
                    order: f.order,
                    price,
                    sold: f.sold,
                    received: f.received,
                });
            }
            self.emit(EventKind::Executed {
                allocation: id,
                price,
                volume: settlement.volume,
                pool_delta: settlement.pool_delta,
                to_pool,
                to_producer,
                producer: alloc.producer,
                revealed: revealed.len(),
                burned: burned.len(),
            });
        }
        Ok(ExecutionOutcome {
            allocation: id,
            producer: alloc.producer,
            eps_at_allocation: alloc.eps_at_allocation,
            snapshot,
            settlement,
            fills,
            burned,
            producer_contribution: alloc.pool.producer_contribution,
            to_pool,
            to_producer,
        })
    }

    /// Ends the current block: runs due executions, re-enters the vault on
    /// conversion blocks, checks supply conservation and increments `H`.
    pub fn advance_block(&mut self) -> Result<BlockOutcome, EngineError> {
        let due: Vec<u64> = self
            .open
            .keys()
            .copied()
            .filter(|id| self.is_due(*id))
            .collect();
        let mut executions = Vec::with_capacity(due.len());
        for id in due {
            executions.push(self.execute_batch(id, None)?);
        }
        let idle_ok = match self.config.reentry {
            ReentryPolicy::EveryConversionBlock => true,
            ReentryPolicy::WhenIdle => self.open.is_empty(),
        };
        let reentry = if (self.height + 1).is_multiple_of(self.config.conversion_frequency)
            && idle_ok
            && !self.pool.vault.is_empty()
        {
            let r = vault_reenter(&self.pool.reserves, &self.pool.vault, self.eps)?;
            self.pool.reserves = r.reserves;
            self.pool.vault = Vault::default();
            self.ledger.external_in += r.external_in;
            self.emit(EventKind::VaultReentry {
                deposited: r.deposited,
                external_in: r.external_in,
            });
            Some(r)
        } else {
            None
        };
        self.check_conservation()?;
        self.check_balances()?;
        self.emit(EventKind::BlockEnd {
            reserves: self.pool.reserves.tokens(),
            vault: self.pool.vault.holdings(),
            constant: self.pool.constant(),
        });
        let height = self.height;
        self.height += 1;
        self.updated_this_block = false;
        self.inserted_this_block = false;
        Ok(BlockOutcome {
            height,
            executions,
            reentry,
        })
    }

    /// Pool, vault, escrows, locked collateral and all agent balances.
    pub fn internal_supply(&self) -> Tokens {
        self.pool.total_tokens()
            + self.open.values().map(|a| a.pool.reserves).sum::<Tokens>()
            + self.ledger.locked
            + self.ledger.producers.values().copied().sum::<Tokens>()
            + self.ledger.users.values().copied().sum::<Tokens>()
    }

    /// Internal supply plus burned tokens must equal the initial supply plus
    /// everything that entered from outside.
    pub fn check_conservation(&self) -> Result<(), EngineError> {
        let lhs = self.internal_supply() + self.ledger.burned;
        let rhs = self.ledger.initial + self.ledger.external_in;
        let diff = lhs - rhs;
        if diff.max_abs() > CONSERVATION_TOL || !diff.x.is_finite() || !diff.y.is_finite() {
            return Err(invariant(format!(
                "supply drifted by ({}, {}) at height {}",
                diff.x, diff.y, self.height
            )));
        }
        Ok(())
    }

    fn check_balances(&self) -> Result<(), EngineError> {
        let accounts = self
            .ledger
            .producers
            .values()
            .chain(self.ledger.users.values())
            .chain(self.open.values().map(|a| &a.pool.reserves))
            .chain(std::iter::once(&self.ledger.locked));
        for t in accounts {
            if !t.is_nonnegative(CONSERVATION_TOL) {
                return Err(invariant(format!(
                    "negative balance ({}, {}) at height {}",
                    t.x, t.y, self.height
                )));
            }
        }
        Ok(())
    }
}

fn token_amount(side: Token, amount: f64) -> Tokens {
    match side {
        Token::X => Tokens::new(amount, 0.0),
        Token::Y => Tokens::new(0.0, amount),
    }
}

fn invariant(msg: String) -> EngineError {
    EngineError::Invariant(msg)
}
