//! C ABI over `v0lver-core`.
//!
//! Objects cross the boundary as opaque pointers that the caller releases with
//! the matching `*_free` function. Fallible calls return a [`V0lverStatus`];
//! the message of the last failure on the calling thread is available from
//! [`v0lver_last_error`]. Strings returned to the caller are freed with
//! [`v0lver_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use v0lver_core::allocation::{settle_market_batch, Order};
use v0lver_core::diamond::apply_rebated_move;
use v0lver_core::engine::{ChainState, EngineError, SealedOrder};
use v0lver_core::ids::{AgentId, OctId, Side};
use v0lver_core::sim::{lvr_experiment, run_scenario, RunSummary, ScenarioConfig, SimError, SimOptions, SingleRun};
use v0lver_core::{MathError, PoolCurve, Price, Reserves};

/// Result of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum V0lverStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidString = 2,
    Config = 3,
    Math = 4,
    /// The engine rejected an action; state is unchanged.
    Rejected = 5,
    /// An internal invariant failed; the object should be discarded.
    Invariant = 6,
    Panic = 7,
}

/// Scenario configuration.
pub struct V0lverScenario(ScenarioConfig);

/// A finished run and its twin.
pub struct V0lverRun(SingleRun);

/// A live protocol state machine.
pub struct V0lverChain(ChainState);

/// Outcome of moving a pool to a target price with a rebate.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct V0lverMove {
    pub new_x: f64,
    pub new_y: f64,
    pub vault_x: f64,
    pub vault_y: f64,
    pub producer_x: f64,
    pub producer_y: f64,
    /// Producer payoff valued at the supplied external price.
    pub payoff: f64,
}

/// Settlement of a market-only batch against a snapshot.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct V0lverSettlement {
    pub price: f64,
    /// Escrow delta; positive components flow into the escrow.
    pub pool_dx: f64,
    pub pool_dy: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: V0lverStatus, msg: impl Into<String>) -> V0lverStatus {
    set_error(msg);
    status
}

fn math(e: MathError) -> V0lverStatus {
    fail(V0lverStatus::Math, e.to_string())
}

fn engine(e: EngineError) -> V0lverStatus {
    let status = if e.is_invariant_violation() {
        V0lverStatus::Invariant
    } else {
        V0lverStatus::Rejected
    };
    fail(status, e.to_string())
}

fn sim(e: SimError) -> V0lverStatus {
    let status = match &e {
        SimError::Config(_) => V0lverStatus::Config,
        e if e.is_invariant_violation() => V0lverStatus::Invariant,
        _ => V0lverStatus::Rejected,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> V0lverStatus) -> V0lverStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(V0lverStatus::Panic, "panic inside v0lver"))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, V0lverStatus> {
    if s.is_null() {
        return Err(fail(V0lverStatus::NullArgument, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(V0lverStatus::InvalidString, "string is not UTF-8"))
}

macro_rules! deref {
    ($p:expr) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(V0lverStatus::NullArgument, concat!("null ", stringify!($p))),
        }
    };
    (mut $p:expr) => {
        match $p.as_mut() {
            Some(v) => v,
            None => return fail(V0lverStatus::NullArgument, concat!("null ", stringify!($p))),
        }
    };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn v0lver_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn v0lver_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// Scenario

/// The built-in default scenario.
#[no_mangle]
pub extern "C" fn v0lver_scenario_default() -> *mut V0lverScenario {
    Box::into_raw(Box::new(V0lverScenario(ScenarioConfig::default())))
}

/// Parses and validates a TOML scenario.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut V0lverScenario,
) -> V0lverStatus {
    guard(|| {
        let out = deref!(mut out);
        *out = ptr::null_mut();
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_toml_str(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(V0lverScenario(cfg)));
                V0lverStatus::Ok
            }
            Err(e) => fail(V0lverStatus::Config, e.to_string()),
        }
    })
}

/// Resolved scenario as TOML; free with `v0lver_string_free`.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn v0lver_scenario_to_toml(scenario: *const V0lverScenario) -> *mut c_char {
    match scenario.as_ref() {
        Some(s) => into_c_string(s.0.to_toml_string()),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn v0lver_scenario_set_seed(scenario: *mut V0lverScenario, seed: u64) -> V0lverStatus {
    deref!(mut scenario).0.seed = seed;
    V0lverStatus::Ok
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn v0lver_scenario_set_runs(scenario: *mut V0lverScenario, runs: u32) -> V0lverStatus {
    deref!(mut scenario).0.runs = runs;
    V0lverStatus::Ok
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn v0lver_scenario_set_horizon(scenario: *mut V0lverScenario, horizon: u64) -> V0lverStatus {
    deref!(mut scenario).0.horizon = horizon;
    V0lverStatus::Ok
}

/// # Safety
/// `scenario` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn v0lver_scenario_free(scenario: *mut V0lverScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

// Runs

/// Runs the scenario at its seed, together with its β ≡ 0 twin.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_run(scenario: *const V0lverScenario, out: *mut *mut V0lverRun) -> V0lverStatus {
    guard(|| {
        let out = deref!(mut out);
        *out = ptr::null_mut();
        let cfg = &deref!(scenario).0;
        let opts = SimOptions {
            record_events: false,
            record_rows: true,
        };
        match run_scenario(cfg, cfg.seed, opts) {
            Ok(run) => {
                *out = Box::into_raw(Box::new(V0lverRun(run)));
                V0lverStatus::Ok
            }
            Err(e) => sim(e),
        }
    })
}

/// Run summary as JSON; free with `v0lver_string_free`.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn v0lver_run_summary_json(run: *const V0lverRun) -> *mut c_char {
    match run.as_ref() {
        Some(r) => serde_json::to_string(&RunSummary::of(&r.0)).map_or(ptr::null_mut(), into_c_string),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `run` must be a live handle; `x` and `y` writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_run_final_reserves(run: *const V0lverRun, x: *mut f64, y: *mut f64) -> V0lverStatus {
    let r = deref!(run);
    let x = deref!(mut x);
    let y = deref!(mut y);
    *x = r.0.metrics.final_reserves.x;
    *y = r.0.metrics.final_reserves.y;
    V0lverStatus::Ok
}

/// Realized LVR and that of the twin, both summed over updates.
///
/// # Safety
/// `run` must be a live handle; `realized` and `baseline` writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_run_lvr(
    run: *const V0lverRun,
    realized: *mut f64,
    baseline: *mut f64,
) -> V0lverStatus {
    let r = deref!(run);
    *deref!(mut realized) = r.0.metrics.realized_lvr;
    *deref!(mut baseline) = r.0.metrics.baseline_lvr.unwrap_or(f64::NAN);
    V0lverStatus::Ok
}

/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn v0lver_run_free(run: *mut V0lverRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// LVR experiment over the scenario's run count; writes a JSON report to
/// `out` (free with `v0lver_string_free`). `jobs` = 0 uses every core.
///
/// # Safety
/// `scenario` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_lvr_experiment_json(
    scenario: *const V0lverScenario,
    jobs: u32,
    out: *mut *mut c_char,
) -> V0lverStatus {
    guard(|| {
        let out = deref!(mut out);
        *out = ptr::null_mut();
        match lvr_experiment(&deref!(scenario).0, jobs as usize) {
            Ok(r) => {
                *out = serde_json::to_string(&r).map_or(ptr::null_mut(), into_c_string);
                V0lverStatus::Ok
            }
            Err(e) => sim(e),
        }
    })
}

// Math

fn reserves(x: f64, y: f64) -> Result<Reserves, V0lverStatus> {
    Reserves::new(x, y).map_err(math)
}

fn price(p: f64) -> Result<Price, V0lverStatus> {
    Price::new(p).map_err(math)
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Largest LVR available against `eps` on a constant-product pool.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_max_lvr(x: f64, y: f64, eps: f64, out: *mut f64) -> V0lverStatus {
    guard(|| {
        let out = deref!(mut out);
        let r = tri!(reserves(x, y));
        let e = tri!(price(eps));
        *out = PoolCurve::ConstantProduct.max_lvr(&r, e).1;
        V0lverStatus::Ok
    })
}

/// Moves a constant-product pool to `target` with rebate `beta`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_rebated_move(
    x: f64,
    y: f64,
    target: f64,
    beta: f64,
    eps: f64,
    out: *mut V0lverMove,
) -> V0lverStatus {
    guard(|| {
        let out = deref!(mut out);
        let r = tri!(reserves(x, y));
        let t = tri!(price(target));
        let e = tri!(price(eps));
        let m = tri!(apply_rebated_move(PoolCurve::ConstantProduct, &r, t, beta).map_err(math));
        *out = V0lverMove {
            new_x: m.new_reserves.x(),
            new_y: m.new_reserves.y(),
            vault_x: m.vault_deposit.x,
            vault_y: m.vault_deposit.y,
            producer_x: m.producer_flow.x,
            producer_y: m.producer_flow.y,
            payoff: m.producer_payoff_at(e),
        };
        V0lverStatus::Ok
    })
}

/// Settles net market demand `dx` (x offered for y) and `dy` (y offered for
/// x) against a constant-product snapshot.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_settle_market(
    x: f64,
    y: f64,
    dx: f64,
    dy: f64,
    out: *mut V0lverSettlement,
) -> V0lverStatus {
    guard(|| {
        let out = deref!(mut out);
        let r = tri!(reserves(x, y));
        let s = tri!(settle_market_batch(PoolCurve::ConstantProduct, &r, dx, dy).map_err(math));
        *out = V0lverSettlement {
            price: s.price.value(),
            pool_dx: s.pool_delta.x,
            pool_dy: s.pool_delta.y,
        };
        V0lverStatus::Ok
    })
}

// Chain

/// A chain at height 0 built from the scenario's pool, protocol settings,
/// roster endowments and initial external price.
///
/// # Safety
/// `scenario` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_new(scenario: *const V0lverScenario, out: *mut *mut V0lverChain) -> V0lverStatus {
    guard(|| {
        let out = deref!(mut out);
        *out = ptr::null_mut();
        let cfg = &deref!(scenario).0;
        let producers: Vec<_> = cfg
            .producers
            .expand()
            .into_iter()
            .enumerate()
            .map(|(i, (_, t))| (i as u32, t))
            .collect();
        match ChainState::new(cfg.engine_config(cfg.schedule), cfg.reserves(), &producers, cfg.eps0()) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(V0lverChain(c)));
                V0lverStatus::Ok
            }
            Err(e) => engine(e),
        }
    })
}

/// # Safety
/// `chain` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_free(chain: *mut V0lverChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Current block height, or `u64::MAX` for a null handle.
///
/// # Safety
/// `chain` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_height(chain: *const V0lverChain) -> u64 {
    chain.as_ref().map_or(u64::MAX, |c| c.0.height())
}

/// Live reserves and vault holdings.
///
/// # Safety
/// `chain` must be a live handle; all out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_reserves(
    chain: *const V0lverChain,
    x: *mut f64,
    y: *mut f64,
    vault_x: *mut f64,
    vault_y: *mut f64,
) -> V0lverStatus {
    let c = &deref!(chain).0;
    let v = c.pool().vault.holdings();
    *deref!(mut x) = c.pool().reserves.x();
    *deref!(mut y) = c.pool().reserves.y();
    *deref!(mut vault_x) = v.x;
    *deref!(mut vault_y) = v.y;
    V0lverStatus::Ok
}

/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_set_external_price(chain: *mut V0lverChain, eps: f64) -> V0lverStatus {
    let c = deref!(mut chain);
    let e = tri!(price(eps));
    c.0.set_external_price(e);
    V0lverStatus::Ok
}

fn order_from(user: u32, sell_y: bool, size: f64, limit: f64) -> Result<Order, V0lverStatus> {
    let limit = if limit > 0.0 { Some(price(limit)?) } else { None };
    Ok(Order {
        side: if sell_y { Side::SellY } else { Side::BuyY },
        size,
        limit,
        owner: AgentId::User(user),
    })
}

/// Commits a user order (limit ≤ 0 means market) under `salt` and submits
/// the OCT; writes its id to `oct`. The same arguments reveal it later.
///
/// # Safety
/// `chain` must be a live handle; `oct` writable.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_submit(
    chain: *mut V0lverChain,
    user: u32,
    sell_y: bool,
    size: f64,
    limit: f64,
    salt: u64,
    oct: *mut u64,
) -> V0lverStatus {
    guard(|| {
        let c = deref!(mut chain);
        let oct = deref!(mut oct);
        let order = tri!(order_from(user, sell_y, size, limit));
        let sealed = SealedOrder { order, salt };
        match c.0.submit_oct(order.owner, order.side.sold(), sealed.commitment()) {
            Ok(id) => {
                *oct = id.0;
                V0lverStatus::Ok
            }
            Err(e) => engine(e),
        }
    })
}

/// Inserts the whole mempool on behalf of `producer`.
///
/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_insert_mempool(chain: *mut V0lverChain, producer: u32) -> V0lverStatus {
    guard(|| {
        let c = deref!(mut chain);
        let set: Vec<OctId> = c.0.mempool().collect();
        c.0.insert_octs(producer, &set).map_or_else(engine, |_| V0lverStatus::Ok)
    })
}

/// Update transaction naming allocation height `h_a` and target price;
/// writes the producer's arbitrage payoff to `payoff` when non-null.
///
/// # Safety
/// `chain` must be a live handle; `payoff` writable or null.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_update(
    chain: *mut V0lverChain,
    producer: u32,
    h_a: u64,
    target: f64,
    payoff: *mut f64,
) -> V0lverStatus {
    guard(|| {
        let c = deref!(mut chain);
        let p = tri!(price(target));
        match c.0.apply_update_tx(producer, h_a, p) {
            Ok(u) => {
                if let Some(out) = payoff.as_mut() {
                    *out = u.payoff;
                }
                V0lverStatus::Ok
            }
            Err(e) => engine(e),
        }
    })
}

/// Reveals OCT `oct` with the arguments it was submitted with.
///
/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_reveal(
    chain: *mut V0lverChain,
    oct: u64,
    user: u32,
    sell_y: bool,
    size: f64,
    limit: f64,
    salt: u64,
) -> V0lverStatus {
    guard(|| {
        let c = deref!(mut chain);
        let order = tri!(order_from(user, sell_y, size, limit));
        c.0.reveal_order(OctId(oct), &SealedOrder { order, salt })
            .map_or_else(engine, |_| V0lverStatus::Ok)
    })
}

/// Ends the block: executes due batches, re-enters the vault, checks
/// conservation.
///
/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn v0lver_chain_advance(chain: *mut V0lverChain) -> V0lverStatus {
    guard(|| {
        let c = deref!(mut chain);
        c.0.advance_block().map_or_else(engine, |_| V0lverStatus::Ok)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(V0lverStatus::Ok as i32, 0);
        assert_eq!(V0lverStatus::Invariant as i32, 6);
    }

    #[test]
    fn null_out_pointer_is_reported() {
        let s = unsafe { v0lver_max_lvr(1.0, 1.0, 1.0, ptr::null_mut()) };
        assert_eq!(s, V0lverStatus::NullArgument);
        assert!(!v0lver_last_error().is_null());
    }
}
