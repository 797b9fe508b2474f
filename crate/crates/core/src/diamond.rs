//! LVR-rebate mechanics.
//!
//! An updater moving the pool to a target price only trades `(1 − β)` of the
//! full CFMM deltas. The pool is then brought to the target price by moving
//! tokens from the rich side into a vault, which is later re-entered into the
//! reserves at the external price.

use serde::{Deserialize, Serialize};

use crate::cfmm::{PoolCurve, Price, Reserves, Tokens};
use crate::error::{MathError, MathResult};

/// Shape of the rebate schedule below the cutoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleShape {
    #[default]
    Linear,
}

/// The rebate function β(z) over allocation gaps `z = H − H_a`.
///
/// `z_max = 0` is the disabled schedule (β ≡ 0), under which the pool behaves
/// as its corresponding CFMM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct RebateSchedule {
    z_max: u32,
    beta0: f64,
    shape: ScheduleShape,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    z_max: u32,
    beta0: f64,
    #[serde(default)]
    shape: ScheduleShape,
}

impl TryFrom<RawSchedule> for RebateSchedule {
    type Error = MathError;
    fn try_from(raw: RawSchedule) -> MathResult<Self> {
        match raw.shape {
            ScheduleShape::Linear => RebateSchedule::linear(raw.z_max, raw.beta0),
        }
    }
}

impl From<RebateSchedule> for RawSchedule {
    fn from(s: RebateSchedule) -> Self {
        RawSchedule {
            z_max: s.z_max,
            beta0: s.beta0,
            shape: s.shape,
        }
    }
}

impl RebateSchedule {
    /// β(z) = β0 · max(0, 1 − z/Z).
    pub fn linear(z_max: u32, beta0: f64) -> MathResult<Self> {
        if z_max == 0 {
            if !(0.0..1.0).contains(&beta0) {
                return Err(MathError::Parameter {
                    name: "beta0",
                    value: beta0,
                });
            }
            return Ok(Self::disabled());
        }
        if !(beta0 > 0.0 && beta0 < 1.0) {
            return Err(MathError::Parameter {
                name: "beta0",
                value: beta0,
            });
        }
        Ok(RebateSchedule {
            z_max,
            beta0,
            shape: ScheduleShape::Linear,
        })
    }

    pub fn disabled() -> Self {
        RebateSchedule {
            z_max: 0,
            beta0: 0.0,
            shape: ScheduleShape::Linear,
        }
    }

    pub fn z_max(&self) -> u32 {
        self.z_max
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn shape(&self) -> ScheduleShape {
        self.shape
    }

    pub fn is_disabled(&self) -> bool {
        self.z_max == 0
    }

    pub fn beta_at(&self, gap: u64) -> f64 {
        if gap >= u64::from(self.z_max) {
            return 0.0;
        }
        match self.shape {
            ScheduleShape::Linear => self.beta0 * (1.0 - gap as f64 / f64::from(self.z_max)),
        }
    }
}

/// Side account holding tokens removed by rebated moves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vault {
    holdings: Tokens,
}

impl Vault {
    pub fn new(x: f64, y: f64) -> MathResult<Self> {
        if x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite() {
            Ok(Vault {
                holdings: Tokens::new(x, y),
            })
        } else {
            Err(MathError::Parameter {
                name: "vault",
                value: x.min(y),
            })
        }
    }

    pub fn holdings(&self) -> Tokens {
        self.holdings
    }

    pub fn is_empty(&self) -> bool {
        self.holdings.is_zero()
    }

    pub(crate) fn deposit(&mut self, t: Tokens) {
        debug_assert!(t.x >= 0.0 && t.y >= 0.0);
        self.holdings += t;
    }
}

/// Outcome of a rebated price move.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RebatedMoveResult {
    pub target: Price,
    pub beta: f64,
    /// The point the corresponding CFMM would move to.
    pub cfmm_target: Reserves,
    pub new_reserves: Reserves,
    pub vault_deposit: Tokens,
    /// Tokens received by the mover (negative components are payments).
    pub producer_flow: Tokens,
}

impl RebatedMoveResult {
    /// Value of the mover's flow at `eps`.
    pub fn producer_payoff_at(&self, eps: Price) -> f64 {
        self.producer_flow.value_at(eps)
    }

    /// Fraction of the corresponding-CFMM reserves left live after the vault
    /// deposit.
    pub fn live_fraction(&self) -> f64 {
        self.new_reserves.x() / self.cfmm_target.x()
    }
}

/// Moves `reserves` to `target` with rebate `beta`.
pub fn apply_rebated_move(
    curve: PoolCurve,
    reserves: &Reserves,
    target: Price,
    beta: f64,
) -> MathResult<RebatedMoveResult> {
    if !(0.0..1.0).contains(&beta) {
        return Err(MathError::Parameter {
            name: "beta",
            value: beta,
        });
    }
    if curve.price(reserves) == target {
        return Ok(RebatedMoveResult {
            target,
            beta,
            cfmm_target: *reserves,
            new_reserves: *reserves,
            vault_deposit: Tokens::ZERO,
            producer_flow: Tokens::ZERO,
        });
    }

    let k = curve.invariant(reserves);
    let cfmm_target = curve.reserves_at_price(k, target)?;
    let full = cfmm_target.tokens() - reserves.tokens();
    let traded = full * (1.0 - beta);

    let (new_reserves, vault_deposit) = if beta == 0.0 {
        (cfmm_target, Tokens::ZERO)
    } else {
        let partial = reserves.apply(traded)?;
        match curve {
            PoolCurve::ConstantProduct => {
                let p = target.value();
                if p > curve.price(&partial).value() {
                    // Too much y left: move the excess y to the vault.
                    let y = partial.x() / p;
                    (
                        Reserves::new(partial.x(), y)?,
                        Tokens::new(0.0, partial.y() - y),
                    )
                } else {
                    let x = partial.y() * p;
                    (
                        Reserves::new(x, partial.y())?,
                        Tokens::new(partial.x() - x, 0.0),
                    )
                }
            }
        }
    };

    Ok(RebatedMoveResult {
        target,
        beta,
        cfmm_target,
        new_reserves,
        vault_deposit,
        producer_flow: -traded,
    })
}

/// Value the mover extracted, at `eps`.
pub fn producer_arb_payoff(result: &RebatedMoveResult, eps: Price) -> f64 {
    result.producer_payoff_at(eps)
}

/// Result of converting the vault back into pool reserves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reentry {
    pub reserves: Reserves,
    /// Tokens added to the reserves.
    pub deposited: Tokens,
    /// Net tokens exchanged with the external market during conversion
    /// (positive components enter the system).
    pub external_in: Tokens,
}

/// Re-enters the vault into the reserves: holdings are converted at `eps` into
/// two equal-value halves and deposited, so the deposit's own ratio is `eps`.
pub fn vault_reenter(reserves: &Reserves, vault: &Vault, eps: Price) -> MathResult<Reentry> {
    let held = vault.holdings();
    if held.is_zero() {
        return Ok(Reentry {
            reserves: *reserves,
            deposited: Tokens::ZERO,
            external_in: Tokens::ZERO,
        });
    }
    let value = held.value_at(eps);
    let deposited = Tokens::new(value / 2.0, value / (2.0 * eps.value()));
    Ok(Reentry {
        reserves: reserves.apply(deposited)?,
        deposited,
        external_in: deposited - held,
    })
}

/// The protocol pool: live reserves, vault and rebate schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct V0lverPool {
    pub curve: PoolCurve,
    pub reserves: Reserves,
    pub vault: Vault,
    pub schedule: RebateSchedule,
}

impl V0lverPool {
    pub fn new(curve: PoolCurve, reserves: Reserves, schedule: RebateSchedule) -> Self {
        V0lverPool {
            curve,
            reserves,
            vault: Vault::default(),
            schedule,
        }
    }

    pub fn price(&self) -> Price {
        self.curve.price(&self.reserves)
    }

    pub fn constant(&self) -> f64 {
        self.curve.invariant(&self.reserves)
    }

    /// Live reserves plus vault holdings.
    pub fn total_tokens(&self) -> Tokens {
        self.reserves.tokens() + self.vault.holdings()
    }
}
