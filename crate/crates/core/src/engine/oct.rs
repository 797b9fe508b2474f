use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocation::Order;
use crate::ids::{AgentId, OctId, Side, Token};

/// Binding commitment to a hidden order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment([u8; 32]);

impl Commitment {
    pub fn of(order: &Order, salt: u64) -> Self {
        let mut h = Sha256::new();
        h.update([match order.side {
            Side::BuyY => 0u8,
            Side::SellY => 1u8,
        }]);
        h.update(order.size.to_bits().to_le_bytes());
        h.update(
            order
                .limit
                .map_or(0u64, |p| p.value().to_bits())
                .to_le_bytes(),
        );
        let (tag, n) = match order.owner {
            AgentId::User(n) => (0u8, n),
            AgentId::Producer(n) => (1u8, n),
        };
        h.update([tag]);
        h.update(n.to_le_bytes());
        h.update(salt.to_le_bytes());
        Commitment(h.finalize().into())
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        f.write_str("..")
    }
}

/// An order together with the salt that opens its commitment. Held privately
/// by the submitting agent until reveal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SealedOrder {
    pub order: Order,
    pub salt: u64,
}

impl SealedOrder {
    pub fn commitment(&self) -> Commitment {
        Commitment::of(&self.order, self.salt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum OctState {
    Pending,
    Inserted { height: u64 },
    Allocated { allocation: u64 },
    Revealed { allocation: u64, order: Order },
    Executed { allocation: u64 },
    Burned { allocation: u64 },
}

impl OctState {
    pub fn name(&self) -> &'static str {
        match self {
            OctState::Pending => "pending",
            OctState::Inserted { .. } => "inserted",
            OctState::Allocated { .. } => "allocated",
            OctState::Revealed { .. } => "revealed",
            OctState::Executed { .. } => "executed",
            OctState::Burned { .. } => "burned",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, OctState::Executed { .. } | OctState::Burned { .. })
    }

    /// Whether `next` is a legal successor of `self`.
    pub fn may_become(&self, next: &OctState) -> bool {
        use OctState::*;
        match (self, next) {
            (Pending, Inserted { .. }) => true,
            (Inserted { .. }, Allocated { .. }) => true,
            (Allocated { allocation: a }, Revealed { allocation: b, .. }) => a == b,
            (Allocated { allocation: a }, Burned { allocation: b }) => a == b,
            (Revealed { allocation: a, .. }, Executed { allocation: b }) => a == b,
            _ => false,
        }
    }
}

/// Order commitment transaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oct {
    pub id: OctId,
    pub owner: AgentId,
    pub commitment: Commitment,
    pub collateral_side: Token,
    pub collateral: f64,
    pub state: OctState,
    pub submitted_at: u64,
    pub inserted_at: Option<u64>,
    /// Height of the block whose update transaction allocated this OCT.
    pub allocated_at: Option<u64>,
    pub revealed_at: Option<u64>,
}

impl Oct {
    pub(crate) fn transition(&mut self, next: OctState) -> Result<(), OctState> {
        if self.state.may_become(&next) {
            self.state = next;
            Ok(())
        } else {
            Err(self.state)
        }
    }
}
