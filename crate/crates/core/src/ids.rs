use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifies an order-commitment transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OctId(pub u64);

impl fmt::Display for OctId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "oct#{}", self.0)
    }
}

/// An account holder in the simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentId {
    User(u32),
    Producer(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Token {
    X,
    Y,
}

/// Direction of an order. Prices are x per y, so a buyer of y sells x.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Sells token x for token y.
    BuyY,
    /// Sells token y for token x.
    SellY,
}

impl Side {
    /// The token the order sells (and is collateralised in).
    pub fn sold(self) -> Token {
        match self {
            Side::BuyY => Token::X,
            Side::SellY => Token::Y,
        }
    }
}
