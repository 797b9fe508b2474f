use serde::{Deserialize, Serialize};

use crate::allocation::Order;
use crate::cfmm::{Price, Tokens};
use crate::ids::{AgentId, OctId, Token};

/// One state transition of the engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub height: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    OctSubmitted {
        oct: OctId,
        owner: AgentId,
        side: Token,
        collateral: f64,
    },
    OctsInserted {
        producer: u32,
        octs: Vec<OctId>,
    },
    Update {
        producer: u32,
        allocation_height: u64,
        gap: u64,
        beta: f64,
        target: Price,
        eps: Price,
        producer_flow: Tokens,
        vault_deposit: Tokens,
        /// Live reserves right after the price move, before escrow funding.
        moved_reserves: Tokens,
        allocated: Vec<OctId>,
        escrow: Tokens,
        pool_contribution: Tokens,
        producer_contribution: Tokens,
    },
    Revealed {
        oct: OctId,
        order: Order,
    },
    RevealRejected {
        oct: OctId,
        reason: String,
    },
    Burned {
        oct: OctId,
        owner: AgentId,
        side: Token,
        amount: f64,
    },
    Fill {
        oct: OctId,
        owner: AgentId,
        order: Order,
        price: Price,
        sold: f64,
        received: f64,
    },
    Executed {
        allocation: u64,
        price: Price,
        volume: f64,
        pool_delta: Tokens,
        to_pool: Tokens,
        to_producer: Tokens,
        producer: u32,
        revealed: usize,
        burned: usize,
    },
    VaultReentry {
        deposited: Tokens,
        external_in: Tokens,
    },
    BlockEnd {
        reserves: Tokens,
        vault: Tokens,
        constant: f64,
    },
}
