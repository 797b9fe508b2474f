//! Simulation engine for an LVR-rebating AMM with an encrypted, batch-settled
//! order flow.

pub mod agents;
pub mod allocation;
pub mod cfmm;
pub mod cli;
pub mod diamond;
pub mod engine;
pub mod error;
pub mod ids;
pub mod sim;

pub use cfmm::{PoolCurve, Price, Reserves, Tokens};
pub use error::{MathError, MathResult};
