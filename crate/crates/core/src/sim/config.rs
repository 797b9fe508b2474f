use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{LimitPolicy, ProducerStrategy, UserFlowModel};
use crate::allocation::OrderBounds;
use crate::cfmm::{PoolCurve, Price, Reserves, Tokens};
use crate::diamond::RebateSchedule;
use crate::engine::{EngineConfig, ReentryPolicy};

/// Scenario file format version understood by this build.
pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported scenario version {0} (expected {SCENARIO_VERSION})")]
    Version(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::horizon")]
    pub horizon: u64,
    /// Replicas for the Monte-Carlo experiments.
    #[serde(default = "defaults::runs")]
    pub runs: u32,
    #[serde(default)]
    pub pool: PoolConfig,
    #[serde(default = "defaults::schedule")]
    pub schedule: RebateSchedule,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub price: PriceConfig,
    #[serde(default)]
    pub users: UserFlowModel,
    #[serde(default)]
    pub producers: RosterConfig,
    #[serde(default)]
    pub dominance: DominanceConfig,
}

mod defaults {
    use crate::diamond::RebateSchedule;

    pub fn seed() -> u64 {
        42
    }
    pub fn horizon() -> u64 {
        500
    }
    pub fn runs() -> u32 {
        200
    }
    pub fn schedule() -> RebateSchedule {
        RebateSchedule::linear(4, 0.8).expect("valid default schedule")
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            version: SCENARIO_VERSION,
            seed: defaults::seed(),
            horizon: defaults::horizon(),
            runs: defaults::runs(),
            pool: PoolConfig::default(),
            schedule: defaults::schedule(),
            protocol: ProtocolConfig::default(),
            price: PriceConfig::default(),
            users: UserFlowModel::default(),
            producers: RosterConfig::default(),
            dominance: DominanceConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub curve: PoolCurve,
    pub x: f64,
    pub y: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            curve: PoolCurve::ConstantProduct,
            x: 100_000.0,
            y: 100_000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Blocks after allocation during which reveals are accepted.
    pub reveal_window: u64,
    /// Blocks within which a user's transactions are finalized; bounds the
    /// users' reveal delay.
    pub finality_window: u64,
    pub conversion_frequency: u64,
    pub reentry: ReentryPolicy,
    pub max_x: f64,
    pub max_y: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            reveal_window: 2,
            finality_window: 2,
            conversion_frequency: 1,
            reentry: ReentryPolicy::EveryConversionBlock,
            max_x: 1.0,
            max_y: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceConfig {
    pub eps0: f64,
    pub sigma: f64,
}

impl Default for PriceConfig {
    fn default() -> Self {
        PriceConfig {
            eps0: 1.0,
            sigma: 0.02,
        }
    }
}

/// How the producer of each block is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Producers take turns in roster order.
    #[default]
    Rotation,
    /// Uniformly random producer each block.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RosterConfig {
    pub selection: Selection,
    pub groups: Vec<ProducerGroup>,
}

impl Default for RosterConfig {
    fn default() -> Self {
        RosterConfig {
            selection: Selection::Rotation,
            groups: vec![ProducerGroup::default()],
        }
    }
}

impl RosterConfig {
    pub fn size(&self) -> usize {
        self.groups.iter().map(|g| g.count as usize).sum()
    }

    /// Strategy and endowment of each producer, in roster order.
    pub fn expand(&self) -> Vec<(ProducerStrategy, Tokens)> {
        self.groups
            .iter()
            .flat_map(|g| std::iter::repeat_n((g.strategy, g.endowment), g.count as usize))
            .collect()
    }

    /// Probability that the producer of block `h` also produces `h + 1`.
    pub fn repeat_probability(&self) -> f64 {
        let n = self.size();
        match (self.selection, n) {
            (_, 0) => 0.0,
            (_, 1) => 1.0,
            (Selection::Rotation, _) => 0.0,
            (Selection::Random, n) => 1.0 / n as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProducerGroup {
    pub count: u32,
    pub endowment: Tokens,
    pub strategy: ProducerStrategy,
}

impl Default for ProducerGroup {
    fn default() -> Self {
        ProducerGroup {
            count: 4,
            endowment: Tokens::new(1_000_000.0, 1_000_000.0),
            strategy: ProducerStrategy::default(),
        }
    }
}

/// The frozen single-update context of the dominance sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominanceConfig {
    /// External price relative to the initial pool price.
    pub eps_shift: f64,
    pub multipliers: Vec<f64>,
    pub alphas: Vec<f64>,
    pub trials: u32,
    /// User orders in the allocated batch.
    pub batch_size: u32,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        DominanceConfig {
            eps_shift: 1.02,
            multipliers: (90..=110).map(|i| f64::from(i) / 100.0).collect(),
            alphas: vec![0.0, 0.25, 0.5],
            trials: 10_000,
            batch_size: 8,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        #[derive(Deserialize)]
        struct Probe {
            version: Option<u32>,
        }
        let probe: Probe = toml::from_str(text)?;
        match probe.version {
            None => return Err(ConfigError::Invalid("missing `version` field".into())),
            Some(v) if v != SCENARIO_VERSION => return Err(ConfigError::Version(v)),
            Some(_) => {}
        }
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let pos = |name: &str, v: f64| -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        if self.version != SCENARIO_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        pos("pool.x", self.pool.x)?;
        pos("pool.y", self.pool.y)?;
        pos("protocol.max_x", self.protocol.max_x)?;
        pos("protocol.max_y", self.protocol.max_y)?;
        pos("price.eps0", self.price.eps0)?;
        if !(self.price.sigma.is_finite() && self.price.sigma >= 0.0) {
            return bad(format!("price.sigma must be nonnegative, got {}", self.price.sigma));
        }
        if self.protocol.conversion_frequency < 1 {
            return bad("protocol.conversion_frequency must be at least 1".into());
        }
        let u = &self.users;
        if !(u.arrival_rate.is_finite() && u.arrival_rate >= 0.0) {
            return bad(format!("users.arrival_rate must be nonnegative, got {}", u.arrival_rate));
        }
        if u.population < 1 {
            return bad("users.population must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&u.reveal_probability) {
            return bad(format!(
                "users.reveal_probability must be in [0, 1], got {}",
                u.reveal_probability
            ));
        }
        if u.reveal_delay > self.protocol.finality_window {
            return bad(format!(
                "users.reveal_delay ({}) exceeds protocol.finality_window ({})",
                u.reveal_delay, self.protocol.finality_window
            ));
        }
        if let LimitPolicy::Symmetric { offset } = u.limits {
            if !(0.0..1.0).contains(&offset) {
                return bad(format!("users.limits.offset must be in [0, 1), got {offset}"));
            }
        }
        if self.producers.size() == 0 {
            return bad("the producer roster is empty".into());
        }
        for g in &self.producers.groups {
            g.strategy.validate().map_err(ConfigError::Invalid)?;
            if !(g.endowment.is_nonnegative(0.0) && g.endowment.x.is_finite() && g.endowment.y.is_finite()) {
                return bad("producer endowments must be nonnegative".into());
            }
        }
        let d = &self.dominance;
        pos("dominance.eps_shift", d.eps_shift)?;
        if d.multipliers.is_empty() || d.alphas.is_empty() {
            return bad("dominance grids must be nonempty".into());
        }
        for &m in &d.multipliers {
            pos("dominance.multipliers[]", m)?;
        }
        for &a in &d.alphas {
            if !(0.0..1.0).contains(&a) {
                return bad(format!("dominance.alphas[] must be in [0, 1), got {a}"));
            }
        }
        if d.trials < 1 {
            return bad("dominance.trials must be at least 1".into());
        }
        Ok(())
    }

    pub fn reserves(&self) -> Reserves {
        Reserves::new(self.pool.x, self.pool.y).expect("validated reserves")
    }

    pub fn eps0(&self) -> Price {
        Price::new(self.price.eps0).expect("validated price")
    }

    pub fn bounds(&self) -> OrderBounds {
        OrderBounds::new(self.protocol.max_x, self.protocol.max_y).expect("validated bounds")
    }

    pub fn engine_config(&self, schedule: RebateSchedule) -> EngineConfig {
        EngineConfig {
            curve: self.pool.curve,
            schedule,
            bounds: self.bounds(),
            reveal_window: self.protocol.reveal_window,
            conversion_frequency: self.protocol.conversion_frequency,
            reentry: self.protocol.reentry,
        }
    }
}
