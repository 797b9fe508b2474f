//! Scenario configuration, the block loop and the experiments built on it.

mod config;
mod experiments;
mod output;
mod replay;
mod run;

pub use config::{
    ConfigError, DominanceConfig, PoolConfig, PriceConfig, ProducerGroup, ProtocolConfig,
    RosterConfig, ScenarioConfig, Selection, SCENARIO_VERSION,
};
pub use experiments::{
    clustered_mean, detailed_run, dominance_sweep, equilibrium_experiment, lvr_experiment,
    own_order_count, par_map, user_price_experiment, DominancePoint, DominanceReport,
    EquilibriumReport, LvrReport, MeanCi, RunSummary, UserPriceReport, Z95,
};
pub use output::{write_csv, write_ndjson, Format, OutDir};
pub use replay::PlainCfmm;
pub use run::{
    rng_stream, run_scenario, simulate, twin_schedule, BlockRow, Deviation, PayoffTotals,
    RunMetrics, SimError, SimOptions, SingleRun,
};
