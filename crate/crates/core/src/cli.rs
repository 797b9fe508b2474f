//! Command-line front end of `v0lver-sim`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::sim::{
    detailed_run, dominance_sweep, equilibrium_experiment, lvr_experiment, run_scenario,
    ConfigError, Format, OutDir, RunSummary, ScenarioConfig, SimError, SimOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

const FAILURE_LOG: &str = "failure-events.ndjson";

#[derive(Debug, Parser)]
#[command(name = "v0lver-sim", version, about = "Seeded simulations of an LVR-rebating AMM")]
pub struct Cli {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Format of series files; summaries are always JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for independent runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Replace existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One run and its β ≡ 0 twin: summary, per-block series, optional event log.
    Run {
        /// Also write events.ndjson.
        #[arg(long)]
        events: bool,
    },
    /// Producer utility over price multipliers × own-order shares.
    Sweep,
    /// Update-gap histogram over the configured number of runs.
    Equilibrium,
    /// LVR ratio against the β ≡ 0 twin over the configured number of runs.
    Lvr,
    /// Checks the scenario and prints it with all defaults filled in.
    Validate,
}

enum Failure {
    Config(String),
    Io(String),
    Invariant(SimError),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            e if e.is_invariant_violation() => Failure::Invariant(e),
            e => Failure::Config(e.to_string()),
        }
    }
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &cli.scenario {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn series_name(stem: &str, format: Format) -> String {
    match format {
        Format::Csv => format!("{stem}.csv"),
        Format::Json => format!("{stem}.json"),
    }
}

fn write_series<T: Serialize>(out: &OutDir, stem: &str, format: Format, rows: &[T]) -> std::io::Result<PathBuf> {
    let name = series_name(stem, format);
    match format {
        Format::Json => out.write_json(&name, &rows),
        Format::Csv => {
            std::fs::create_dir_all(out.root())?;
            let file = std::fs::File::create(out.path(&name))?;
            crate::sim::write_csv(std::io::BufWriter::new(file), rows)?;
            Ok(out.path(&name))
        }
    }
}

#[derive(Serialize)]
struct LvrRow {
    run: usize,
    seed: u64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct GapRow {
    gap: u64,
    count: u64,
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load(cli)?;
    let out = OutDir::new(&cli.out, cli.force);
    match &cli.command {
        Command::Validate => {
            write!(stdout, "{}", cfg.to_toml_string())?;
        }
        Command::Run { events } => {
            let blocks = series_name("blocks", cli.format);
            let mut names = vec!["summary.json", blocks.as_str()];
            if *events {
                names.push("events.ndjson");
            }
            out.check(&names)?;
            let run = detailed_run(&cfg, *events)?;
            let summary = out.write_json("summary.json", &RunSummary::of(&run))?;
            write_series(&out, "blocks", cli.format, &run.rows)?;
            if *events {
                out.write_events("events.ndjson", &run.events)?;
            }
            writeln!(stdout, "{}", summary.display())?;
        }
        Command::Sweep => {
            let surface = series_name("surface", cli.format);
            out.check(&["summary.json", surface.as_str()])?;
            let report = dominance_sweep(&cfg, cli.jobs)?;
            write_series(&out, "surface", cli.format, &report.points)?;
            let summary = out.write_json("summary.json", &report)?;
            writeln!(
                stdout,
                "argmax multiplier {} alpha {} ({})",
                report.argmax_multiplier,
                report.argmax_alpha,
                summary.display()
            )?;
        }
        Command::Equilibrium => {
            let gaps = series_name("gaps", cli.format);
            out.check(&["summary.json", gaps.as_str()])?;
            let report = equilibrium_experiment(&cfg, cli.jobs)?;
            let rows: Vec<GapRow> = report
                .histogram
                .iter()
                .map(|(&gap, &count)| GapRow { gap, count })
                .collect();
            write_series(&out, "gaps", cli.format, &rows)?;
            let summary = out.write_json("summary.json", &report)?;
            match report.gap0_fraction {
                Some(f) => writeln!(stdout, "gap-0 share {f:.4} of {} updates ({})", report.updates, summary.display())?,
                None => writeln!(stdout, "no updates ({})", summary.display())?,
            }
        }
        Command::Lvr => {
            let runs = series_name("runs", cli.format);
            out.check(&["summary.json", runs.as_str()])?;
            let report = lvr_experiment(&cfg, cli.jobs)?;
            let rows: Vec<LvrRow> = report
                .per_run
                .iter()
                .enumerate()
                .map(|(i, r)| LvrRow {
                    run: i,
                    seed: cfg.seed.wrapping_add(i as u64),
                    ratio: *r,
                })
                .collect();
            write_series(&out, "runs", cli.format, &rows)?;
            let summary = out.write_json("summary.json", &report)?;
            match report.ratio {
                Some(ci) => writeln!(
                    stdout,
                    "ratio {:.4} [{:.4}, {:.4}] ({})",
                    ci.mean,
                    ci.lo,
                    ci.hi,
                    summary.display()
                )?,
                None => writeln!(stdout, "ratio undefined: no baseline LVR ({})", summary.display())?,
            }
        }
    }
    Ok(())
}

/// Replays the failing run with the event log on and writes it next to the
/// other outputs.
fn dump_failure(cli: &Cli, err: &SimError) -> Option<PathBuf> {
    let mut cfg = load(cli).ok()?;
    let events = match err {
        SimError::Engine { events, .. } if !events.is_empty() => events.clone(),
        _ => {
            cfg.seed = err.seed()?;
            let opts = SimOptions {
                record_events: true,
                record_rows: false,
            };
            match run_scenario(&cfg, cfg.seed, opts) {
                Err(SimError::Engine { events, .. }) => events,
                _ => return None,
            }
        }
    };
    OutDir::new(&cli.out, true).write_events(FAILURE_LOG, &events).ok()
}

/// Parses `args` (program name first) and runs the command; returns the exit
/// code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(msg)) | Err(Failure::Io(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Invariant(err)) => {
            let _ = writeln!(stderr, "invariant violation: {err}");
            if let Some(path) = dump_failure(&cli, &err) {
                let _ = writeln!(stderr, "event log written to {}", path.display());
            }
            EXIT_INVARIANT
        }
    }
}
