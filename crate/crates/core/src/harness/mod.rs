//! Experiment orchestration: config ingestion, scenario runs over seeded
//! replicates, welfare and regret accounting, CSV and SVG output.

mod config;
mod emit;
mod experiment;
mod ledger;
mod stats;

pub use config::{AgentConfig, EnvConfig, ExperimentConfig, Scenario};
pub use emit::{emit_csv, emit_svg, read_csv, write_summary, PlotKind, SvgSeries};
pub use experiment::{build_agent, build_environment, regret_sweep, run_experiment, ExperimentResult, ReplicateResult, SweepResult};
pub use ledger::{EpisodeRecord, Phase, RegretDecomposition, RegretLedger};
pub use stats::{default_grid, fit_power_law, fit_regret_exponent, mean_series, rolling_average, ExponentFit};
