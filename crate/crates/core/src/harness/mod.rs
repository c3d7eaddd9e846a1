//! Monte Carlo experiment engine: scenario files, seeded trials, aggregation
//! and result files.

pub mod config;
pub mod emit;
pub mod presets;
pub mod run;

pub use config::{snr_to_noise_var, MetricFamily, Scenario, ScenarioKind, SnrMode, SweepAxis};
pub use emit::{emit_results, write_csv, EmitOptions, OutputFormat};
pub use presets::{preset, PRESET_NAMES};
pub use run::{derive_seed, run_scenario, AggregateRow, ResultTable, RunOptions, TrialRecord};
