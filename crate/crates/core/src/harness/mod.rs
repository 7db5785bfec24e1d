//! Experiment plumbing: configuration, noise, scenario drivers and CSV output.

pub mod config;
pub mod noise;
pub mod output;
pub mod presets;
pub mod scenario;

pub use config::{scenario_seed, ConfigError, EstimationConfig, Misestimate, NoiseConfig, RobustBounds, ScenarioConfig};
pub use noise::{inject_noise, signal_power, NoiseRealization};
pub use output::{emit_csv, OutputError, OutputSet};
pub use presets::Preset;
pub use scenario::{
    gap_grid, open_loop_run, run_scenario, sweep_h, EstimateRow, GapRow, RowStatus, RunArtifacts, ScenarioError,
};
