//! Configured experiments: sweeps, capacity sweeps, matched pairs, census.

pub mod config;
pub mod results;
pub mod runner;
pub mod svg;

pub use config::{ExperimentConfig, MatchedPairSpec, Mode, Profile};
pub use runner::{
    compute_sweep, replot, run_capacity_sweep, run_census, run_matched_pair_experiment, run_sweep,
    write_sweep, RunOutcome, RunResult, SweepResult, Workspace,
};
