//! Experiment runner for the quantum ruler simulator.

pub mod app;
pub mod config;
pub mod run;
pub mod table;

pub use config::{Format, RunConfig, Scenario};
pub use run::{run, run_coherence_sweep, run_cstar_sweep, run_modes, run_response, run_validate};
pub use table::{Cell, Table};
