//! Configuration, time loop, parameter sweeps, property checks and
//! manufactured-solution studies.

pub mod config;
pub mod mms;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{output_root, RunConfig, OUTPUT_ROOT_ENV};
pub use run::{execute, run, RunOutcome, RunReport, Simulation};
