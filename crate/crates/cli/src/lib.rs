//! Scenario-driven front end for the bellsim engine.
//!
//! A scenario is a JSON document naming a model, its settings, a trial count
//! and a master seed. Every command writes a [`RunManifest`] that echoes the
//! scenario, so rerunning the echoed config reproduces the report exactly.

pub mod commands;
pub mod config;

pub use commands::{run, Command, Completed, Exit, Failure, RunManifest};
pub use config::{ConfigError, Overrides, ScenarioConfig, SCENARIO_SCHEMA};
