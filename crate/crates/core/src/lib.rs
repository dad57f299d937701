//! Simulation and analysis of two-party distributed (rejection-)sampling
//! protocols that try to reproduce the singlet correlations.
//!
//! The crate is split along the lines of the problem:
//!
//! - [`target_law`]: the analytic singlet law, variation distance and CHSH.
//! - [`rng`]: counter-based per-trial random substreams.
//! - [`protocol`]: the two-station engine, selection rules and tallies.
//! - [`models`]: concrete local protocols and negative controls.
//! - [`analysis`]: estimators, CHSH experiments, contract checkers, sweeps.

pub mod analysis;
pub mod error;
pub mod models;
pub mod protocol;
pub mod rng;
pub mod target_law;

pub use error::{Error, Result};
pub use protocol::{Executor, Flavor, Model, SelectionRule, Tally, TrialRecord, Verdict};
pub use target_law::{Direction, JointLaw, Outcome, Party, SettingsQuad};
