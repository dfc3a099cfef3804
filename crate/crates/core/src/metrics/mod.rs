//! Statistics over simulation runs, analytic-vs-simulated comparison and an
//! exact Markov-chain oracle for tiny scenarios.

mod compare;
mod oracle;
mod summary;

pub use compare::{
    compare, relative_error, ComparisonReport, ComparisonRow, Tolerance, ToleranceKind, ToleranceProfile, Verdict,
};
pub use oracle::{brute_force_oracle, OracleDevice, OracleOptions, OracleResult};
pub use summary::{summarize, DeviceSim, Estimate, EstimateMethod, SimReport, SlotSim, MIN_TRANSMISSIONS};

use thiserror::Error;

use crate::model::DeviceId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("fewer than {MIN_TRANSMISSIONS} transmissions for device(s) {devices:?}")]
    InsufficientData { devices: Vec<DeviceId> },
    #[error("scenario mismatch: analytic report is for {analytic}, simulation for {simulated}")]
    ScenarioMismatch { analytic: String, simulated: String },
    #[error("runs disagree on device layout or super-cycle")]
    InconsistentRuns,
    #[error("queue cap {cap} too small: stationary mass {mass:e} at the cap")]
    StateSpaceOverflow { cap: usize, mass: f64 },
    #[error("oracle does not support this scenario: {0}")]
    Unsupported(String),
    #[error("linear system is singular")]
    Singular,
}
