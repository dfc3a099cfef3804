//! Seeded slot-by-slot simulation of the protocol.

mod engine;
mod log;
mod measure;
mod queue;
mod rng;
mod traffic;

pub use engine::{
    run, run_replications, run_seeded, DeviceTally, DeviceTotals, RawCounters, RunOptions, SenseOutcome,
    SlotResolution, SlotTally, Tally,
};
pub use log::{EventKind, EventLog, EventRecord};
pub use measure::measure_adf;
pub use queue::{arrival_admission, DeviceState, Packet};
pub use rng::{device_stream, SimRng};
pub use traffic::{generate_traffic, Arrivals, LogicalFrame};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("scenario is not valid:\n{0}")]
    Invalid(String),
    #[error("engine invariant violated: {0}")]
    Invariant(String),
}
