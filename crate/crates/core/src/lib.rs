//! Analytic model and discrete-event simulator for a slotted MAC protocol in
//! which devices sharing a slot are prioritised by mini-slot carrier sensing.
//!
//! - [`model`]: protocol parameters, devices, assignment, scenario validation
//!   and schedule expansion over differentiated assignment cycles.
//! - [`analytic`]: access-delay recursions, effective arrival rates, slot idle
//!   probability, expected frame length with idle-slot truncation, and the
//!   fixed-point solver for shared mini-slots.
//! - [`sim`]: a seeded, deterministic slot-by-slot simulator with an
//!   exportable event log.
//! - [`metrics`]: replication statistics, analytic-vs-simulated comparison and
//!   an exact Markov-chain oracle for tiny Bernoulli scenarios.
//! - [`io`]: scenario files, overrides and result serialisation.

pub mod analytic;
pub mod io;
pub mod metrics;
pub mod model;
pub mod sim;

pub use model::{Scenario, Ticks};
