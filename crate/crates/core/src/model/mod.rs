//! Domain types shared by the analytic engine and the simulator.
//!
//! All protocol durations are integer nanosecond [`Ticks`]. Arrival rates are
//! stored per second, exactly as written in scenario files, and converted to
//! per-tick or per-frame quantities at the point of use.

mod schedule;
mod validate;

pub use schedule::{expand_schedule, GlobalSlotTable, SlotCells};
pub use validate::{validate_scenario, Issue, IssueKind, SlotLoadEntry, ValidationReport};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};
use thiserror::Error;

/// Nanoseconds per microsecond.
pub const TICKS_PER_MICRO: u64 = 1_000;
/// Nanoseconds per second.
pub const TICKS_PER_SECOND: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeError {
    #[error("duration {0} us is negative or not finite")]
    Invalid(f64),
    #[error("duration {0} us is not a whole number of nanoseconds")]
    NotIntegral(f64),
}

/// A point in time or a duration, in integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ticks(pub u64);

impl Ticks {
    pub const ZERO: Ticks = Ticks(0);

    pub fn from_micros(us: f64) -> Result<Ticks, TimeError> {
        if !us.is_finite() || us < 0.0 {
            return Err(TimeError::Invalid(us));
        }
        let ns = us * TICKS_PER_MICRO as f64;
        let rounded = ns.round();
        if (ns - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(TimeError::NotIntegral(us));
        }
        Ok(Ticks(rounded as u64))
    }

    pub fn as_micros(self) -> f64 {
        self.0 as f64 / TICKS_PER_MICRO as f64
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl Add for Ticks {
    type Output = Ticks;
    fn add(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 + rhs.0)
    }
}

impl AddAssign for Ticks {
    fn add_assign(&mut self, rhs: Ticks) {
        self.0 += rhs.0;
    }
}

impl Sub for Ticks {
    type Output = Ticks;
    fn sub(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 - rhs.0)
    }
}

impl Mul<u64> for Ticks {
    type Output = Ticks;
    fn mul(self, rhs: u64) -> Ticks {
        Ticks(self.0 * rhs)
    }
}

impl fmt::Display for Ticks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.as_micros())
    }
}

/// Device priority class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Priority {
    #[serde(rename = "HP")]
    High,
    #[serde(rename = "RP")]
    Regular,
    #[serde(rename = "LP")]
    Low,
}

impl Priority {
    pub const ALL: [Priority; 3] = [Priority::High, Priority::Regular, Priority::Low];

    pub fn label(self) -> &'static str {
        match self {
            Priority::High => "HP",
            Priority::Regular => "RP",
            Priority::Low => "LP",
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Slot geometry, assignment cycles and feature switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Mini-slots per slot.
    pub minislots: u32,
    pub minislot_len: Ticks,
    /// Packet transmission duration.
    pub tx_len: Ticks,
    pub cycle_hp: u32,
    pub cycle_rp: u32,
    pub cycle_lp: u32,
    pub synccs: bool,
    /// `false` selects the packet-replacement (no buffer) discipline.
    pub buffered: bool,
    /// Allows several same-class devices on one mini-slot.
    pub smsa: bool,
}

impl ProtocolParams {
    /// Total sensing span of a slot, `n_m * T_m`.
    pub fn sensing_len(&self) -> Ticks {
        self.minislot_len * self.minislots as u64
    }

    /// Full slot length `n_m * T_m + T_x`.
    pub fn slot_len(&self) -> Ticks {
        self.sensing_len() + self.tx_len
    }

    pub fn cycle(&self, class: Priority) -> u32 {
        match class {
            Priority::High => self.cycle_hp,
            Priority::Regular => self.cycle_rp,
            Priority::Low => self.cycle_lp,
        }
    }

    /// Number of global slots after which the whole schedule repeats.
    pub fn super_cycle(&self) -> u32 {
        self.cycle_lp
    }

    /// Nominal logical frame of a class: `r_c * T_s`.
    pub fn class_frame(&self, class: Priority) -> Ticks {
        self.slot_len() * self.cycle(class) as u64
    }

    /// Offset from slot start to the beginning of the sensing window of a
    /// device on `minislot` (1-based). Mini-slot 1 transmits at slot start
    /// and mini-slot 2 senses mini-slot 1, so both windows open at zero.
    pub fn sensing_offset(&self, minislot: u32) -> Ticks {
        self.minislot_len * minislot.saturating_sub(2) as u64
    }

    /// Offset from slot start to the first tick of transmission from `minislot`.
    pub fn tx_offset(&self, minislot: u32) -> Ticks {
        self.minislot_len * (minislot - 1) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub u32);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Mean packet arrival rate in packets per second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArrivalRate(pub f64);

impl ArrivalRate {
    pub fn per_second(self) -> f64 {
        self.0
    }

    pub fn per_tick(self) -> f64 {
        self.0 / TICKS_PER_SECOND
    }

    /// Expected arrivals during `span`.
    pub fn expected_in(self, span: Ticks) -> f64 {
        self.per_tick() * span.as_f64()
    }
}

/// Shape of a device's arrival process. The mean rate lives on the device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrafficProcess {
    /// Exponential inter-arrivals with the device rate.
    Poisson,
    /// At most one arrival per logical frame, with probability `p`, at a
    /// uniformly distributed phase inside the frame.
    BernoulliPerFrame {
        p: f64,
    },
    Deterministic {
        period: Ticks,
        phase: Ticks,
    },
    /// Explicit arrival instants, strictly increasing.
    Trace(Vec<Ticks>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: DeviceId,
    pub priority: Priority,
    pub rate: ArrivalRate,
    pub traffic: TrafficProcess,
}

/// Placement of one device: a slot within its class cycle (0-based) and a
/// mini-slot within that slot (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub device: DeviceId,
    pub slot: u32,
    pub minislot: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub entries: Vec<AssignmentEntry>,
}

impl Assignment {
    pub fn of(&self, device: DeviceId) -> Option<&AssignmentEntry> {
        self.entries.iter().find(|e| e.device == device)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassQos {
    /// Maximum tolerable delay.
    pub delta: Ticks,
    /// Maximum tolerable collision probability.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    pub hp: ClassQos,
    pub rp: ClassQos,
    pub lp: ClassQos,
}

impl QosSpec {
    pub fn class(&self, class: Priority) -> &ClassQos {
        match class {
            Priority::High => &self.hp,
            Priority::Regular => &self.rp,
            Priority::Low => &self.lp,
        }
    }
}

impl Default for QosSpec {
    fn default() -> Self {
        QosSpec {
            hp: ClassQos { delta: Ticks(1_000_000), rho: 0.001 },
            rp: ClassQos { delta: Ticks(10_000_000), rho: 0.01 },
            lp: ClassQos { delta: Ticks(100_000_000), rho: 0.1 },
        }
    }
}

pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunControl {
    pub seed: u64,
    pub horizon_slots: u64,
    pub replications: u32,
    /// Leading fraction of slots excluded from statistics.
    pub warmup_fraction: f64,
}

impl Default for RunControl {
    fn default() -> Self {
        RunControl { seed: 1, horizon_slots: 100_000, replications: 20, warmup_fraction: DEFAULT_WARMUP_FRACTION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: ProtocolParams,
    pub devices: Vec<DeviceSpec>,
    pub assignment: Assignment,
    pub qos: QosSpec,
    pub run: RunControl,
}

impl Scenario {
    pub fn device(&self, id: DeviceId) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| d.id == id)
    }

    /// Logical frame of a device in nominal (full-slot) time.
    pub fn device_frame(&self, device: &DeviceSpec) -> Ticks {
        self.params.class_frame(device.priority)
    }

    /// SHA-256 over the canonical JSON encoding of the scenario content.
    /// Independent of how the scenario file was formatted.
    pub fn identity_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("scenario serialises");
        hex::encode(Sha256::digest(&canonical))
    }

    /// First 12 hex digits of [`Self::identity_hash`].
    pub fn short_id(&self) -> String {
        self.identity_hash()[..12].to_string()
    }

    /// Runs [`validate_scenario`] and returns the scenario only if it has no
    /// hard errors.
    pub fn validated(self) -> Result<(Scenario, ValidationReport), ValidationReport> {
        let report = validate_scenario(&self);
        if report.is_ok() {
            Ok((self, report))
        } else {
            Err(report)
        }
    }
}
