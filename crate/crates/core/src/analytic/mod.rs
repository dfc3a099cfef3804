//! Closed-form and recursive performance estimates.
//!
//! Every recursion works on dimensionless per-frame arrival expectations
//! (`lambda_norm = lambda * T_f`). Conversion to time happens only in
//! [`adf_to_delay`] and in the report builder.

mod adf;
mod report;
mod smsa;
mod synccs;

pub use adf::{adf_buffered, adf_no_buffer, adf_step, slot_idle_probability};
pub use report::{analytic_report, delay_condition_warnings, AnalyticReport, DeviceAnalytic, SlotAnalytic};
pub use smsa::{smsa_solve_buffered, smsa_solve_no_buffer, SmsaDevice, SmsaSolution};
pub use synccs::{synccs_frame_length_buffered, synccs_frame_length_no_buffer, FrameLength, RateOccupant, RateSlot};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeviceId, Ticks};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error(
        "recursion leaves its validity region at mini-slot {minislot}: denominator {denominator:.6e} is not positive"
    )]
    Overload { minislot: u32, denominator: f64 },
    #[error("slot loads are not exclusive: mini-slot {minislot} has {count} occupants")]
    NotExclusive { minislot: u32, count: usize },
    #[error("fixed point did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: u32, residual: f64 },
    #[error("idle probability {value:.6} is negative; the slot is overloaded")]
    NegativeIdle { value: f64 },
    #[error("global slot {slot}: {source}")]
    InSlot {
        slot: usize,
        #[source]
        source: Box<AnalyticError>,
    },
    #[error("scenario is not valid: {0}")]
    Invalid(String),
}

impl AnalyticError {
    fn in_slot(self, slot: usize) -> AnalyticError {
        AnalyticError::InSlot { slot, source: Box::new(self) }
    }
}

/// Prefactor of the buffered recursion for mini-slot `m + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferedPrefactor {
    /// `(1 - g_m) / (1 - g_{m+1})`: the denominator carries the rate of the
    /// device whose delay is being computed. Agrees with the shared-mini-slot
    /// buffered recursion when every mini-slot is a singleton.
    #[default]
    OwnRate,
    /// `(1 - g_m) / (1 - g_m - x_m)`: the denominator carries the rate of the
    /// device on the sensed mini-slot `m`.
    SensedRate,
}

/// Which rate enters the collision-probability product over partners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionRate {
    /// Each factor uses the partner's rate `lambda_j`.
    #[default]
    Partner,
    /// Each factor uses the device's own rate `lambda_i`, as printed.
    Own,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: u32,
    /// Weight of the new iterate in `x <- (1 - d) x + d f(x)`.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, max_iter: 10_000, damping: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalyticOptions {
    pub solver: SolverOptions,
    pub buffered_prefactor: BufferedPrefactor,
    pub collision_rate: CollisionRate,
}

/// Ratio `lambda_i / (cumulative rate up to the mini-slot)` above which the
/// equal-delay condition for buffered shared mini-slots is reported as not
/// holding.
pub const SHARED_RATE_RATIO_LIMIT: f64 = 0.1;

/// One device on one mini-slot with its per-frame arrival expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occupant {
    pub device: DeviceId,
    pub lambda_norm: f64,
}

/// Per-mini-slot occupants of one slot; index `m - 1` holds mini-slot `m`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MiniSlotLoad {
    pub cells: Vec<Vec<Occupant>>,
}

impl MiniSlotLoad {
    /// One device per mini-slot, ids counting from zero.
    pub fn exclusive(rates: &[f64]) -> MiniSlotLoad {
        MiniSlotLoad {
            cells: rates
                .iter()
                .enumerate()
                .map(|(i, &x)| vec![Occupant { device: DeviceId(i as u32), lambda_norm: x }])
                .collect(),
        }
    }

    pub fn empty(minislots: usize) -> MiniSlotLoad {
        MiniSlotLoad { cells: vec![Vec::new(); minislots] }
    }

    pub fn minislots(&self) -> usize {
        self.cells.len()
    }

    pub fn is_exclusive(&self) -> bool {
        self.cells.iter().all(|c| c.len() <= 1)
    }

    /// Sum of per-mini-slot rates; rates of empty mini-slots are zero.
    fn rate(&self, m: usize) -> f64 {
        self.cells[m].iter().map(|o| o.lambda_norm).sum()
    }

    pub fn total(&self) -> f64 {
        (0..self.cells.len()).map(|m| self.rate(m)).sum()
    }

    fn check_exclusive(&self) -> Result<(), AnalyticError> {
        for (m, cell) in self.cells.iter().enumerate() {
            if cell.len() > 1 {
                return Err(AnalyticError::NotExclusive { minislot: m as u32 + 1, count: cell.len() });
            }
        }
        Ok(())
    }
}

/// Per-mini-slot delay estimates for an exclusive slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfVector {
    /// Average access delay in frames.
    pub tau: Vec<f64>,
    /// Per-frame rate that actually reaches the channel (`lambda' * T_f`
    /// without buffers, the raw rate with buffers).
    pub lambda_eff: Vec<f64>,
    /// Prefix sums of `lambda_eff`.
    pub gamma: Vec<f64>,
}

/// Arrival rate net of packets lost to replacement, `x / (1 + x (tau - 1/2))`.
pub fn effective_rate(lambda_norm: f64, tau: f64) -> f64 {
    lambda_norm / (1.0 + lambda_norm * (tau - 0.5))
}

/// Access delay from a frame count: `(tau - 1) * T_f + T_x`.
pub fn adf_to_delay(tau: f64, frame: f64, tx_len: Ticks) -> f64 {
    (tau - 1.0) * frame + tx_len.as_f64()
}
