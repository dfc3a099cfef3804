//! Expected frame length when idle slots are cut short after their last
//! mini-slot.

use serde::{Deserialize, Serialize};

use super::report::{solve_slot, SlotOutcome};
use super::{AnalyticError, AnalyticOptions, MiniSlotLoad, Occupant};
use crate::model::{DeviceId, ProtocolParams};

/// A slot occupant with its raw rate, for loads that must be re-normalised as
/// the expected slot duration changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateOccupant {
    pub device: DeviceId,
    /// Arrivals per tick.
    pub rate: f64,
    /// Slots per assignment cycle of the device's class.
    pub cycle: u32,
}

/// Per-mini-slot occupants of one global slot (index `m - 1`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateSlot {
    pub cells: Vec<Vec<RateOccupant>>,
}

impl RateSlot {
    /// Per-frame loads when each slot lasts `slot_time` ticks on average.
    pub fn normalised(&self, slot_time: f64) -> MiniSlotLoad {
        MiniSlotLoad {
            cells: self
                .cells
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|o| Occupant { device: o.device, lambda_norm: o.rate * o.cycle as f64 * slot_time })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Expected length of an `n_s`-slot frame and expected busy slots in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameLength {
    /// Ticks (fractional: an expectation).
    pub length: f64,
    pub busy_slots: f64,
    pub slots: u32,
    pub iterations: u32,
}

impl FrameLength {
    pub fn slot_time(&self) -> f64 {
        self.length / self.slots as f64
    }
}

/// Closed form with buffers: `n_s n_m T_m / (1 - sum(lambda) T_x)`, where the
/// frame is the `r_L` super-cycle and `rates` holds each device once, in
/// arrivals per tick.
pub fn synccs_frame_length_buffered(params: &ProtocolParams, rates: &[f64]) -> Result<FrameLength, AnalyticError> {
    let slots = params.super_cycle();
    let total: f64 = rates.iter().sum();
    let denominator = 1.0 - total * params.tx_len.as_f64();
    if denominator <= 0.0 {
        return Err(AnalyticError::Overload { minislot: 0, denominator });
    }
    let length = slots as f64 * params.sensing_len().as_f64() / denominator;
    Ok(FrameLength { length, busy_slots: length * total, slots, iterations: 0 })
}

/// Fixed point without buffers. The busy-slot count depends on effective
/// rates, which depend on delays, which depend on the frame length; the loop
/// iterates the frame length with damping until its relative change drops
/// below `tol`.
pub fn synccs_frame_length_no_buffer(
    slots: &[RateSlot],
    params: &ProtocolParams,
    opts: &AnalyticOptions,
) -> Result<(FrameLength, Vec<SlotOutcome>), AnalyticError> {
    let n_s = params.super_cycle();
    let idle_frame = n_s as f64 * params.sensing_len().as_f64();
    let tx = params.tx_len.as_f64();
    let solver = &opts.solver;

    let evaluate = |length: f64| -> Result<(f64, Vec<SlotOutcome>), AnalyticError> {
        let slot_time = length / n_s as f64;
        let mut busy = 0.0;
        let mut outcomes = Vec::with_capacity(slots.len());
        for (g, slot) in slots.iter().enumerate() {
            let outcome = solve_slot(&slot.normalised(slot_time), false, opts).map_err(|e| e.in_slot(g))?;
            busy += 1.0 - outcome.idle;
            outcomes.push(outcome);
        }
        Ok((busy, outcomes))
    };

    let mut length = idle_frame;
    for iteration in 1..=solver.max_iter {
        let (busy, outcomes) = evaluate(length)?;
        let target = idle_frame + busy * tx;
        let change = (target - length).abs() / length;
        if change < solver.tol {
            let (busy, outcomes) = if target == length { (busy, outcomes) } else { evaluate(target)? };
            let frame = FrameLength { length: target, busy_slots: busy, slots: n_s, iterations: iteration };
            return Ok((frame, outcomes));
        }
        length = (1.0 - solver.damping) * length + solver.damping * target;
    }
    let (busy, _) = evaluate(length)?;
    let residual = ((idle_frame + busy * tx) - length).abs() / length;
    Err(AnalyticError::NonConvergence { iterations: solver.max_iter, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ticks;

    fn params(slots: u32, minislots: u32, buffered: bool) -> ProtocolParams {
        ProtocolParams {
            minislots,
            minislot_len: Ticks(9_000),
            tx_len: Ticks(100_000),
            cycle_hp: slots,
            cycle_rp: slots,
            cycle_lp: slots,
            synccs: true,
            buffered,
            smsa: false,
        }
    }

    #[test]
    fn buffered_closed_form_reference() {
        // sum(lambda) = 0.002 per us
        let p = params(10, 5, true);
        let rates = vec![0.002e-3 / 10.0; 10];
        let f = synccs_frame_length_buffered(&p, &rates).unwrap();
        assert!((f.length - 562_500.0).abs() < 1e-6);
        assert!((f.busy_slots - 1.125).abs() < 1e-12);
    }

    #[test]
    fn zero_traffic_is_all_idle() {
        let p = params(10, 5, true);
        let f = synccs_frame_length_buffered(&p, &[]).unwrap();
        assert_eq!(f.length, 450_000.0);
        let empty = vec![RateSlot { cells: vec![Vec::new(); 5] }; 10];
        let (f, _) = synccs_frame_length_no_buffer(&empty, &p, &AnalyticOptions::default()).unwrap();
        assert_eq!(f.length, 450_000.0);
        assert_eq!(f.busy_slots, 0.0);
    }

    #[test]
    fn pole_is_an_error() {
        let p = params(10, 5, true);
        let eps = 1e-12;
        assert!(synccs_frame_length_buffered(&p, &[(1.0 + eps) / 100_000.0]).is_err());
        let near = synccs_frame_length_buffered(&p, &[(1.0 - 1e-9) / 100_000.0]).unwrap();
        assert!(near.length > 1e14);
    }

    fn one_device_slots(rate: f64) -> Vec<RateSlot> {
        let mut slots = vec![RateSlot { cells: vec![Vec::new(); 5] }; 10];
        slots[3].cells[0].push(RateOccupant { device: DeviceId(0), rate, cycle: 10 });
        slots[7].cells[1].push(RateOccupant { device: DeviceId(1), rate, cycle: 10 });
        slots
    }

    #[test]
    fn no_buffer_fixed_point_is_self_consistent() {
        let p = params(10, 5, false);
        let opts = AnalyticOptions::default();
        let (f, outcomes) = synccs_frame_length_no_buffer(&one_device_slots(2e-7), &p, &opts).unwrap();
        // frame equation and busy-slot balance at the returned point
        let residual = (f.length - (450_000.0 + f.busy_slots * 100_000.0)).abs() / f.length;
        assert!(residual < 10.0 * opts.solver.tol, "{residual}");
        let transmissions: f64 = outcomes.iter().flat_map(|o| o.devices.iter()).map(|d| d.lambda_eff).sum();
        assert!((transmissions - f.busy_slots).abs() < 1e-12);
    }

    #[test]
    fn no_buffer_approaches_buffered_at_low_load() {
        let p = params(10, 5, false);
        let rate = 1e-10;
        let (nb, _) = synccs_frame_length_no_buffer(&one_device_slots(rate), &p, &AnalyticOptions::default()).unwrap();
        let b = synccs_frame_length_buffered(&p, &[rate, rate]).unwrap();
        assert!((nb.length - b.length).abs() / b.length < 1e-9);
    }
}
