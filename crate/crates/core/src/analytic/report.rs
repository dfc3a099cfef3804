use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::synccs::{RateOccupant, RateSlot};
use super::{
    adf_buffered, adf_no_buffer, adf_to_delay, slot_idle_probability, smsa_solve_buffered, smsa_solve_no_buffer,
    synccs_frame_length_buffered, synccs_frame_length_no_buffer, AnalyticError, AnalyticOptions, MiniSlotLoad,
};
use crate::model::{
    expand_schedule, validate_scenario, DeviceId, GlobalSlotTable, Issue, IssueKind, Priority, Scenario,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct OutcomeDevice {
    pub device: DeviceId,
    pub minislot: u32,
    pub tau: f64,
    pub lambda_eff: f64,
    pub collision_prob: f64,
    pub colliders: f64,
}

/// Solved quantities of one slot, whichever recursion produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub(crate) devices: Vec<OutcomeDevice>,
    pub idle: f64,
    pub shared: bool,
    pub warnings: Vec<String>,
}

/// Routes a slot to the exclusive recursion or, if any mini-slot is shared,
/// to the shared-mini-slot fixed point.
pub(crate) fn solve_slot(
    load: &MiniSlotLoad,
    buffered: bool,
    opts: &AnalyticOptions,
) -> Result<SlotOutcome, AnalyticError> {
    if load.is_exclusive() {
        let adf = if buffered { adf_buffered(load, opts.buffered_prefactor)? } else { adf_no_buffer(load)? };
        let idle = slot_idle_probability(load, buffered, &adf)?;
        let devices = load
            .cells
            .iter()
            .enumerate()
            .filter_map(|(m, c)| c.first().map(|o| (m, o)))
            .map(|(m, o)| OutcomeDevice {
                device: o.device,
                minislot: m as u32 + 1,
                tau: adf.tau[m],
                lambda_eff: adf.lambda_eff[m],
                collision_prob: 0.0,
                colliders: 1.0,
            })
            .collect();
        Ok(SlotOutcome { devices, idle, shared: false, warnings: Vec::new() })
    } else {
        let sol = if buffered {
            smsa_solve_buffered(load, &opts.solver, opts.collision_rate)?
        } else {
            smsa_solve_no_buffer(load, &opts.solver, opts.collision_rate)?
        };
        let idle = sol.idle_probability()?;
        let devices = sol
            .devices
            .iter()
            .map(|d| OutcomeDevice {
                device: d.device,
                minislot: d.minislot,
                tau: d.tau,
                lambda_eff: d.lambda_eff,
                collision_prob: d.collision_prob,
                colliders: d.colliders,
            })
            .collect();
        Ok(SlotOutcome { devices, idle, shared: true, warnings: sol.warnings })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceAnalytic {
    pub device: DeviceId,
    pub priority: Priority,
    pub slot: u32,
    pub minislot: u32,
    /// Arrivals per logical frame.
    pub lambda_norm: f64,
    /// Access delay in frames, averaged over the device's global slots.
    pub adf: f64,
    /// Access delay in ticks.
    pub access_delay: f64,
    /// Logical frame length used for the conversion, in ticks.
    pub frame: f64,
    pub collision_prob: f64,
    pub colliders: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotAnalytic {
    pub slot: usize,
    pub idle: f64,
    pub throughput: f64,
    pub shared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub scenario_id: String,
    pub buffered: bool,
    pub synccs: bool,
    /// Expected super-cycle length in ticks when idle slots are truncated.
    pub frame_length: Option<f64>,
    pub busy_slots: Option<f64>,
    pub devices: Vec<DeviceAnalytic>,
    pub slots: Vec<SlotAnalytic>,
    pub warnings: Vec<String>,
}

impl AnalyticReport {
    pub fn device(&self, id: DeviceId) -> Option<&DeviceAnalytic> {
        self.devices.iter().find(|d| d.device == id)
    }
}

pub(crate) fn rate_slots(s: &Scenario, table: &GlobalSlotTable) -> Vec<RateSlot> {
    let n = s.params.minislots as usize;
    table
        .slots
        .iter()
        .map(|cells| {
            let mut slot = RateSlot { cells: vec![Vec::new(); n] };
            for (m, id) in cells.devices() {
                let d = s.device(id).expect("validated device");
                slot.cells[m as usize - 1].push(RateOccupant {
                    device: id,
                    rate: d.rate.per_tick(),
                    cycle: s.params.cycle(d.priority),
                });
            }
            slot
        })
        .collect()
}

/// Full analytic evaluation of a scenario.
///
/// Each device's load is normalised to its own class frame `r_c * T_s`, with
/// `T_s` replaced by the expected slot duration when idle slots are
/// truncated. A device occupying several global slots of the super-cycle gets
/// the mean of its per-slot estimates.
pub fn analytic_report(s: &Scenario, opts: &AnalyticOptions) -> Result<AnalyticReport, AnalyticError> {
    let validation = validate_scenario(s);
    if !validation.is_ok() {
        let msgs: Vec<String> = validation.errors.iter().map(|e| e.to_string()).collect();
        return Err(AnalyticError::Invalid(msgs.join("; ")));
    }
    let p = &s.params;
    let table = expand_schedule(s);
    let slots = rate_slots(s, &table);

    let (frame, outcomes) = if p.synccs {
        if p.buffered {
            let rates: Vec<f64> = s.devices.iter().map(|d| d.rate.per_tick()).collect();
            let frame = synccs_frame_length_buffered(p, &rates)?;
            let outcomes = solve_all(&slots, frame.slot_time(), true, opts)?;
            (Some(frame), outcomes)
        } else {
            let (frame, outcomes) = synccs_frame_length_no_buffer(&slots, p, opts)?;
            (Some(frame), outcomes)
        }
    } else {
        (None, solve_all(&slots, p.slot_len().as_f64(), p.buffered, opts)?)
    };
    let slot_time = frame.map(|f| f.slot_time()).unwrap_or(p.slot_len().as_f64());

    #[derive(Default)]
    struct Acc {
        tau: f64,
        q: f64,
        n: f64,
        count: usize,
    }
    let mut acc: BTreeMap<DeviceId, Acc> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut slot_reports = Vec::with_capacity(outcomes.len());
    for (g, o) in outcomes.iter().enumerate() {
        for d in &o.devices {
            let a = acc.entry(d.device).or_default();
            a.tau += d.tau;
            a.q += d.collision_prob;
            a.n += d.colliders;
            a.count += 1;
        }
        warnings.extend(o.warnings.iter().map(|w| format!("global slot {g}: {w}")));
        slot_reports.push(SlotAnalytic { slot: g, idle: o.idle, throughput: 1.0 - o.idle, shared: o.shared });
    }

    let mut devices = Vec::with_capacity(s.devices.len());
    for d in &s.devices {
        let entry = s.assignment.of(d.id).expect("validated assignment");
        let a = acc.get(&d.id).expect("device occupies at least one slot");
        let k = a.count as f64;
        let frame_len = slot_time * p.cycle(d.priority) as f64;
        let adf = a.tau / k;
        devices.push(DeviceAnalytic {
            device: d.id,
            priority: d.priority,
            slot: entry.slot,
            minislot: entry.minislot,
            lambda_norm: d.rate.per_tick() * frame_len,
            adf,
            access_delay: adf_to_delay(adf, frame_len, p.tx_len),
            frame: frame_len,
            collision_prob: a.q / k,
            colliders: a.n / k,
        });
    }

    Ok(AnalyticReport {
        scenario_id: s.identity_hash(),
        buffered: p.buffered,
        synccs: p.synccs,
        frame_length: frame.map(|f| f.length),
        busy_slots: frame.map(|f| f.busy_slots),
        devices,
        slots: slot_reports,
        warnings,
    })
}

fn solve_all(
    slots: &[RateSlot],
    slot_time: f64,
    buffered: bool,
    opts: &AnalyticOptions,
) -> Result<Vec<SlotOutcome>, AnalyticError> {
    slots
        .iter()
        .enumerate()
        .map(|(g, slot)| solve_slot(&slot.normalised(slot_time), buffered, opts).map_err(|e| e.in_slot(g)))
        .collect()
}

/// Soft check that each device's analytic delay stays below its mean
/// inter-arrival time.
pub fn delay_condition_warnings(report: &AnalyticReport, s: &Scenario) -> Vec<Issue> {
    report
        .devices
        .iter()
        .filter_map(|d| {
            let spec = s.device(d.device)?;
            let interval = 1.0 / spec.rate.per_tick();
            (d.access_delay > interval).then(|| {
                Issue::new(
                    IssueKind::DelayBound,
                    format!(
                        "device {}: analytic delay {:.3}us exceeds mean inter-arrival {:.3}us",
                        d.device,
                        d.access_delay / 1e3,
                        interval / 1e3
                    ),
                )
            })
        })
        .collect()
}
