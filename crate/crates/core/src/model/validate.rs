use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::schedule::class_of;
use super::{expand_schedule, Priority, Scenario, TrafficProcess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Geometry,
    CycleOrder,
    CycleDivisibility,
    QosOrder,
    DuplicateDevice,
    InvalidRate,
    InvalidTraffic,
    UnknownDevice,
    MissingAssignment,
    DuplicateAssignment,
    SlotOutOfRange,
    MiniSlotOutOfRange,
    DuplicateCell,
    MixedClassSharing,
    SlotOverload,
    InvalidRun,
    /// Soft: mean inter-arrival time does not exceed the class delay bound.
    RateBound,
    /// Soft: analytic delay exceeds the mean inter-arrival time.
    DelayBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub message: String,
}

impl Issue {
    pub fn new(kind: IssueKind, message: impl Into<String>) -> Issue {
        Issue { kind, message: message.into() }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {}", self.kind, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLoadEntry {
    pub slot: usize,
    /// Expected arrivals per super-cycle of all devices occupying the slot,
    /// `sum(lambda_i) * r_L * T_s`.
    pub load: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
    pub slot_loads: Vec<SlotLoadEntry>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.errors.iter().chain(&self.warnings).any(|i| i.kind == kind)
    }

    fn error(&mut self, kind: IssueKind, message: impl Into<String>) {
        self.errors.push(Issue::new(kind, message));
    }

    fn warn(&mut self, kind: IssueKind, message: impl Into<String>) {
        self.warnings.push(Issue::new(kind, message));
    }

    pub fn max_load(&self) -> f64 {
        self.slot_loads.iter().map(|s| s.load).fold(0.0, f64::max)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "validation: {} error(s), {} warning(s); max slot load {:.6}",
            self.errors.len(),
            self.warnings.len(),
            self.max_load()
        )?;
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Checks geometry, cycles, traffic, assignment exclusivity and the per-slot
/// load condition. The per-device delay condition needs analytic delays and
/// is added separately by the analytic module.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut r = ValidationReport::default();
    let p = &s.params;

    if p.minislots == 0 {
        r.error(IssueKind::Geometry, "n_m must be at least 1");
    }
    if p.minislot_len.0 == 0 || p.tx_len.0 == 0 {
        r.error(IssueKind::Geometry, "T_m and T_x must be positive");
    }
    if p.sensing_len() >= p.tx_len {
        r.error(IssueKind::Geometry, format!("n_m * T_m = {} must be less than T_x = {}", p.sensing_len(), p.tx_len));
    }

    let cycles_valid = p.cycle_hp >= 1 && p.cycle_rp >= 1 && p.cycle_lp >= 1;
    if !cycles_valid {
        r.error(IssueKind::CycleOrder, "assignment cycles must be at least 1 slot");
    } else {
        if !(p.cycle_hp <= p.cycle_rp && p.cycle_rp <= p.cycle_lp) {
            r.error(
                IssueKind::CycleOrder,
                format!("cycles must satisfy r_H <= r_R <= r_L, got {}/{}/{}", p.cycle_hp, p.cycle_rp, p.cycle_lp),
            );
        }
        if !p.cycle_rp.is_multiple_of(p.cycle_hp) || !p.cycle_lp.is_multiple_of(p.cycle_rp) {
            r.error(
                IssueKind::CycleDivisibility,
                format!("r_R must divide by r_H and r_L by r_R, got {}/{}/{}", p.cycle_hp, p.cycle_rp, p.cycle_lp),
            );
        }
    }

    let q = &s.qos;
    if !(q.hp.delta < q.rp.delta && q.rp.delta < q.lp.delta) {
        r.error(IssueKind::QosOrder, "delay bounds must satisfy delta_H < delta_R < delta_L");
    }
    if !(q.hp.rho < q.rp.rho && q.rp.rho < q.lp.rho) {
        r.error(IssueKind::QosOrder, "collision bounds must satisfy rho_H < rho_R < rho_L");
    }
    if [q.hp.rho, q.rp.rho, q.lp.rho].iter().any(|x| !(0.0..=1.0).contains(x)) {
        r.error(IssueKind::QosOrder, "collision bounds must lie in [0, 1]");
    }

    let run = &s.run;
    if run.horizon_slots == 0 || run.replications == 0 {
        r.error(IssueKind::InvalidRun, "horizon_slots and replications must be positive");
    }
    if !(0.0..1.0).contains(&run.warmup_fraction) {
        r.error(IssueKind::InvalidRun, "warmup_fraction must lie in [0, 1)");
    }
    // Scenario files store integers as signed 64-bit values.
    if run.seed > i64::MAX as u64 || run.horizon_slots > i64::MAX as u64 {
        r.error(IssueKind::InvalidRun, "seed and horizon_slots must be below 2^63");
    }

    let mut seen = BTreeSet::new();
    for d in &s.devices {
        if !seen.insert(d.id) {
            r.error(IssueKind::DuplicateDevice, format!("device {} declared twice", d.id));
        }
        let lambda = d.rate.per_second();
        if !(lambda.is_finite() && lambda > 0.0) {
            r.error(IssueKind::InvalidRate, format!("device {}: rate must be positive, got {lambda}", d.id));
            continue;
        }
        let delta = s.qos.class(d.priority).delta;
        if 1.0 / d.rate.per_tick() <= delta.as_f64() {
            r.warn(
                IssueKind::RateBound,
                format!(
                    "device {}: mean inter-arrival {:.3}us does not exceed the {} delay bound {}",
                    d.id,
                    1e-3 / d.rate.per_tick(),
                    d.priority,
                    delta
                ),
            );
        }
        check_traffic(s, d, &mut r);
    }

    let mut entries: BTreeMap<_, usize> = BTreeMap::new();
    for e in &s.assignment.entries {
        *entries.entry(e.device).or_default() += 1;
        let Some(class) = class_of(s, e.device) else {
            r.error(IssueKind::UnknownDevice, format!("assignment names unknown device {}", e.device));
            continue;
        };
        let cycle = p.cycle(class);
        if e.slot >= cycle {
            r.error(
                IssueKind::SlotOutOfRange,
                format!("device {}: slot {} outside its {class} cycle of {cycle} slots", e.device, e.slot),
            );
        }
        if e.minislot == 0 || e.minislot > p.minislots {
            r.error(
                IssueKind::MiniSlotOutOfRange,
                format!("device {}: mini-slot {} outside [1, {}]", e.device, e.minislot, p.minislots),
            );
        }
    }
    for d in &s.devices {
        match entries.get(&d.id).copied().unwrap_or(0) {
            0 => r.error(IssueKind::MissingAssignment, format!("device {} has no assignment", d.id)),
            1 => {}
            n => r.error(IssueKind::DuplicateAssignment, format!("device {} has {n} assignments", d.id)),
        }
    }

    if !cycles_valid {
        return r;
    }
    let table = expand_schedule(s);
    let frame = p.slot_len() * p.super_cycle() as u64;
    let mut reported = BTreeSet::new();
    for (g, cells) in table.slots.iter().enumerate() {
        for (m, occupants) in &cells.cells {
            if occupants.len() < 2 {
                continue;
            }
            let key: Vec<_> = occupants.clone();
            if !reported.insert((key, *m)) {
                continue;
            }
            let names: Vec<String> = occupants.iter().map(|d| d.to_string()).collect();
            if !p.smsa {
                r.error(
                    IssueKind::DuplicateCell,
                    format!(
                        "devices [{}] share mini-slot {m} of global slot {g} but SMsA is disabled (exclusive assignment required)",
                        names.join(", ")
                    ),
                );
            } else {
                let classes: BTreeSet<Priority> = occupants.iter().filter_map(|d| class_of(s, *d)).collect();
                if classes.len() > 1 {
                    r.error(
                        IssueKind::MixedClassSharing,
                        format!(
                            "devices [{}] of different classes share mini-slot {m} of global slot {g}",
                            names.join(", ")
                        ),
                    );
                }
            }
        }
        let load: f64 = cells.devices().filter_map(|(_, id)| s.device(id)).map(|d| d.rate.expected_in(frame)).sum();
        if load >= 1.0 {
            r.error(
                IssueKind::SlotOverload,
                format!("global slot {g}: load {load:.6} arrivals per r_L cycle is not below 1"),
            );
        }
        r.slot_loads.push(SlotLoadEntry { slot: g, load });
    }
    r
}

fn check_traffic(s: &Scenario, d: &super::DeviceSpec, r: &mut ValidationReport) {
    match &d.traffic {
        TrafficProcess::Poisson => {}
        TrafficProcess::BernoulliPerFrame { p } => {
            if !(0.0..=1.0).contains(p) {
                r.error(IssueKind::InvalidTraffic, format!("device {}: Bernoulli p = {p} outside [0, 1]", d.id));
            }
            let implied = d.rate.expected_in(s.device_frame(d));
            if (implied - p).abs() > 1e-9 * implied.max(1e-300) {
                r.error(
                    IssueKind::InvalidTraffic,
                    format!("device {}: Bernoulli p = {p} disagrees with rate * frame = {implied}", d.id),
                );
            }
        }
        TrafficProcess::Deterministic { period, .. } => {
            if period.0 == 0 {
                r.error(IssueKind::InvalidTraffic, format!("device {}: deterministic period must be positive", d.id));
            } else if (d.rate.expected_in(*period) - 1.0).abs() > 1e-6 {
                r.error(
                    IssueKind::InvalidTraffic,
                    format!("device {}: deterministic period {period} disagrees with rate {} /s", d.id, d.rate.0),
                );
            }
        }
        TrafficProcess::Trace(ticks) => {
            if ticks.windows(2).any(|w| w[0] >= w[1]) {
                r.error(IssueKind::InvalidTraffic, format!("device {}: trace ticks must be strictly increasing", d.id));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    pub(crate) fn base() -> Scenario {
        Scenario {
            params: ProtocolParams {
                minislots: 10,
                minislot_len: Ticks::from_micros(9.0).unwrap(),
                tx_len: Ticks::from_micros(100.0).unwrap(),
                cycle_hp: 4,
                cycle_rp: 4,
                cycle_lp: 4,
                synccs: false,
                buffered: false,
                smsa: false,
            },
            devices: vec![DeviceSpec {
                id: DeviceId(0),
                priority: Priority::Low,
                rate: ArrivalRate(1e-3),
                traffic: TrafficProcess::Poisson,
            }],
            assignment: Assignment { entries: vec![AssignmentEntry { device: DeviceId(0), slot: 0, minislot: 1 }] },
            qos: QosSpec::default(),
            run: RunControl::default(),
        }
    }

    #[test]
    fn nine_microsecond_minislots_are_valid() {
        let r = validate_scenario(&base());
        assert!(r.is_ok(), "{r}");
        assert!(r.warnings.is_empty(), "{r}");
    }

    #[test]
    fn geometry_violation_is_hard() {
        let mut s = base();
        s.params.minislot_len = Ticks::from_micros(10.0).unwrap();
        let r = validate_scenario(&s);
        assert!(r.has(IssueKind::Geometry));
        assert!(!r.is_ok());
    }

    #[test]
    fn overload_flagged_per_slot() {
        let mut s = base();
        // T_s = 190us, r_L = 4 -> frame 760us; 1.2 arrivals per frame
        s.devices[0].rate = ArrivalRate(1.2 / 760e-6);
        s.qos.lp.delta = Ticks(1);
        let r = validate_scenario(&s);
        assert!(r.has(IssueKind::SlotOverload));
        assert!((r.slot_loads[0].load - 1.2).abs() < 1e-12);
    }

    #[test]
    fn duplicate_cell_requires_smsa() {
        let mut s = base();
        s.devices.push(DeviceSpec { id: DeviceId(1), ..s.devices[0].clone() });
        s.assignment.entries.push(AssignmentEntry { device: DeviceId(1), slot: 0, minislot: 1 });
        assert!(validate_scenario(&s).has(IssueKind::DuplicateCell));
        s.params.smsa = true;
        assert!(validate_scenario(&s).is_ok());
        s.devices[1].priority = Priority::High;
        s.params.cycle_hp = 2;
        assert!(validate_scenario(&s).has(IssueKind::MixedClassSharing));
    }

    #[test]
    fn cross_class_cells_collide_after_expansion() {
        let mut s = base();
        s.params.cycle_hp = 2;
        s.devices.push(DeviceSpec { id: DeviceId(1), priority: Priority::High, ..s.devices[0].clone() });
        // HP slot 0 recurs at global slots 0 and 2; LP device sits in global slot 2.
        s.assignment.entries[0].slot = 2;
        s.assignment.entries.push(AssignmentEntry { device: DeviceId(1), slot: 0, minislot: 1 });
        assert!(validate_scenario(&s).has(IssueKind::DuplicateCell));
    }

    #[test]
    fn seed_must_fit_a_signed_integer() {
        let mut s = base();
        s.run.seed = i64::MAX as u64;
        assert!(validate_scenario(&s).is_ok());
        s.run.seed += 1;
        assert!(validate_scenario(&s).has(IssueKind::InvalidRun));
    }

    #[test]
    fn cycle_divisibility() {
        let mut s = base();
        s.params.cycle_hp = 3;
        s.params.cycle_rp = 4;
        assert!(validate_scenario(&s).has(IssueKind::CycleDivisibility));
        s.params.cycle_hp = 8;
        assert!(validate_scenario(&s).has(IssueKind::CycleOrder));
    }

    #[test]
    fn vanishing_rate_passes_all_checks() {
        let mut s = base();
        s.devices[0].rate = ArrivalRate(1e-12);
        let r = validate_scenario(&s);
        assert!(r.is_ok());
        assert!(r.max_load() < 1e-15);
    }

    #[test]
    fn assignment_errors() {
        let mut s = base();
        s.assignment.entries[0].minislot = 11;
        assert!(validate_scenario(&s).has(IssueKind::MiniSlotOutOfRange));
        s.assignment.entries[0].minislot = 1;
        s.assignment.entries[0].slot = 4;
        assert!(validate_scenario(&s).has(IssueKind::SlotOutOfRange));
        s.assignment.entries.clear();
        assert!(validate_scenario(&s).has(IssueKind::MissingAssignment));
    }

    #[test]
    fn bernoulli_probability_must_match_rate() {
        let mut s = base();
        let frame = s.params.class_frame(Priority::Low);
        s.devices[0].rate = ArrivalRate(0.1 / (frame.as_f64() * 1e-9));
        s.devices[0].traffic = TrafficProcess::BernoulliPerFrame { p: 0.1 };
        assert!(validate_scenario(&s).is_ok());
        s.devices[0].traffic = TrafficProcess::BernoulliPerFrame { p: 0.2 };
        assert!(validate_scenario(&s).has(IssueKind::InvalidTraffic));
    }
}
