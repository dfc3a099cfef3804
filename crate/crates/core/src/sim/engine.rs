use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::log::{EventKind, EventLog, EventRecord};
use super::queue::{arrival_admission, DeviceState, Packet};
use super::rng::device_stream;
use super::traffic::{Arrivals, LogicalFrame};
use super::SimError;
use crate::model::{expand_schedule, validate_scenario, DeviceId, Scenario, Ticks};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub record_log: bool,
    /// Number of equal batches the measured slots are split into.
    pub batches: u32,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { record_log: true, batches: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SenseOutcome {
    /// Nothing waiting at the device's sensing start.
    NoPacket,
    Transmit,
    /// Had a packet but an earlier mini-slot was already busy.
    Blocked,
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotResolution {
    pub slot: u64,
    pub start: Ticks,
    /// Mini-slot in which transmission began, `None` for an idle slot.
    pub winner: Option<u32>,
    pub transmitters: Vec<DeviceId>,
    pub duration: Ticks,
    pub outcomes: Vec<(DeviceId, u32, SenseOutcome)>,
}

impl SlotResolution {
    pub fn collided(&self) -> bool {
        self.transmitters.len() > 1
    }
}

/// Counters of one device over a window of slots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceTally {
    pub arrivals: u64,
    pub replacements: u64,
    pub transmissions: u64,
    pub collided: u64,
    /// Over successful transmissions.
    pub adf_sum: f64,
    pub adf_sq: f64,
    /// Access delay in ticks, over successful transmissions.
    pub ad_sum: f64,
    pub ad_sq: f64,
}

impl DeviceTally {
    pub fn successes(&self) -> u64 {
        self.transmissions - self.collided
    }

    fn add(&mut self, o: &DeviceTally) {
        self.arrivals += o.arrivals;
        self.replacements += o.replacements;
        self.transmissions += o.transmissions;
        self.collided += o.collided;
        self.adf_sum += o.adf_sum;
        self.adf_sq += o.adf_sq;
        self.ad_sum += o.ad_sum;
        self.ad_sq += o.ad_sq;
    }
}

/// Counters of one global slot of the super-cycle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTally {
    pub occurrences: u64,
    pub idle: u64,
    pub collisions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub devices: Vec<DeviceTally>,
    pub slots: Vec<SlotTally>,
    pub slot_count: u64,
    /// Wall-clock ticks covered.
    pub elapsed: u64,
}

impl Tally {
    pub fn new(devices: usize, slots: usize) -> Tally {
        Tally {
            devices: vec![DeviceTally::default(); devices],
            slots: vec![SlotTally::default(); slots],
            slot_count: 0,
            elapsed: 0,
        }
    }

    pub fn add(&mut self, o: &Tally) {
        for (a, b) in self.devices.iter_mut().zip(&o.devices) {
            a.add(b);
        }
        for (a, b) in self.slots.iter_mut().zip(&o.slots) {
            a.occurrences += b.occurrences;
            a.idle += b.idle;
            a.collisions += b.collisions;
        }
        self.slot_count += o.slot_count;
        self.elapsed += o.elapsed;
    }
}

/// Whole-run packet accounting of one device, warm-up included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceTotals {
    pub arrivals: u64,
    pub successes: u64,
    pub collided: u64,
    pub replaced: u64,
    pub in_system: u64,
}

impl DeviceTotals {
    pub fn balanced(&self) -> bool {
        self.arrivals == self.successes + self.collided + self.replaced + self.in_system
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCounters {
    pub seed: u64,
    /// Device order used by every per-device vector.
    pub device_ids: Vec<DeviceId>,
    pub horizon_slots: u64,
    pub warmup_slots: u64,
    /// Slots per super-cycle.
    pub super_cycle: u32,
    /// Measured slots split into consecutive batches.
    pub batches: Vec<Tally>,
    pub totals: Vec<DeviceTotals>,
    /// Slots in which two or more transmissions overlapped, whole run.
    pub collision_slots: u64,
    pub elapsed: Ticks,
}

impl RawCounters {
    /// Sum over all batches.
    pub fn measured(&self) -> Tally {
        let mut t = Tally::new(self.device_ids.len(), self.super_cycle as usize);
        for b in &self.batches {
            t.add(b);
        }
        t
    }

    pub fn device_index(&self, id: DeviceId) -> Option<usize> {
        self.device_ids.iter().position(|d| *d == id)
    }
}

struct Layout {
    /// Per global slot: (mini-slot, occupant device indices), ascending.
    slots: Vec<Vec<(u32, Vec<usize>)>>,
}

struct Engine<'a> {
    s: &'a Scenario,
    ids: Vec<DeviceId>,
    states: Vec<DeviceState>,
    occurrence: Vec<u64>,
    next_packet: Vec<u64>,
    streams: Vec<Arrivals>,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    pending: VecDeque<EventRecord>,
    log: Option<EventLog>,
    slot: u64,
    measuring: bool,
    batch: usize,
    batches: Vec<Tally>,
    totals: Vec<DeviceTotals>,
}

impl Engine<'_> {
    fn emit(&mut self, r: EventRecord) {
        if let Some(log) = &mut self.log {
            log.push(r);
        }
    }

    fn emit_pending(&mut self, bound: u64, inclusive: bool) {
        while let Some(r) = self.pending.front() {
            if r.tick < bound || (inclusive && r.tick == bound) {
                let r = self.pending.pop_front().expect("front exists");
                self.emit(r);
            } else {
                break;
            }
        }
    }

    /// Admits every arrival strictly before `t`.
    fn flush_until(&mut self, t: Ticks) {
        while let Some(&Reverse((a, d))) = self.heap.peek() {
            if a >= t.0 {
                break;
            }
            self.heap.pop();
            if let Some(next) = self.streams[d].next() {
                self.heap.push(Reverse((next.0, d)));
            }
            self.emit_pending(a, true);
            self.admit(a, d);
        }
        self.emit_pending(t.0, false);
    }

    fn admit(&mut self, tick: u64, d: usize) {
        let id = self.next_packet[d];
        self.next_packet[d] += 1;
        let packet = Packet::new(id, Ticks(tick), self.occurrence[d]);
        let device = Some(self.ids[d]);
        let slot = self.slot;
        self.emit(EventRecord { tick, kind: EventKind::Arrival, device, slot, packet: Some(id) });
        self.totals[d].arrivals += 1;
        if self.measuring {
            self.batches[self.batch].devices[d].arrivals += 1;
        }
        if let Some(old) = arrival_admission(&mut self.states[d], packet, self.s.params.buffered) {
            self.emit(EventRecord { tick, kind: EventKind::Replaced, device, slot, packet: Some(old.id) });
            self.totals[d].replaced += 1;
            if self.measuring {
                self.batches[self.batch].devices[d].replacements += 1;
            }
        }
    }
}

fn layout(s: &Scenario) -> (Vec<DeviceId>, Layout) {
    let ids: Vec<DeviceId> = s.devices.iter().map(|d| d.id).collect();
    let index: HashMap<DeviceId, usize> = ids.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let table = expand_schedule(s);
    let slots = table
        .slots
        .iter()
        .map(|cells| cells.cells.iter().map(|(m, devs)| (*m, devs.iter().map(|d| index[d]).collect())).collect())
        .collect();
    (ids, Layout { slots })
}

/// Runs the scenario once with its own seed.
pub fn run(s: &Scenario, opts: &RunOptions) -> Result<(EventLog, RawCounters), SimError> {
    run_seeded(s, s.run.seed, opts, None)
}

/// Runs the scenario with `seed`, calling `observer` after every slot.
pub fn run_seeded(
    s: &Scenario,
    seed: u64,
    opts: &RunOptions,
    mut observer: Option<&mut dyn FnMut(&SlotResolution)>,
) -> Result<(EventLog, RawCounters), SimError> {
    let report = validate_scenario(s);
    if !report.is_ok() {
        return Err(SimError::Invalid(report.to_string()));
    }
    let p = &s.params;
    let (ids, layout) = layout(s);
    let n = ids.len();
    let n_global = layout.slots.len();
    let horizon = s.run.horizon_slots;
    let warmup = ((horizon as f64) * s.run.warmup_fraction).floor() as u64;
    let measured_slots = horizon - warmup;
    let n_batches = opts.batches.max(1) as usize;
    let slot_len = p.slot_len();

    let mut streams = Vec::with_capacity(n);
    let mut heap = BinaryHeap::new();
    for (i, d) in s.devices.iter().enumerate() {
        let entry = s.assignment.of(d.id).expect("validated assignment");
        let frame = LogicalFrame { offset: slot_len * entry.slot as u64, period: p.class_frame(d.priority) };
        let mut stream = Arrivals::new(&d.traffic, d.rate, frame, device_stream(seed, d.id));
        if let Some(t) = stream.next() {
            heap.push(Reverse((t.0, i)));
        }
        streams.push(stream);
    }

    let mut e = Engine {
        s,
        ids,
        states: vec![DeviceState::default(); n],
        occurrence: vec![0; n],
        next_packet: vec![0; n],
        streams,
        heap,
        pending: VecDeque::new(),
        log: opts.record_log.then(EventLog::default),
        slot: 0,
        measuring: false,
        batch: 0,
        batches: vec![Tally::new(n, n_global); n_batches],
        totals: vec![DeviceTotals::default(); n],
    };

    let mut clock = Ticks::ZERO;
    let mut collision_slots = 0u64;
    let mut transmitters: Vec<(usize, Packet, u64)> = Vec::new();
    let mut outcomes: Vec<(DeviceId, u32, SenseOutcome)> = Vec::new();
    let observing = observer.is_some();

    for k in 0..horizon {
        e.slot = k;
        e.measuring = k >= warmup;
        if e.measuring {
            e.batch = (((k - warmup) as u128 * n_batches as u128) / measured_slots as u128) as usize;
        }
        let t0 = clock;
        e.emit(EventRecord { tick: t0.0, kind: EventKind::SlotStart, device: None, slot: k, packet: None });

        let g = (k % n_global as u64) as usize;
        let mut winner = None;
        transmitters.clear();
        outcomes.clear();
        for (m, devs) in &layout.slots[g] {
            let m = *m;
            e.flush_until(t0 + p.sensing_offset(m));
            let start = t0 + p.tx_offset(m);
            for &d in devs {
                let o = e.occurrence[d];
                e.occurrence[d] += 1;
                for pkt in e.states[d].queue.iter_mut().rev() {
                    if pkt.first_start.is_some() {
                        break;
                    }
                    pkt.first_start = Some(start);
                }
                let outcome = if e.states[d].is_empty() {
                    SenseOutcome::NoPacket
                } else if winner.is_none() {
                    let pkt = e.states[d].take_head().expect("non-empty queue");
                    transmitters.push((d, pkt, o));
                    SenseOutcome::Transmit
                } else {
                    SenseOutcome::Blocked
                };
                if observing {
                    outcomes.push((e.ids[d], m, outcome));
                }
            }
            if winner.is_none() && !transmitters.is_empty() {
                winner = Some(m);
                // queued now so later arrivals in this slot are logged after them
                let tx_start = t0 + p.tx_offset(m);
                let tx_end = tx_start + p.tx_len;
                for (d, pkt, _) in &transmitters {
                    e.pending.push_back(EventRecord {
                        tick: tx_start.0,
                        kind: EventKind::TxStart,
                        device: Some(e.ids[*d]),
                        slot: k,
                        packet: Some(pkt.id),
                    });
                }
                let kind = if transmitters.len() > 1 { EventKind::Collision } else { EventKind::Success };
                for (d, pkt, _) in &transmitters {
                    e.pending.push_back(EventRecord {
                        tick: tx_end.0,
                        kind,
                        device: Some(e.ids[*d]),
                        slot: k,
                        packet: Some(pkt.id),
                    });
                }
            }
        }

        let busy = winner.is_some();
        let collided = transmitters.len() > 1;
        if let Some(m) = winner {
            if collided && !p.smsa {
                return Err(SimError::Invariant(format!(
                    "slot {k}: {} devices transmitted without shared mini-slots",
                    transmitters.len()
                )));
            }
            let tx_end = t0 + p.tx_offset(m) + p.tx_len;
            for (d, pkt, o) in &transmitters {
                let d = *d;
                if collided {
                    e.totals[d].collided += 1;
                } else {
                    e.totals[d].successes += 1;
                }
                if e.measuring {
                    let t = &mut e.batches[e.batch].devices[d];
                    t.transmissions += 1;
                    if collided {
                        t.collided += 1;
                    } else {
                        let adf = (o - pkt.first_usable + 1) as f64;
                        let ad = (tx_end - pkt.first_start.expect("stamped at its first occurrence")).as_f64();
                        t.adf_sum += adf;
                        t.adf_sq += adf * adf;
                        t.ad_sum += ad;
                        t.ad_sq += ad * ad;
                    }
                }
            }
            if collided {
                collision_slots += 1;
            }
        }

        let duration = if busy || !p.synccs { slot_len } else { p.sensing_len() };
        let end = t0 + duration;
        e.flush_until(end);
        clock = end;

        if e.measuring {
            let b = &mut e.batches[e.batch];
            b.slot_count += 1;
            b.elapsed += duration.0;
            let st = &mut b.slots[g];
            st.occurrences += 1;
            st.idle += u64::from(!busy);
            st.collisions += u64::from(collided);
        }
        if let Some(obs) = observer.as_mut() {
            obs(&SlotResolution {
                slot: k,
                start: t0,
                winner,
                transmitters: transmitters.iter().map(|(d, _, _)| e.ids[*d]).collect(),
                duration,
                outcomes: outcomes.clone(),
            });
        }
    }

    for (d, t) in e.totals.iter_mut().enumerate() {
        t.in_system = e.states[d].len() as u64;
        if !t.balanced() {
            return Err(SimError::Invariant(format!("device {}: packet accounting does not balance: {t:?}", e.ids[d])));
        }
    }

    let counters = RawCounters {
        seed,
        device_ids: e.ids,
        horizon_slots: horizon,
        warmup_slots: warmup,
        super_cycle: n_global as u32,
        batches: e.batches,
        totals: e.totals,
        collision_slots,
        elapsed: clock,
    };
    Ok((e.log.unwrap_or_default(), counters))
}

/// Runs `s.run.replications` independent replications in parallel, with
/// seeds `seed, seed + 1, ...`, without event logs. Results are in
/// replication order.
pub fn run_replications(s: &Scenario, batches: u32) -> Result<Vec<RawCounters>, SimError> {
    let opts = RunOptions { record_log: false, batches };
    (0..s.run.replications.max(1) as u64)
        .into_par_iter()
        .map(|r| run_seeded(s, s.run.seed.wrapping_add(r), &opts, None).map(|(_, c)| c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    pub(crate) fn scenario(
        devices: Vec<(u32, u32, u32, TrafficProcess, f64)>,
        synccs: bool,
        buffered: bool,
        smsa: bool,
    ) -> Scenario {
        let params = ProtocolParams {
            minislots: 4,
            minislot_len: Ticks(10_000),
            tx_len: Ticks(100_000),
            cycle_hp: 1,
            cycle_rp: 1,
            cycle_lp: 1,
            synccs,
            buffered,
            smsa,
        };
        let mut specs = Vec::new();
        let mut entries = Vec::new();
        for (id, slot, m, traffic, rate) in devices {
            specs.push(DeviceSpec { id: DeviceId(id), priority: Priority::Low, rate: ArrivalRate(rate), traffic });
            entries.push(AssignmentEntry { device: DeviceId(id), slot, minislot: m });
        }
        Scenario {
            params,
            devices: specs,
            assignment: Assignment { entries },
            qos: QosSpec::default(),
            run: RunControl { seed: 3, horizon_slots: 10, replications: 1, warmup_fraction: 0.0 },
        }
    }

    fn trace(t: &[u64]) -> TrafficProcess {
        TrafficProcess::Trace(t.iter().map(|x| Ticks(*x)).collect())
    }

    // slot length 140 us, mini-slot 2 senses from 0, mini-slot 3 from 10 us
    #[test]
    fn uncontended_packet_uses_next_occurrence() {
        let s = scenario(vec![(0, 0, 1, trace(&[70_000]), 1.0)], false, false, false);
        let (log, c) = run(&s, &RunOptions::default()).unwrap();
        let tx: Vec<_> = log.records.iter().filter(|r| r.kind == EventKind::TxStart).collect();
        assert_eq!(tx.len(), 1);
        assert_eq!(tx[0].tick, 140_000);
        let t = &c.measured().devices[0];
        assert_eq!(t.adf_sum, 1.0);
        assert_eq!(t.ad_sum, 100_000.0);
    }

    #[test]
    fn blocked_packet_waits_one_frame() {
        let s = scenario(vec![(0, 0, 1, trace(&[1_000]), 1.0), (1, 0, 2, trace(&[2_000]), 1.0)], false, false, false);
        let (log, c) = run(&s, &RunOptions::default()).unwrap();
        let m = c.measured();
        assert_eq!(m.devices[0].adf_sum, 1.0);
        assert_eq!(m.devices[1].adf_sum, 2.0);
        // blocked in slot 1, transmits from mini-slot 2 of slot 2
        let b = log.records.iter().find(|r| r.kind == EventKind::TxStart && r.device == Some(DeviceId(1))).unwrap();
        assert_eq!(b.tick, 2 * 140_000 + 10_000);
        assert_eq!(m.devices[1].ad_sum, (140_000 + 100_000) as f64);
    }

    #[test]
    fn own_minislot_arrival_counts_from_next_cycle() {
        // mini-slot 3 senses [10, 20) us; arrival at 15 us misses slot 0
        let s = scenario(vec![(0, 0, 3, trace(&[15_000]), 1.0)], false, false, false);
        let (log, c) = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(c.measured().devices[0].adf_sum, 1.0);
        let tx = log.records.iter().find(|r| r.kind == EventKind::TxStart).unwrap();
        assert_eq!(tx.tick, 140_000 + 20_000);
    }

    #[test]
    fn arrival_at_sensing_start_is_not_usable() {
        let s = scenario(vec![(0, 0, 3, trace(&[10_000]), 1.0)], false, false, false);
        let (log, _) = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(log.records.iter().find(|r| r.kind == EventKind::TxStart).unwrap().slot, 1);
        let s = scenario(vec![(0, 0, 3, trace(&[9_999]), 1.0)], false, false, false);
        let (log, _) = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(log.records.iter().find(|r| r.kind == EventKind::TxStart).unwrap().slot, 0);
    }

    #[test]
    fn synccs_truncates_idle_slots() {
        let s = scenario(vec![(0, 0, 1, trace(&[20_000]), 1.0)], true, false, false);
        let mut durations = Vec::new();
        let mut obs = |r: &SlotResolution| durations.push(r.duration.0);
        run_seeded(&s, 1, &RunOptions::default(), Some(&mut obs)).unwrap();
        assert_eq!(durations[0], 40_000);
        assert_eq!(durations[1], 140_000);
        assert!(durations[2..].iter().all(|d| *d == 40_000));
    }

    #[test]
    fn shared_minislot_collides() {
        let s = scenario(vec![(0, 0, 2, trace(&[100]), 1.0), (1, 0, 2, trace(&[200]), 1.0)], false, false, true);
        let (log, c) = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(log.count(EventKind::Collision), 2);
        assert_eq!(c.collision_slots, 1);
        assert_eq!(c.totals[0].collided, 1);
        assert_eq!(c.measured().devices[0].adf_sum, 0.0);
    }

    #[test]
    fn no_buffer_replacement_and_buffered_queueing() {
        let arrivals = trace(&[20_000, 30_000]);
        let s = scenario(vec![(0, 0, 1, arrivals.clone(), 1.0)], false, false, false);
        let (log, c) = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(log.count(EventKind::Replaced), 1);
        assert_eq!(c.totals[0].successes, 1);
        let s = scenario(vec![(0, 0, 1, arrivals, 1.0)], false, true, false);
        let (log, c) = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(log.count(EventKind::Replaced), 0);
        assert_eq!(c.totals[0].successes, 2);
        // second packet was usable in slot 1 as well, but queued behind the first
        assert_eq!(c.measured().devices[0].adf_sum, 3.0);
    }

    #[test]
    fn log_ticks_non_decreasing_with_poisson() {
        let mut s = scenario(
            vec![
                (0, 0, 1, TrafficProcess::Poisson, 2_000.0),
                (1, 0, 2, TrafficProcess::Poisson, 3_000.0),
                (2, 0, 3, TrafficProcess::Poisson, 1_000.0),
            ],
            true,
            false,
            false,
        );
        s.run.horizon_slots = 5_000;
        let (log, c) = run(&s, &RunOptions::default()).unwrap();
        assert!(log.records.windows(2).all(|w| w[0].tick <= w[1].tick));
        assert_eq!(c.collision_slots, 0);
        assert!(c.totals.iter().all(|t| t.balanced()));
    }
}
