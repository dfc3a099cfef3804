use super::{Priority, Scenario};
use crate::model::DeviceId;

/// Occupants of one global slot, grouped by mini-slot in ascending order.
/// Only occupied mini-slots are listed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotCells {
    pub cells: Vec<(u32, Vec<DeviceId>)>,
}

impl SlotCells {
    pub fn occupants(&self, minislot: u32) -> &[DeviceId] {
        self.cells.iter().find(|(m, _)| *m == minislot).map(|(_, d)| d.as_slice()).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn occupant_count(&self) -> usize {
        self.cells.iter().map(|(_, d)| d.len()).sum()
    }

    pub fn devices(&self) -> impl Iterator<Item = (u32, DeviceId)> + '_ {
        self.cells.iter().flat_map(|(m, d)| d.iter().map(move |id| (*m, *id)))
    }

    pub fn is_shared(&self) -> bool {
        self.cells.iter().any(|(_, d)| d.len() > 1)
    }

    fn insert(&mut self, minislot: u32, device: DeviceId) {
        match self.cells.binary_search_by_key(&minislot, |(m, _)| *m) {
            Ok(i) => {
                let list = &mut self.cells[i].1;
                if let Err(pos) = list.binary_search(&device) {
                    list.insert(pos, device);
                }
            }
            Err(i) => self.cells.insert(i, (minislot, vec![device])),
        }
    }
}

/// The schedule over one super-cycle of `r_L` global slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalSlotTable {
    pub slots: Vec<SlotCells>,
}

impl GlobalSlotTable {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Cells of slot ordinal `ordinal`, folding by super-cycle periodicity.
    pub fn at(&self, ordinal: u64) -> &SlotCells {
        &self.slots[(ordinal % self.slots.len() as u64) as usize]
    }

    pub fn total_entries(&self) -> usize {
        self.slots.iter().map(SlotCells::occupant_count).sum()
    }

    /// Global slot indices (within the super-cycle) occupied by `device`.
    pub fn occurrences_of(&self, device: DeviceId) -> Vec<usize> {
        self.slots.iter().enumerate().filter(|(_, s)| s.devices().any(|(_, d)| d == device)).map(|(g, _)| g).collect()
    }
}

/// Expands class-cycle placements into the `r_L`-slot super-cycle.
///
/// A device of class `c` placed at class-slot `l` occupies every global slot
/// `g` with `g ≡ l (mod r_c)`. Entries whose device or slot is invalid are
/// skipped; [`super::validate_scenario`] reports them.
pub fn expand_schedule(s: &Scenario) -> GlobalSlotTable {
    let super_cycle = s.params.super_cycle().max(1) as usize;
    let mut slots = vec![SlotCells::default(); super_cycle];
    for entry in &s.assignment.entries {
        let Some(device) = s.device(entry.device) else { continue };
        let cycle = s.params.cycle(device.priority) as usize;
        if cycle == 0 || entry.slot as usize >= cycle {
            continue;
        }
        for g in (entry.slot as usize..super_cycle).step_by(cycle) {
            slots[g].insert(entry.minislot, entry.device);
        }
    }
    GlobalSlotTable { slots }
}

pub(crate) fn class_of(s: &Scenario, id: DeviceId) -> Option<Priority> {
    s.device(id).map(|d| d.priority)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn scenario(cycles: (u32, u32, u32), devices: &[(u32, Priority, u32, u32)], smsa: bool) -> Scenario {
        Scenario {
            params: ProtocolParams {
                minislots: 4,
                minislot_len: Ticks(9_000),
                tx_len: Ticks(100_000),
                cycle_hp: cycles.0,
                cycle_rp: cycles.1,
                cycle_lp: cycles.2,
                synccs: false,
                buffered: false,
                smsa,
            },
            devices: devices
                .iter()
                .map(|&(id, priority, _, _)| DeviceSpec {
                    id: DeviceId(id),
                    priority,
                    rate: ArrivalRate(1.0),
                    traffic: TrafficProcess::Poisson,
                })
                .collect(),
            assignment: Assignment {
                entries: devices
                    .iter()
                    .map(|&(id, _, slot, minislot)| AssignmentEntry { device: DeviceId(id), slot, minislot })
                    .collect(),
            },
            qos: QosSpec::default(),
            run: RunControl::default(),
        }
    }

    #[test]
    fn hp_device_repeats_every_hp_cycle() {
        let s = scenario((2, 4, 8), &[(0, Priority::High, 1, 1)], false);
        let table = expand_schedule(&s);
        assert_eq!(table.len(), 8);
        assert_eq!(table.occurrences_of(DeviceId(0)), vec![1, 3, 5, 7]);
    }

    #[test]
    fn uniform_cycles_give_single_frame() {
        let s = scenario(
            (5, 5, 5),
            &[(0, Priority::High, 0, 1), (1, Priority::Regular, 2, 1), (2, Priority::Low, 4, 3)],
            false,
        );
        let table = expand_schedule(&s);
        assert_eq!(table.len(), 5);
        assert_eq!(table.total_entries(), 3);
        assert_eq!(table.slots[4].occupants(3), &[DeviceId(2)]);
    }

    #[test]
    fn shared_minislot_lists_both_devices() {
        let s = scenario((4, 8, 8), &[(0, Priority::High, 2, 3), (1, Priority::High, 2, 3)], true);
        let table = expand_schedule(&s);
        for g in [2, 6] {
            assert_eq!(table.slots[g].occupants(3), &[DeviceId(0), DeviceId(1)]);
        }
        assert!(table.slots[0].is_empty());
    }

    #[test]
    fn entry_count_and_periodicity() {
        let s = scenario(
            (2, 4, 8),
            &[(0, Priority::High, 0, 1), (1, Priority::Regular, 3, 2), (2, Priority::Low, 5, 3)],
            false,
        );
        let table = expand_schedule(&s);
        assert_eq!(table.total_entries(), 8 / 2 + 8 / 4 + 1);
        for k in 0..8u64 {
            assert_eq!(table.at(k), table.at(k + 8));
        }
        assert_eq!(expand_schedule(&s), table);
    }
}
