use std::collections::{BTreeMap, HashMap};

use super::log::{EventKind, EventLog};
use crate::model::{DeviceId, GlobalSlotTable, ProtocolParams};

/// AD-F of every successful packet, recomputed from the log alone.
///
/// A packet's AD-F is the number of the device's slot occurrences whose
/// sensing window starts strictly after the arrival, up to and including the
/// one it transmitted in.
pub fn measure_adf(
    log: &EventLog,
    schedule: &GlobalSlotTable,
    params: &ProtocolParams,
) -> BTreeMap<DeviceId, Vec<u64>> {
    let mut slot_starts = Vec::new();
    let mut arrivals = HashMap::new();
    let mut out: BTreeMap<DeviceId, Vec<u64>> = BTreeMap::new();
    let minislot_of =
        |id: DeviceId, ordinal: u64| schedule.at(ordinal).devices().find(|(_, d)| *d == id).map(|(m, _)| m);
    for r in &log.records {
        match (r.kind, r.device, r.packet) {
            (EventKind::SlotStart, _, _) => {
                debug_assert_eq!(slot_starts.len() as u64, r.slot);
                slot_starts.push(r.tick);
            }
            (EventKind::Arrival, Some(d), Some(p)) => {
                arrivals.insert((d, p), r.tick);
            }
            (EventKind::Success, Some(d), Some(p)) => {
                let arrival = arrivals[&(d, p)];
                let mut count = 0;
                for k in (0..=r.slot).rev() {
                    let Some(m) = minislot_of(d, k) else { continue };
                    if slot_starts[k as usize] + params.sensing_offset(m).0 > arrival {
                        count += 1;
                    } else {
                        break;
                    }
                }
                out.entry(d).or_default().push(count);
            }
            _ => {}
        }
    }
    out
}
