use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::DeviceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SlotStart,
    Arrival,
    Replaced,
    TxStart,
    Success,
    Collision,
}

/// One log line. Field order is fixed so exports are byte-stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub device: Option<DeviceId>,
    /// Ordinal of the slot in progress.
    pub slot: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub packet: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn push(&mut self, r: EventRecord) {
        debug_assert!(self.records.last().is_none_or(|l| l.tick <= r.tick), "log ticks must not decrease");
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    /// Line-delimited JSON, one record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_jsonl(text: &str) -> Result<EventLog, serde_json::Error> {
        let records =
            text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(EventLog { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_field_order() {
        let mut log = EventLog::default();
        log.push(EventRecord { tick: 0, kind: EventKind::SlotStart, device: None, slot: 0, packet: None });
        log.push(EventRecord {
            tick: 5,
            kind: EventKind::Arrival,
            device: Some(DeviceId(2)),
            slot: 0,
            packet: Some(0),
        });
        let text = log.to_jsonl();
        assert_eq!(
            text,
            "{\"tick\":0,\"kind\":\"slot_start\",\"slot\":0}\n{\"tick\":5,\"kind\":\"arrival\",\"device\":2,\"slot\":0,\"packet\":0}\n"
        );
        assert_eq!(EventLog::from_jsonl(&text).unwrap(), log);
    }
}
