use std::collections::VecDeque;

use crate::model::Ticks;

/// A waiting packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    /// Per-device sequence number.
    pub id: u64,
    pub arrival: Ticks,
    /// Index of the device's first slot occurrence this packet may use.
    pub first_usable: u64,
    /// Start of the device's mini-slot in that occurrence, once it has begun.
    pub first_start: Option<Ticks>,
    /// Packets this one replaced on arrival.
    pub replaced: u32,
}

impl Packet {
    pub fn new(id: u64, arrival: Ticks, first_usable: u64) -> Packet {
        Packet { id, arrival, first_usable, first_start: None, replaced: 0 }
    }
}

/// Packets waiting at one device. A packet leaves the queue when its
/// transmission is committed, so whatever is here is never mid-transmission.
#[derive(Debug, Clone, Default)]
pub struct DeviceState {
    pub queue: VecDeque<Packet>,
}

impl DeviceState {
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn head(&self) -> Option<&Packet> {
        self.queue.front()
    }

    pub fn take_head(&mut self) -> Option<Packet> {
        self.queue.pop_front()
    }
}

/// Admits an arrival. Without a buffer a waiting packet is dropped in favour
/// of the newcomer and returned; with one the newcomer joins the tail.
pub fn arrival_admission(state: &mut DeviceState, mut packet: Packet, buffered: bool) -> Option<Packet> {
    if buffered {
        state.queue.push_back(packet);
        return None;
    }
    let dropped = state.queue.pop_front();
    debug_assert!(state.queue.is_empty());
    if let Some(old) = &dropped {
        packet.replaced = old.replaced + 1;
    }
    state.queue.push_back(packet);
    dropped
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_buffer_empty_queue() {
        let mut s = DeviceState::default();
        assert!(arrival_admission(&mut s, Packet::new(0, Ticks(10), 0), false).is_none());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn no_buffer_replaces_waiting() {
        let mut s = DeviceState::default();
        arrival_admission(&mut s, Packet::new(0, Ticks(10), 0), false);
        let old = arrival_admission(&mut s, Packet::new(1, Ticks(20), 0), false).unwrap();
        assert_eq!(old.id, 0);
        assert_eq!(s.len(), 1);
        assert_eq!(s.head().unwrap().id, 1);
        assert_eq!(s.head().unwrap().replaced, 1);
    }

    #[test]
    fn committed_packet_does_not_block_next_arrival() {
        let mut s = DeviceState::default();
        arrival_admission(&mut s, Packet::new(0, Ticks(10), 0), false);
        let tx = s.take_head().unwrap();
        assert_eq!(tx.id, 0);
        assert!(arrival_admission(&mut s, Packet::new(1, Ticks(20), 1), false).is_none());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn buffered_fifo() {
        let mut s = DeviceState::default();
        arrival_admission(&mut s, Packet::new(0, Ticks(10), 0), true);
        arrival_admission(&mut s, Packet::new(1, Ticks(20), 0), true);
        assert_eq!(s.len(), 2);
        assert_eq!(s.take_head().unwrap().id, 0);
        assert_eq!(s.take_head().unwrap().id, 1);
    }
}
