//! Bounded FIFO of the most recent packets.

use std::collections::VecDeque;

use crate::model::{DataPacket, Value};

#[derive(Debug, Clone)]
pub struct SlidingWindow {
    capacity: usize,
    entries: VecDeque<DataPacket>,
}

impl SlidingWindow {
    /// # Panics
    /// If `capacity` is zero. Pipeline configs are validated before this is reached.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        SlidingWindow {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    /// Appends `packet` as the newest entry, evicting the oldest when full.
    pub fn push(&mut self, packet: DataPacket) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(packet);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn newest(&self) -> Option<&DataPacket> {
        self.entries.back()
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &DataPacket> + ExactSizeIterator {
        self.entries.iter()
    }

    /// The last `n` packets, oldest first.
    pub fn tail(&self, n: usize) -> impl Iterator<Item = &DataPacket> {
        self.entries.iter().skip(self.entries.len().saturating_sub(n))
    }

    /// Values of `column`, oldest to newest; absent columns read as `Missing`.
    pub fn column(&self, column: &str) -> Vec<Value> {
        self.column_tail(column, self.entries.len())
    }

    /// Like [`column`](Self::column) restricted to the last `n` packets.
    pub fn column_tail(&self, column: &str, n: usize) -> Vec<Value> {
        self.tail(n)
            .map(|p| p.get(column).cloned().unwrap_or(Value::Missing))
            .collect()
    }
}
