use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

/// A D0 sample waiting to be verified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: u64,
    pub level: u32,
    /// Radius found the last time this root was verified; `None` if never.
    pub last_delta: Option<f64>,
    pub seq: u64,
}

impl QueueEntry {
    /// Ordering key: level, then last delta (unknown first), then insertion.
    fn priority(&self, other: &Self) -> Ordering {
        self.level
            .cmp(&other.level)
            .then_with(|| match (self.last_delta, other.last_delta) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => a.total_cmp(&b),
            })
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

struct Slot(QueueEntry);

impl PartialEq for Slot {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}
impl Eq for Slot {}
impl PartialOrd for Slot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Slot {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.priority(&self.0)
    }
}

/// Roots ordered weakest first: lowest expansion level, then smallest radius.
#[derive(Default)]
pub struct VerifyQueue {
    heap: BinaryHeap<Slot>,
    next_seq: u64,
}

impl VerifyQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: u64, level: u32, last_delta: Option<f64>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Slot(QueueEntry {
            id,
            level,
            last_delta,
            seq,
        }));
    }

    pub fn pop(&mut self) -> Option<QueueEntry> {
        self.heap.pop().map(|s| s.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Entries in no particular order.
    pub fn iter(&self) -> impl Iterator<Item = &QueueEntry> + '_ {
        self.heap.iter().map(|s| &s.0)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.heap.iter().any(|s| s.0.id == id)
    }
}
