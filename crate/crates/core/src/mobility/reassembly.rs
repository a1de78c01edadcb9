use std::collections::BTreeMap;

use serde::Serialize;

/// Receiver-side byte-stream reassembly shared by single-path flows that
/// move between interfaces and by multipath connections.
///
/// Bytes reach the application strictly in order and at most once;
/// anything already delivered or already buffered counts as a duplicate.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Reassembly {
    next: u64,
    buffered: BTreeMap<u64, u32>,
    duplicates: u64,
    duplicate_bytes: u64,
    received_bytes: u64,
    record: bool,
    deliveries: Vec<(u64, u32)>,
}

impl Reassembly {
    /// Also keeps the list of `(offset, len)` runs handed to the
    /// application, for auditing.
    pub fn recording() -> Self {
        Self {
            record: true,
            ..Self::default()
        }
    }

    /// Next byte the application is waiting for.
    pub fn cursor(&self) -> u64 {
        self.next
    }

    pub fn delivered(&self) -> u64 {
        self.next
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn duplicate_bytes(&self) -> u64 {
        self.duplicate_bytes
    }

    pub fn received_bytes(&self) -> u64 {
        self.received_bytes
    }

    pub fn buffered_bytes(&self) -> u64 {
        self.buffered.values().map(|&l| u64::from(l)).sum()
    }

    pub fn deliveries(&self) -> &[(u64, u32)] {
        &self.deliveries
    }

    /// Accepts a segment and returns how many bytes became deliverable.
    pub fn receive(&mut self, seq: u64, len: u32) -> u64 {
        self.received_bytes += u64::from(len);
        let end = seq + u64::from(len);
        if len == 0 || end <= self.next || self.buffered.contains_key(&seq) {
            self.duplicates += 1;
            self.duplicate_bytes += u64::from(len);
            return 0;
        }
        let (seq, len) = if seq < self.next {
            (self.next, (end - self.next) as u32)
        } else {
            (seq, len)
        };
        self.buffered.insert(seq, len);
        let before = self.next;
        while let Some((&s, &l)) = self.buffered.first_key_value() {
            if s > self.next {
                break;
            }
            self.buffered.pop_first();
            let e = s + u64::from(l);
            if e > self.next {
                let from = self.next;
                self.next = e;
                if self.record {
                    self.deliveries.push((from, (e - from) as u32));
                }
            }
        }
        self.next - before
    }
}
