use std::collections::VecDeque;

use crate::model::Frame;
use crate::providers::FrameEncoding;

/// Slack for timestamp comparisons against a rate grid.
const GRID_EPS: f64 = 1e-9;

/// Admits the first timestamp at or past each `1/rate` grid boundary.
#[derive(Debug, Clone)]
pub(crate) struct RateGate {
    rate: f64,
    next: Option<f64>,
}

impl RateGate {
    pub(crate) fn new(rate: f64) -> Self {
        Self { rate, next: None }
    }

    pub(crate) fn admit(&mut self, t: f64) -> bool {
        if let Some(next) = self.next {
            if t < next - GRID_EPS {
                return false;
            }
        }
        let slot = (t * self.rate + GRID_EPS).floor();
        self.next = Some((slot + 1.0) / self.rate);
        true
    }
}

#[derive(Debug, Clone)]
pub struct WindowEntry {
    pub frame: Frame,
    pub encoding: Option<FrameEncoding>,
}

/// Fixed-capacity ring of the most recent frames and their cached encodings.
#[derive(Debug, Clone)]
pub struct WindowState {
    entries: VecDeque<WindowEntry>,
    capacity: usize,
}

impl WindowState {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Pushes a frame, evicting and returning the oldest one at capacity.
    pub fn push(&mut self, entry: WindowEntry) -> Option<WindowEntry> {
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back(entry);
        evicted
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    pub fn frames(&self) -> Vec<Frame> {
        self.entries.iter().map(|e| e.frame.clone()).collect()
    }

    /// Cached encodings in window order, or `None` if any frame lacks one.
    pub fn cached_encodings(&self) -> Option<Vec<FrameEncoding>> {
        self.entries.iter().map(|e| e.encoding.clone()).collect()
    }
}
