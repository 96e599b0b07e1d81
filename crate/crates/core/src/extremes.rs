//! Exact top-k streams by maximum or minimum item value in O(k) space.
//!
//! An indexed binary heap holds at most `k` streams with the worst retained
//! entry at the root. An item of a retained stream can only improve that
//! stream's entry; an item of any other stream competes with the root.
//!
//! A stream evicted earlier can re-enter when a later item beats the root.
//! This is exact: once evicted, its old best was beaten by `k` entries that
//! only improve afterwards, so the old best can never rank in the top k again.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{BraidItem, StreamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremeMode {
    Max,
    Min,
}

#[derive(Debug, Clone)]
pub struct ExtremeTracker {
    k: usize,
    mode: ExtremeMode,
    heap: Vec<(StreamId, f64)>,
    pos: HashMap<StreamId, usize>,
    comparisons: u64,
}

impl ExtremeTracker {
    pub fn new(k: usize, mode: ExtremeMode) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidK);
        }
        Ok(Self {
            k,
            mode,
            heap: Vec::with_capacity(k),
            pos: HashMap::with_capacity(k),
            comparisons: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> ExtremeMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Entry comparisons performed so far.
    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    pub fn ingest(&mut self, item: &BraidItem) {
        self.offer(item.stream_id, item.value as f64);
    }

    pub fn offer(&mut self, id: StreamId, value: f64) {
        let candidate = (id, value);
        if let Some(&i) = self.pos.get(&id) {
            if self.better(candidate, self.heap[i]) {
                self.heap[i].1 = value;
                self.sift_down(i);
            }
        } else if self.heap.len() < self.k {
            self.heap.push(candidate);
            self.pos.insert(id, self.heap.len() - 1);
            self.sift_up(self.heap.len() - 1);
        } else if self.better(candidate, self.heap[0]) {
            self.pos.remove(&self.heap[0].0);
            self.heap[0] = candidate;
            self.pos.insert(id, 0);
            self.sift_down(0);
        }
    }

    /// Retained streams, best first; ties by smaller id.
    pub fn topk(&self) -> Vec<(StreamId, f64)> {
        let mut out = self.heap.clone();
        out.sort_by(|&a, &b| self.order(b, a));
        out
    }

    /// `Greater` when `a` ranks above `b`.
    fn order(&self, a: (StreamId, f64), b: (StreamId, f64)) -> Ordering {
        let by_value = match self.mode {
            ExtremeMode::Max => a.1.total_cmp(&b.1),
            ExtremeMode::Min => b.1.total_cmp(&a.1),
        };
        by_value.then(b.0.cmp(&a.0))
    }

    fn better(&mut self, a: (StreamId, f64), b: (StreamId, f64)) -> bool {
        self.comparisons += 1;
        self.order(a, b) == Ordering::Greater
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos.insert(self.heap[i].0, i);
        self.pos.insert(self.heap[j].0, j);
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.better(self.heap[parent], self.heap[i]) {
                break;
            }
            self.swap(i, parent);
            i = parent;
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let len = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut worst = i;
            if l < len && self.better(self.heap[worst], self.heap[l]) {
                worst = l;
            }
            if r < len && self.better(self.heap[worst], self.heap[r]) {
                worst = r;
            }
            if worst == i {
                break;
            }
            self.swap(i, worst);
            i = worst;
        }
    }
}
