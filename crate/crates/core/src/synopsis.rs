//! Behaviour shared by the bucketed synopses.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{BraidItem, StreamId, WeightFunction};

/// Why a weight cannot be served by a small-memory synopsis.
pub(crate) fn unsupported(algo: &'static str, weight: WeightFunction) -> Error {
    let reason = match weight {
        WeightFunction::Max | WeightFunction::Min => {
            "max/min are tracked exactly in O(k) space by the extremes tracker"
        }
        WeightFunction::SecondMax => {
            "tracking the top stream by second-largest value needs Omega(m / t^2) space \
             (set-disjointness lower bound); use the exact oracle"
        }
        WeightFunction::Spread => {
            "tracking the top stream by spread needs Omega(m) space \
             (set-disjointness lower bound); use the exact oracle"
        }
        _ => "not a supported weight",
    };
    Error::UnsupportedWeight {
        algo,
        weight: weight.to_string(),
        reason,
    }
}

/// Byte size of a snapshot, itemized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryBreakdown {
    /// Fixed synopsis header, including the id-set length field.
    pub header: usize,
    /// Per-bucket metadata and per-sketch headers.
    pub bucket_meta: usize,
    /// Count-Min counter grids.
    pub counters: usize,
    /// Observed stream ids.
    pub id_set: usize,
}

impl MemoryBreakdown {
    pub fn total(&self) -> usize {
        self.header + self.bucket_meta + self.counters + self.id_set
    }

    /// Everything that scales with the bucket structure rather than with `m`.
    pub fn counter_component(&self) -> usize {
        self.bucket_meta + self.counters
    }
}

/// Sort `(id, value)` pairs by value descending, ties by smaller id, and keep `k`.
pub fn select_top_k(mut scored: Vec<(StreamId, f64)>, k: usize) -> Vec<(StreamId, f64)> {
    scored.sort_by(|a, b| desc_then_id(*a, *b));
    scored.truncate(k);
    scored
}

pub(crate) fn desc_then_id(a: (StreamId, f64), b: (StreamId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// A one-pass synopsis over a braid answering top-k queries by average or quantile.
pub trait BraidSynopsis {
    fn name(&self) -> &'static str;

    fn ingest(&mut self, item: &BraidItem) -> Result<()>;

    /// Stream ids seen so far.
    fn stream_ids(&self) -> &BTreeSet<StreamId>;

    /// Estimated number of items of `id`; never below the true count.
    fn stream_size(&self, id: StreamId) -> u64;

    fn quantile(&self, id: StreamId, phi: f64) -> Result<f64>;

    fn average(&self, id: StreamId) -> Result<f64>;

    fn memory(&self) -> MemoryBreakdown;

    fn estimate(&self, id: StreamId, weight: WeightFunction) -> Result<f64> {
        match weight {
            WeightFunction::Average => self.average(id),
            w => match w.phi() {
                Some(phi) => self.quantile(id, phi),
                None => Err(unsupported(self.name(), w)),
            },
        }
    }

    /// The `k` observed streams with the largest estimated weight.
    fn topk(&self, weight: WeightFunction, k: usize) -> Result<Vec<(StreamId, f64)>> {
        if k < 1 {
            return Err(Error::InvalidK);
        }
        if !weight.is_sketchable() {
            return Err(unsupported(self.name(), weight));
        }
        let scored = self
            .stream_ids()
            .iter()
            .map(|&id| Ok((id, self.estimate(id, weight)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(select_top_k(scored, k))
    }
}
