//! Mergeable Count-Min sketch keyed by stream id.
//!
//! A `depth x width` grid of `u64` counters. Row `r` hashes a key with a
//! seed derived from `(seed, r)`, so two sketches built from the same
//! [`CmConfig`] hash identically and can be merged by adding counters.
//! Plain updates only: conservative update would break that linearity.

use crate::error::{Error, Result};
use crate::model::{check_open_unit, StreamId};

const MAGIC: &[u8; 4] = b"CMS1";

/// Snapshot header: magic, width (u32), depth (u32), seed (u64), total (u64).
pub const SNAPSHOT_HEADER_BYTES: usize = 4 + 4 + 4 + 8 + 8;

/// Counter-grid shape and hash seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CmConfig {
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
}

impl CmConfig {
    pub fn new(width: usize, depth: usize, seed: u64) -> Result<Self> {
        if width == 0 || depth == 0 {
            return Err(Error::InvalidParameter(
                "count-min width and depth must be positive".into(),
            ));
        }
        if width > u32::MAX as usize || depth > u32::MAX as usize {
            return Err(Error::InvalidParameter(
                "count-min dimensions must fit in 32 bits".into(),
            ));
        }
        Ok(Self { width, depth, seed })
    }

    /// `width = ceil(e / eps)`, `depth = ceil(ln(1 / delta))`.
    pub fn from_error_bounds(eps: f64, delta: f64, seed: u64) -> Result<Self> {
        check_open_unit("eps", eps)?;
        check_open_unit("delta", delta)?;
        let width = (std::f64::consts::E / eps).ceil() as usize;
        let depth = (1.0 / delta).ln().ceil() as usize;
        Self::new(width.max(1), depth.max(1), seed)
    }

    pub fn cells(&self) -> usize {
        self.width * self.depth
    }

    /// Exact byte size of one snapshot with this shape.
    pub fn snapshot_bytes(&self) -> usize {
        SNAPSHOT_HEADER_BYTES + 8 * self.cells()
    }

    fn row_seed(&self, row: usize) -> u64 {
        splitmix64(self.seed ^ (row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Flat counter offsets `row * width + column` touched by `key`, one per row.
    pub fn cells_for(&self, key: StreamId) -> Vec<usize> {
        (0..self.depth)
            .map(|row| row * self.width + self.column(row, key))
            .collect()
    }

    /// Flat counter offset touched by `key` in `row`.
    #[inline]
    pub fn cell(&self, row: usize, key: StreamId) -> usize {
        row * self.width + self.column(row, key)
    }

    fn column(&self, row: usize, key: StreamId) -> usize {
        let h = splitmix64(key ^ self.row_seed(row));
        ((u128::from(h) * self.width as u128) >> 64) as usize
    }
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMinSketch {
    config: CmConfig,
    counters: Vec<u64>,
    total: u64,
}

impl CountMinSketch {
    pub fn new(config: CmConfig) -> Self {
        Self {
            config,
            counters: vec![0; config.cells()],
            total: 0,
        }
    }

    pub fn config(&self) -> &CmConfig {
        &self.config
    }

    /// Sum of inserted multiplicities.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn row(&self, row: usize) -> &[u64] {
        let w = self.config.width;
        &self.counters[row * w..(row + 1) * w]
    }

    /// Raw counter at a flat offset from [`CmConfig::cells_for`].
    #[inline]
    pub fn counter(&self, offset: usize) -> u64 {
        self.counters[offset]
    }

    pub fn insert(&mut self, key: StreamId, multiplicity: u64) -> Result<()> {
        if multiplicity == 0 {
            return Err(Error::InvalidParameter("multiplicity must be >= 1".into()));
        }
        let total = self
            .total
            .checked_add(multiplicity)
            .ok_or(Error::CounterOverflow)?;
        let w = self.config.width;
        for row in 0..self.config.depth {
            let c = row * w + self.config.column(row, key);
            self.counters[c] += multiplicity;
        }
        self.total = total;
        Ok(())
    }

    /// Insert using precomputed cell offsets for the key.
    pub fn insert_at(&mut self, cells: &[usize], multiplicity: u64) -> Result<()> {
        let total = self
            .total
            .checked_add(multiplicity)
            .ok_or(Error::CounterOverflow)?;
        // Every cell is bounded by `total`, so no per-cell overflow can occur.
        for &c in cells {
            self.counters[c] += multiplicity;
        }
        self.total = total;
        Ok(())
    }

    /// Minimum over rows of the hashed counters; never below the true count.
    pub fn point_query(&self, key: StreamId) -> u64 {
        self.point_query_at(&self.config.cells_for(key))
    }

    pub fn point_query_at(&self, cells: &[usize]) -> u64 {
        cells
            .iter()
            .map(|&c| self.counters[c])
            .min()
            .unwrap_or(0)
    }

    /// Entrywise counter sum into `self`.
    pub fn merge_from(&mut self, other: &CountMinSketch) -> Result<()> {
        if self.config != other.config {
            return Err(Error::IncompatibleSketch);
        }
        let total = self
            .total
            .checked_add(other.total)
            .ok_or(Error::CounterOverflow)?;
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += *b;
        }
        self.total = total;
        Ok(())
    }

    pub fn merge(a: &CountMinSketch, b: &CountMinSketch) -> Result<CountMinSketch> {
        let mut out = a.clone();
        out.merge_from(b)?;
        Ok(out)
    }

    pub fn snapshot_bytes(&self) -> usize {
        self.config.snapshot_bytes()
    }

    /// Append the little-endian snapshot: header then row-major counters.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.reserve(self.snapshot_bytes());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.config.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.depth as u32).to_le_bytes());
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        out.extend_from_slice(&self.total.to_le_bytes());
        for c in &self.counters {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    /// Decode one snapshot from the front of `bytes`; returns it and the bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = SnapshotReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Snapshot("bad count-min magic"));
        }
        let width = r.u32()? as usize;
        let depth = r.u32()? as usize;
        let seed = r.u64()?;
        let total = r.u64()?;
        let config = CmConfig::new(width, depth, seed)
            .map_err(|_| Error::Snapshot("zero count-min dimension"))?;
        let mut counters = Vec::with_capacity(config.cells());
        for _ in 0..config.cells() {
            counters.push(r.u64()?);
        }
        for row in counters.chunks(width) {
            if row.iter().try_fold(0u64, |a, &b| a.checked_add(b)) != Some(total) {
                return Err(Error::Snapshot("count-min row does not sum to total"));
            }
        }
        Ok((
            Self {
                config,
                counters,
                total,
            },
            r.pos,
        ))
    }
}

/// Little-endian cursor shared by the snapshot decoders.
pub(crate) struct SnapshotReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> SnapshotReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Snapshot("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    pub(crate) fn advance(&mut self, n: usize) {
        self.pos += n;
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Snapshot("trailing bytes"))
        }
    }
}
