//! Deterministic q-digest over the dyadic buckets of `[1, U]`.
//!
//! Bucket `(level, index)` covers `[index * 2^level + 1, (index + 1) * 2^level]`.
//! Level 0 holds singletons, level `log2 U` is the root `[1, U]`. Only buckets
//! with a positive count are stored.
//!
//! With `T = floor(n * rho / log2 U)`, compression merges a sibling pair into
//! its parent whenever `count(b) + count(sibling) + count(parent) < T`, working
//! bottom-up. A merged parent therefore never exceeds `T`, and every surviving
//! non-root triple sums to at least `T`.
//!
//! A triple sum only drops when `T` grows or when a merge deletes the parent
//! of some pair. So a full pass over every bucket is needed only after `T`
//! changed; otherwise compression rechecks the leaves touched since the last
//! pass, and each merge queues the merged parent and the children of the two
//! deleted buckets.
//!
//! Each bucket carries a payload `P` that is merged alongside the counts. The
//! plain digest uses `()`; VariableBucket attaches a Count-Min sketch.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{BuildHasherDefault, Hasher};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{check_open_unit, Universe};

/// Per-bucket data merged into the parent when a sibling pair is compressed.
pub trait BucketPayload {
    fn absorb(&mut self, other: Self);
}

impl BucketPayload for () {
    fn absorb(&mut self, _other: Self) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BucketId {
    pub level: u32,
    pub index: u64,
}

impl BucketId {
    pub fn leaf(value: u64) -> Self {
        Self {
            level: 0,
            index: value - 1,
        }
    }

    pub fn lo(self) -> u64 {
        (self.index << self.level) + 1
    }

    pub fn hi(self) -> u64 {
        (self.index + 1) << self.level
    }

    pub fn width(self) -> u64 {
        1 << self.level
    }

    pub fn contains(self, value: u64) -> bool {
        (self.lo()..=self.hi()).contains(&value)
    }

    pub fn parent(self) -> Self {
        Self {
            level: self.level + 1,
            index: self.index >> 1,
        }
    }

    pub fn sibling(self) -> Self {
        Self {
            level: self.level,
            index: self.index ^ 1,
        }
    }

    /// Left and right child; `None` for a leaf.
    pub fn children(self) -> Option<[Self; 2]> {
        let level = self.level.checked_sub(1)?;
        let index = self.index << 1;
        Some([Self { level, index }, Self { level, index: index | 1 }])
    }

    /// Post-order key: right edge first, then narrower buckets before wider.
    fn post_order_key(self) -> (u64, u32) {
        (self.hi(), self.level)
    }
}

/// Hasher for bucket keys: one splitmix64 finalization over the written words.
#[derive(Default)]
struct BucketHasher(u64);

impl Hasher for BucketHasher {
    fn finish(&self) -> u64 {
        crate::cm::splitmix64(self.0)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ u64::from(b);
        }
    }

    fn write_u32(&mut self, x: u32) {
        self.0 = self.0.rotate_left(32) ^ u64::from(x);
    }

    fn write_u64(&mut self, x: u64) {
        self.0 = self.0.rotate_left(7) ^ x;
    }
}

type BucketMap<P> = HashMap<BucketId, Node<P>, BuildHasherDefault<BucketHasher>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node<P> {
    pub count: u64,
    pub payload: P,
}

/// When compression runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cadence {
    /// After an insert whose leaf, parent and sibling fall below the threshold.
    PerInsert,
    /// Compression every `every` inserts.
    Batched { every: u64 },
}

impl Cadence {
    /// Batched sweeps every `ceil(1 / (2 rho))` inserts.
    pub fn batched_for(rho: f64) -> Self {
        Self::Batched {
            every: (1.0 / (2.0 * rho)).ceil().max(1.0) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QDigest<P = ()> {
    rho: f64,
    universe: Universe,
    n: u64,
    buckets: BucketMap<P>,
    cadence: Cadence,
    since_sweep: u64,
    /// Leaves inserted into since the last compression.
    dirty: BTreeSet<BucketId>,
    /// Threshold at the last full pass; `None` before the first.
    settled_at: Option<u64>,
}

/// A broken q-digest property, reported by [`QDigest::check_invariants`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvariantViolation {
    CountMismatch { stored: u64, n: u64 },
    HeavyBucket { bucket: BucketId, count: u64, threshold: u64 },
    SparseTriple { bucket: BucketId, sum: u64, threshold: u64 },
    EmptyBucket(BucketId),
}

impl<P: BucketPayload> QDigest<P> {
    pub fn new(rho: f64, universe: Universe) -> Result<Self> {
        Self::with_cadence(rho, universe, Cadence::PerInsert)
    }

    pub fn with_cadence(rho: f64, universe: Universe, cadence: Cadence) -> Result<Self> {
        check_open_unit("rho", rho)?;
        if let Cadence::Batched { every: 0 } = cadence {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        Ok(Self {
            rho,
            universe,
            n: 0,
            buckets: BucketMap::default(),
            cadence,
            since_sweep: 0,
            dirty: BTreeSet::new(),
            settled_at: None,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn cadence(&self) -> Cadence {
        self.cadence
    }

    /// Total inserted count.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `floor(n * rho / log2 U)`.
    pub fn threshold(&self) -> u64 {
        (self.n as f64 * self.rho / f64::from(self.universe.log2())).floor() as u64
    }

    pub fn count(&self, id: BucketId) -> u64 {
        self.buckets.get(&id).map_or(0, |n| n.count)
    }

    pub fn get(&self, id: BucketId) -> Option<&Node<P>> {
        self.buckets.get(&id)
    }

    /// Buckets in `(level, index)` order.
    pub fn buckets(&self) -> impl Iterator<Item = (BucketId, &Node<P>)> {
        let mut v: Vec<_> = self.buckets.iter().map(|(k, v)| (*k, v)).collect();
        v.sort_unstable_by_key(|e| e.0);
        v.into_iter()
    }

    /// Buckets in post-order: children before parents, left subtree before right.
    pub fn post_order(&self) -> Vec<(BucketId, &Node<P>)> {
        let mut v: Vec<_> = self.buckets.iter().map(|(k, v)| (*k, v)).collect();
        v.sort_unstable_by_key(|(id, _)| id.post_order_key());
        v
    }

    fn root(&self) -> BucketId {
        BucketId {
            level: self.universe.log2(),
            index: 0,
        }
    }

    /// Insert one value. `make` builds the payload of a freshly created
    /// leaf and `update` records the item in the leaf's payload.
    pub fn insert_with(
        &mut self,
        value: u64,
        make: impl FnOnce() -> P,
        update: impl FnOnce(&mut P) -> Result<()>,
    ) -> Result<()> {
        self.universe.check(value)?;
        let leaf = BucketId::leaf(value);
        let node = self.buckets.entry(leaf).or_insert_with(|| Node {
            count: 0,
            payload: make(),
        });
        update(&mut node.payload)?;
        node.count += 1;
        self.n += 1;
        self.since_sweep += 1;

        self.dirty.insert(leaf);
        match self.cadence {
            Cadence::PerInsert => {
                let t = self.threshold();
                if t > 0 && self.triple_sum(leaf) < t {
                    self.compress_incremental();
                }
            }
            Cadence::Batched { every } => {
                if self.since_sweep >= every {
                    self.compress_incremental();
                }
            }
        }
        Ok(())
    }

    fn triple_sum(&self, id: BucketId) -> u64 {
        self.count(id) + self.count(id.sibling()) + self.count(id.parent())
    }

    /// Merge every qualifying sibling pair, checking all buckets bottom-up.
    /// A no-op while the threshold is 0.
    pub fn compress(&mut self) {
        let all = self.buckets.keys().copied().collect();
        self.settle(all, true);
    }

    /// Recheck only the dirty leaves unless the threshold moved since the
    /// last full pass.
    fn compress_incremental(&mut self) {
        if self.settled_at == Some(self.threshold()) {
            let work = std::mem::take(&mut self.dirty);
            self.settle(work, false);
        } else {
            self.compress();
        }
    }

    fn settle(&mut self, mut work: BTreeSet<BucketId>, full: bool) {
        self.since_sweep = 0;
        self.dirty.clear();
        let t = self.threshold();
        if t == 0 {
            return;
        }
        if full {
            self.settled_at = Some(t);
        }
        let root = self.universe.log2();
        // (level, index) order pops lower levels first.
        while let Some(id) = work.pop_first() {
            if id.level >= root || !self.buckets.contains_key(&id) || self.triple_sum(id) >= t {
                continue;
            }
            self.merge_into_parent(id);
            work.insert(id.parent());
            for b in [id, id.sibling()] {
                let children = b.children().into_iter().flatten();
                work.extend(children.filter(|c| self.buckets.contains_key(c)));
            }
        }
    }

    fn merge_into_parent(&mut self, id: BucketId) {
        let removed = [id, id.sibling()].map(|c| self.buckets.remove(&c));
        let mut children = removed.into_iter().flatten();
        match self.buckets.entry(id.parent()) {
            Entry::Occupied(mut e) => {
                let parent = e.get_mut();
                for c in children {
                    parent.count += c.count;
                    parent.payload.absorb(c.payload);
                }
            }
            Entry::Vacant(e) => {
                if let Some(first) = children.next() {
                    e.insert(children.fold(first, |mut acc, c| {
                        acc.count += c.count;
                        acc.payload.absorb(c.payload);
                        acc
                    }));
                }
            }
        }
    }

    /// Verify count conservation and both q-digest inequalities.
    ///
    /// Non-leaf buckets must hold at most `T`; every non-root bucket together
    /// with its parent and sibling must reach `T` (compression merges on a
    /// strictly smaller sum, so a sum of exactly `T` survives). Only
    /// meaningful right after [`compress`](Self::compress).
    pub fn check_invariants(&self) -> std::result::Result<(), InvariantViolation> {
        let stored: u64 = self.buckets.values().map(|n| n.count).sum();
        if stored != self.n {
            return Err(InvariantViolation::CountMismatch { stored, n: self.n });
        }
        let t = self.threshold();
        let root = self.root();
        for (&id, node) in &self.buckets {
            if node.count == 0 {
                return Err(InvariantViolation::EmptyBucket(id));
            }
            if id.level > 0 && node.count > t {
                return Err(InvariantViolation::HeavyBucket {
                    bucket: id,
                    count: node.count,
                    threshold: t,
                });
            }
            if id != root {
                let sum = self.triple_sum(id);
                if sum < t {
                    return Err(InvariantViolation::SparseTriple {
                        bucket: id,
                        sum,
                        threshold: t,
                    });
                }
            }
        }
        Ok(())
    }

    /// Right edge of the first post-order bucket at which the running count
    /// reaches `ceil(phi * n)`.
    pub fn quantile(&self, phi: f64) -> Result<u64> {
        if !(0.0..=1.0).contains(&phi) {
            return Err(Error::InvalidParameter(format!("phi {phi} outside [0, 1]")));
        }
        if self.n == 0 {
            return Err(Error::EmptySummary);
        }
        let target = ((phi * self.n as f64).ceil() as u64).max(1);
        let mut acc = 0;
        for (id, node) in self.post_order() {
            acc += node.count;
            if acc >= target {
                return Ok(id.hi());
            }
        }
        Ok(self.universe.top())
    }

    /// One line per bucket, `level index lo hi count`, in `(level, index)` order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (id, node) in self.buckets() {
            let _ = writeln!(s, "{} {} {} {} {}", id.level, id.index, id.lo(), id.hi(), node.count);
        }
        s
    }


    /// Rebuild from decoded parts; validates ranges and the count total.
    pub(crate) fn from_parts(
        rho: f64,
        universe: Universe,
        cadence: Cadence,
        n: u64,
        buckets: BTreeMap<BucketId, Node<P>>,
    ) -> Result<Self> {
        let mut d = Self::with_cadence(rho, universe, cadence)?;
        let top = universe.log2();
        for id in buckets.keys() {
            if id.level > top || id.hi() > universe.top() {
                return Err(Error::Snapshot("bucket outside the universe"));
            }
        }
        if buckets.values().map(|n| n.count).sum::<u64>() != n {
            return Err(Error::Snapshot("bucket counts do not sum to n"));
        }
        d.n = n;
        d.buckets = buckets.into_iter().collect();
        Ok(d)
    }
}

impl QDigest<()> {
    pub fn insert(&mut self, value: u64) -> Result<()> {
        self.insert_with(value, || (), |_| Ok(()))
    }
}
