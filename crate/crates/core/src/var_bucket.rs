//! VariableBucket: a q-digest whose buckets each carry a Count-Min sketch of
//! the stream ids counted there.
//!
//! Buckets adapt to the data through q-digest compression; merging a sibling
//! pair into its parent also merges their sketches, so every bucket's sketch
//! total equals its count. Quantile queries walk the buckets in post-order
//! and report the right edge of the bucket at which the stream's running
//! count first exceeds `phi * n_i`.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use crate::cm::{CmConfig, CountMinSketch, SnapshotReader};
use crate::error::{Error, Result};
use crate::exp_bucket::{decode_ids, encode_ids};
use crate::model::{BraidItem, StreamId, Universe, WeightFunction};
use crate::qdigest::{BucketId, BucketPayload, Cadence, InvariantViolation, Node, QDigest};
use crate::synopsis::{select_top_k, unsupported, BraidSynopsis, MemoryBreakdown};

const MAGIC: &[u8; 4] = b"VBS1";
/// magic, rho, U, n, width, depth, seed, cadence, bucket count.
const HEADER_BYTES: usize = 4 + 8 + 8 + 8 + 4 + 4 + 8 + 8 + 8;
/// level (u32), index, count.
const BUCKET_META_BYTES: usize = 4 + 8 + 8;

/// Distinct ids a bucket lists exactly before it switches to the counter grid.
const SPARSE_LIMIT: usize = 16;

/// The Count-Min sketch of one bucket.
///
/// Most buckets are short-lived leaves holding a handful of items, so a
/// bucket keeps an exact `(id, count)` list until it holds more than
/// [`SPARSE_LIMIT`] ids and only then allocates the grid. Count-Min is linear
/// in its input, so both forms answer every query exactly as the grid built
/// from the same items would; snapshots always store the grid.
#[derive(Debug, Clone)]
pub struct BucketSketch {
    config: CmConfig,
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    Sparse { entries: Vec<(StreamId, u64)>, total: u64 },
    Dense(CountMinSketch),
}

impl BucketSketch {
    pub fn new(config: CmConfig) -> Self {
        Self {
            config,
            repr: Repr::Sparse {
                entries: Vec::new(),
                total: 0,
            },
        }
    }

    pub fn config(&self) -> &CmConfig {
        &self.config
    }

    pub fn total(&self) -> u64 {
        match &self.repr {
            Repr::Sparse { total, .. } => *total,
            Repr::Dense(cm) => cm.total(),
        }
    }

    pub fn insert(&mut self, key: StreamId, multiplicity: u64) -> Result<()> {
        match &mut self.repr {
            Repr::Sparse { entries, total } => {
                if multiplicity == 0 {
                    return Err(Error::InvalidParameter("multiplicity must be >= 1".into()));
                }
                *total = total.checked_add(multiplicity).ok_or(Error::CounterOverflow)?;
                match entries.iter_mut().find(|e| e.0 == key) {
                    Some(e) => e.1 += multiplicity,
                    None => entries.push((key, multiplicity)),
                }
                if entries.len() > SPARSE_LIMIT {
                    self.densify();
                }
                Ok(())
            }
            Repr::Dense(cm) => cm.insert(key, multiplicity),
        }
    }

    fn densify(&mut self) {
        if let Repr::Sparse { entries, .. } = &self.repr {
            let mut cm = CountMinSketch::new(self.config);
            for &(id, c) in entries {
                cm.insert(id, c).expect("sparse total already checked");
            }
            self.repr = Repr::Dense(cm);
        }
    }

    /// Counter at `cells[row]` for each row, added into `acc`.
    pub fn add_counters(&self, cells: &[usize], acc: &mut [u64]) {
        match &self.repr {
            Repr::Sparse { entries, .. } => {
                for &(id, c) in entries {
                    for (row, (a, &cell)) in acc.iter_mut().zip(cells).enumerate() {
                        if self.config.cell(row, id) == cell {
                            *a += c;
                        }
                    }
                }
            }
            Repr::Dense(cm) => {
                for (a, &cell) in acc.iter_mut().zip(cells) {
                    *a += cm.counter(cell);
                }
            }
        }
    }

    pub fn point_query_at(&self, cells: &[usize]) -> u64 {
        match &self.repr {
            Repr::Sparse { entries, .. } if entries.is_empty() => 0,
            Repr::Sparse { .. } => {
                let mut acc = vec![0; cells.len()];
                self.add_counters(cells, &mut acc);
                acc.into_iter().min().unwrap_or(0)
            }
            Repr::Dense(cm) => cm.point_query_at(cells),
        }
    }

    pub fn point_query(&self, key: StreamId) -> u64 {
        self.point_query_at(&self.config.cells_for(key))
    }

    /// The counter grid these items produce.
    pub fn to_dense(&self) -> CountMinSketch {
        self.dense().into_owned()
    }

    /// The counter grid, borrowed when already materialized.
    pub fn dense(&self) -> Cow<'_, CountMinSketch> {
        match &self.repr {
            Repr::Dense(cm) => Cow::Borrowed(cm),
            Repr::Sparse { .. } => {
                let mut s = self.clone();
                s.densify();
                match s.repr {
                    Repr::Dense(cm) => Cow::Owned(cm),
                    Repr::Sparse { .. } => unreachable!("densified"),
                }
            }
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match &self.repr {
            Repr::Dense(cm) => cm.encode_into(out),
            Repr::Sparse { .. } => self.to_dense().encode_into(out),
        }
    }
}

impl From<CountMinSketch> for BucketSketch {
    fn from(cm: CountMinSketch) -> Self {
        Self {
            config: *cm.config(),
            repr: Repr::Dense(cm),
        }
    }
}

impl PartialEq for BucketSketch {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.to_dense() == other.to_dense()
    }
}

impl BucketPayload for BucketSketch {
    fn absorb(&mut self, other: Self) {
        const MSG: &str = "bucket sketches share one config and their totals are bounded by n";
        match (&mut self.repr, other.repr) {
            (Repr::Dense(a), Repr::Dense(b)) => a.merge_from(&b).expect(MSG),
            (_, Repr::Sparse { entries, .. }) => {
                for (id, c) in entries {
                    self.insert(id, c).expect(MSG);
                }
            }
            (Repr::Sparse { entries, .. }, Repr::Dense(mut b)) => {
                for &(id, c) in entries.iter() {
                    b.insert(id, c).expect(MSG);
                }
                self.repr = Repr::Dense(b);
            }
        }
    }
}

/// How a stream's running count is read from the bucket sketches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountEstimator {
    /// Merge the visited sketches into one accumulator and point-query it.
    #[default]
    Union,
    /// Sum the per-bucket point queries of the visited buckets.
    PerBucket,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableBucket {
    cm: CmConfig,
    digest: QDigest<BucketSketch>,
    ids: BTreeSet<StreamId>,
    estimator: CountEstimator,
}

/// Failure of [`VariableBucket::check_invariants`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VbViolation {
    Digest(InvariantViolation),
    SketchTotal {
        bucket: BucketId,
        count: u64,
        sketch_total: u64,
    },
}

impl VariableBucket {
    pub fn new(rho: f64, universe: Universe, cm: CmConfig) -> Result<Self> {
        Self::with_cadence(rho, universe, cm, Cadence::PerInsert)
    }

    pub fn with_cadence(rho: f64, universe: Universe, cm: CmConfig, cadence: Cadence) -> Result<Self> {
        Ok(Self {
            cm,
            digest: QDigest::with_cadence(rho, universe, cadence)?,
            ids: BTreeSet::new(),
            estimator: CountEstimator::default(),
        })
    }

    pub fn with_estimator(mut self, estimator: CountEstimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn set_estimator(&mut self, estimator: CountEstimator) {
        self.estimator = estimator;
    }

    pub fn estimator(&self) -> CountEstimator {
        self.estimator
    }

    pub fn cm_config(&self) -> &CmConfig {
        &self.cm
    }

    pub fn digest(&self) -> &QDigest<BucketSketch> {
        &self.digest
    }

    /// Total items ingested.
    pub fn n(&self) -> u64 {
        self.digest.n()
    }

    pub fn bucket_count(&self) -> usize {
        self.digest.len()
    }

    pub fn compress(&mut self) {
        self.digest.compress();
    }

    /// q-digest invariants plus sketch total == count for every bucket.
    pub fn check_invariants(&self) -> std::result::Result<(), VbViolation> {
        self.digest.check_invariants().map_err(VbViolation::Digest)?;
        for (bucket, node) in self.digest.buckets() {
            if node.payload.total() != node.count {
                return Err(VbViolation::SketchTotal {
                    bucket,
                    count: node.count,
                    sketch_total: node.payload.total(),
                });
            }
        }
        Ok(())
    }

    /// Running estimated count of `id` after each post-order bucket.
    fn running_counts(
        &self,
        order: &[(BucketId, &Node<BucketSketch>)],
        id: StreamId,
    ) -> Vec<u64> {
        let cells = self.cm.cells_for(id);
        let mut out = Vec::with_capacity(order.len());
        match self.estimator {
            CountEstimator::Union => {
                let mut acc = vec![0u64; cells.len()];
                for (_, node) in order {
                    node.payload.add_counters(&cells, &mut acc);
                    out.push(acc.iter().copied().min().unwrap_or(0));
                }
            }
            CountEstimator::PerBucket => {
                let mut acc = 0u64;
                for (_, node) in order {
                    acc += node.payload.point_query_at(&cells);
                    out.push(acc);
                }
            }
        }
        out
    }

    fn quantile_in(
        &self,
        order: &[(BucketId, &Node<BucketSketch>)],
        id: StreamId,
        phi: f64,
    ) -> Result<f64> {
        let running = self.running_counts(order, id);
        let n_hat = running.last().copied().unwrap_or(0);
        if n_hat == 0 {
            return Err(Error::EmptyStream(id));
        }
        let target = phi * n_hat as f64;
        let pos = running
            .iter()
            .position(|&c| c as f64 > target)
            .unwrap_or(running.len() - 1);
        Ok(order[pos].0.hi() as f64)
    }

    fn average_in(&self, order: &[(BucketId, &Node<BucketSketch>)], id: StreamId) -> Result<f64> {
        let n_hat = self.running_counts(order, id).last().copied().unwrap_or(0);
        if n_hat == 0 {
            return Err(Error::EmptyStream(id));
        }
        let cells = self.cm.cells_for(id);
        let weighted: f64 = order
            .iter()
            .map(|(b, node)| {
                let mid = (b.lo() + b.hi()) as f64 / 2.0;
                mid * node.payload.point_query_at(&cells) as f64
            })
            .sum();
        Ok(weighted / n_hat as f64)
    }

    /// The estimate of `weight` for every observed stream, in id order.
    ///
    /// Same answers as the per-stream queries, computed bucket by bucket so
    /// each counter grid is scanned once per pass instead of once per stream.
    pub fn estimates(&self, weight: WeightFunction) -> Result<Vec<(StreamId, f64)>> {
        if !weight.is_sketchable() {
            return Err(unsupported(self.name(), weight));
        }
        let order = self.digest.post_order();
        let ids: Vec<StreamId> = self.ids.iter().copied().collect();
        let depth = self.cm.depth;
        let cells: Vec<usize> = ids.iter().flat_map(|&id| self.cm.cells_for(id)).collect();
        let mut running = vec![0u64; ids.len()];
        let mut acc = vec![0u64; cells.len()];
        // Advance every stream's running count past one bucket.
        let step = |grid: &CountMinSketch, running: &mut [u64], acc: &mut [u64]| match self.estimator {
            CountEstimator::Union => {
                for ((r, a), c) in running
                    .iter_mut()
                    .zip(acc.chunks_exact_mut(depth))
                    .zip(cells.chunks_exact(depth))
                {
                    for (x, &cell) in a.iter_mut().zip(c) {
                        *x += grid.counter(cell);
                    }
                    *r = a.iter().copied().min().unwrap_or(0);
                }
            }
            CountEstimator::PerBucket => {
                for (r, c) in running.iter_mut().zip(cells.chunks_exact(depth)) {
                    *r += grid.point_query_at(c);
                }
            }
        };

        let mut weighted = vec![0.0f64; ids.len()];
        for (b, node) in &order {
            let grid = node.payload.dense();
            step(&grid, &mut running, &mut acc);
            if weight == WeightFunction::Average {
                let mid = (b.lo() + b.hi()) as f64 / 2.0;
                for (w, c) in weighted.iter_mut().zip(cells.chunks_exact(depth)) {
                    *w += mid * grid.point_query_at(c) as f64;
                }
            }
        }
        let n_hat = running;
        let Some(phi) = weight.phi() else {
            return Ok(ids
                .iter()
                .zip(weighted.iter().zip(&n_hat))
                .map(|(&id, (&w, &n))| (id, w / n as f64))
                .collect());
        };

        let last = order.last().map_or(0, |(b, _)| b.hi());
        let mut answer = vec![None; ids.len()];
        let mut running = vec![0u64; ids.len()];
        acc.iter_mut().for_each(|x| *x = 0);
        for (b, node) in &order {
            step(&node.payload.dense(), &mut running, &mut acc);
            for ((a, &r), &n) in answer.iter_mut().zip(&running).zip(&n_hat) {
                if a.is_none() && r as f64 > phi * n as f64 {
                    *a = Some(b.hi());
                }
            }
        }
        Ok(ids
            .iter()
            .zip(answer)
            .map(|(&id, a)| (id, a.unwrap_or(last) as f64))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.memory().total());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.digest.rho().to_le_bytes());
        out.extend_from_slice(&self.digest.universe().top().to_le_bytes());
        out.extend_from_slice(&self.digest.n().to_le_bytes());
        out.extend_from_slice(&(self.cm.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.cm.depth as u32).to_le_bytes());
        out.extend_from_slice(&self.cm.seed.to_le_bytes());
        let cadence = match self.digest.cadence() {
            Cadence::PerInsert => 0,
            Cadence::Batched { every } => every,
        };
        out.extend_from_slice(&cadence.to_le_bytes());
        out.extend_from_slice(&(self.digest.len() as u64).to_le_bytes());
        for (id, node) in self.digest.buckets() {
            out.extend_from_slice(&id.level.to_le_bytes());
            out.extend_from_slice(&id.index.to_le_bytes());
            out.extend_from_slice(&node.count.to_le_bytes());
            node.payload.encode_into(&mut out);
        }
        encode_ids(&self.ids, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = SnapshotReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Snapshot("bad variable-bucket magic"));
        }
        let rho = r.f64()?;
        let universe = Universe::new(r.u64()?).map_err(|_| Error::Snapshot("bad universe"))?;
        let n = r.u64()?;
        let cm = CmConfig::new(r.u32()? as usize, r.u32()? as usize, r.u64()?)
            .map_err(|_| Error::Snapshot("bad count-min shape"))?;
        let cadence = match r.u64()? {
            0 => Cadence::PerInsert,
            every => Cadence::Batched { every },
        };
        let n_buckets = r.u64()?;
        let mut buckets = BTreeMap::new();
        for _ in 0..n_buckets {
            let id = BucketId {
                level: r.u32()?,
                index: r.u64()?,
            };
            let count = r.u64()?;
            let (payload, used) = CountMinSketch::decode(r.rest())?;
            r.advance(used);
            let payload = BucketSketch::from(payload);
            if payload.total() != count || *payload.config() != cm {
                return Err(Error::Snapshot("bucket sketch inconsistent with header"));
            }
            if buckets.insert(id, Node { count, payload }).is_some() {
                return Err(Error::Snapshot("duplicate bucket"));
            }
        }
        let ids = decode_ids(&mut r)?;
        r.finish()?;
        let digest = QDigest::from_parts(rho, universe, cadence, n, buckets)
            .map_err(|_| Error::Snapshot("bad q-digest state"))?;
        Ok(Self {
            cm,
            digest,
            ids,
            estimator: CountEstimator::default(),
        })
    }
}

impl BraidSynopsis for VariableBucket {
    fn name(&self) -> &'static str {
        "varb"
    }

    fn ingest(&mut self, item: &BraidItem) -> Result<()> {
        let cm = self.cm;
        self.digest.insert_with(
            item.value,
            || BucketSketch::new(cm),
            |sketch| sketch.insert(item.stream_id, 1),
        )?;
        self.ids.insert(item.stream_id);
        Ok(())
    }

    fn stream_ids(&self) -> &BTreeSet<StreamId> {
        &self.ids
    }

    fn stream_size(&self, id: StreamId) -> u64 {
        let order = self.digest.post_order();
        self.running_counts(&order, id).last().copied().unwrap_or(0)
    }

    fn quantile(&self, id: StreamId, phi: f64) -> Result<f64> {
        self.quantile_in(&self.digest.post_order(), id, phi)
    }

    /// Midpoint of each bucket weighted by its per-bucket point query, over `n_i`.
    fn average(&self, id: StreamId) -> Result<f64> {
        self.average_in(&self.digest.post_order(), id)
    }

    fn memory(&self) -> MemoryBreakdown {
        let buckets = self.digest.len();
        MemoryBreakdown {
            header: HEADER_BYTES + 8,
            bucket_meta: (BUCKET_META_BYTES + crate::cm::SNAPSHOT_HEADER_BYTES) * buckets,
            counters: 8 * self.cm.cells() * buckets,
            id_set: 8 * self.ids.len(),
        }
    }

    fn topk(&self, weight: WeightFunction, k: usize) -> Result<Vec<(StreamId, f64)>> {
        if k < 1 {
            return Err(Error::InvalidK);
        }
        Ok(select_top_k(self.estimates(weight)?, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn vb(rho: f64, top: u64, width: usize, depth: usize) -> VariableBucket {
        VariableBucket::new(
            rho,
            Universe::new(top).unwrap(),
            CmConfig::new(width, depth, 5).unwrap(),
        )
        .unwrap()
    }

    fn item(id: StreamId, v: u64) -> BraidItem {
        BraidItem::new(id, v, 0)
    }

    /// Reference quantile that materializes the running union sketch.
    fn union_quantile_reference(s: &VariableBucket, id: StreamId, phi: f64) -> Option<u64> {
        let order = s.digest().post_order();
        let mut total = CountMinSketch::new(*s.cm_config());
        for (_, node) in &order {
            total.merge_from(&node.payload.to_dense()).unwrap();
        }
        let n_hat = total.point_query(id);
        if n_hat == 0 {
            return None;
        }
        let mut acc = CountMinSketch::new(*s.cm_config());
        for (b, node) in &order {
            acc.merge_from(&node.payload.to_dense()).unwrap();
            if acc.point_query(id) as f64 > phi * n_hat as f64 {
                return Some(b.hi());
            }
        }
        unreachable!("running union ends at n_hat > phi * n_hat")
    }

    #[test]
    fn first_item_creates_leaf() {
        let mut s = vb(0.1, 16, 8, 2);
        s.ingest(&item(4, 9)).unwrap();
        assert_eq!(s.bucket_count(), 1);
        let node = s.digest().get(BucketId::leaf(9)).unwrap();
        assert_eq!(node.count, 1);
        assert_eq!(node.payload.total(), 1);
        assert_eq!(s.stream_size(4), 1);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut s = vb(0.1, 16, 8, 2);
        assert!(s.ingest(&item(1, 17)).is_err());
        assert!(s.stream_ids().is_empty());
    }

    #[test]
    fn compress_at_zero_threshold_is_noop() {
        let mut s = vb(0.01, 16, 8, 2);
        for v in 1..=16 {
            s.ingest(&item(v % 3, v)).unwrap();
        }
        let before = s.to_bytes();
        s.compress();
        assert_eq!(s.to_bytes(), before);
    }

    #[test]
    fn sibling_leaves_merge_with_their_sketches() {
        // U = 4, rho = 0.9: n = 2 leaves [1,1] (stream 1) and [2,2] (stream 2)
        // plus a heavy [4,4]; T = floor(n * 0.9 / 2).
        let mut s = VariableBucket::with_cadence(
            0.9,
            Universe::new(4).unwrap(),
            CmConfig::new(32, 3, 1).unwrap(),
            Cadence::Batched { every: 1_000 },
        )
        .unwrap();
        s.ingest(&item(1, 1)).unwrap();
        s.ingest(&item(2, 2)).unwrap();
        for _ in 0..6 {
            s.ingest(&item(3, 4)).unwrap();
        }
        // n = 8, T = 3 > 1 + 1 + 0.
        assert_eq!(s.digest().threshold(), 3);
        s.compress();
        assert!(s.digest().get(BucketId::leaf(1)).is_none());
        assert!(s.digest().get(BucketId::leaf(2)).is_none());
        // [1,2] is itself below threshold, so the pair ends in the root [1,4].
        assert!(s.digest().get(BucketId { level: 1, index: 0 }).is_none());
        let parent = s.digest().get(BucketId { level: 2, index: 0 }).unwrap();
        assert_eq!(parent.count, 2);
        assert!(parent.payload.point_query(1) >= 1);
        assert!(parent.payload.point_query(2) >= 1);
        s.check_invariants().unwrap();
    }

    #[test]
    fn small_threshold_replay_keeps_sketch_totals() {
        // n = 15, U = 8, threshold 3, stream ids assigned round-robin.
        let mut s = vb(0.7, 8, 16, 3);
        let values = [1, 1, 1, 2, 3, 3, 3, 4, 5, 6, 6, 7, 8, 8, 8];
        for (j, &v) in values.iter().enumerate() {
            s.ingest(&item(1 + j as u64 % 3, v)).unwrap();
        }
        s.compress();
        assert_eq!(s.digest().threshold(), 3);
        s.check_invariants().unwrap();
        for (_, node) in s.digest().buckets() {
            assert_eq!(node.payload.total(), node.count);
        }
    }

    #[test]
    fn random_braid_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = VariableBucket::with_cadence(
            0.05,
            Universe::new(1024).unwrap(),
            CmConfig::new(32, 4, 9).unwrap(),
            Cadence::batched_for(0.05),
        )
        .unwrap();
        for _ in 0..10_000 {
            s.ingest(&item(rng.random_range(1..=20), rng.random_range(1..=1024)))
                .unwrap();
        }
        s.compress();
        s.check_invariants().unwrap();
        let total: u64 = s.digest().buckets().map(|(_, n)| n.payload.total()).sum();
        assert_eq!(total, 10_000);
    }

    #[test]
    fn interleaved_compress_and_insert_keep_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = vb(0.2, 64, 16, 3);
        for step in 0..1_000 {
            if rng.random_bool(0.1) {
                s.compress();
                s.check_invariants().unwrap();
            } else {
                s.ingest(&item(rng.random_range(1..=5), rng.random_range(1..=64)))
                    .unwrap();
            }
            for (_, node) in s.digest().buckets() {
                assert_eq!(node.payload.total(), node.count, "step {step}");
            }
        }
    }

    #[test]
    fn stream_size_single_stream_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = vb(0.05, 1024, 16, 3);
        assert_eq!(s.stream_size(1), 0);
        for _ in 0..500 {
            s.ingest(&item(7, rng.random_range(1..=1024))).unwrap();
        }
        for est in [CountEstimator::Union, CountEstimator::PerBucket] {
            s.set_estimator(est);
            assert_eq!(s.stream_size(7), 500);
        }
    }

    #[test]
    fn constant_stream_median_in_bucket_of_value() {
        let mut s = vb(0.1, 1024, 16, 3);
        for _ in 0..200 {
            s.ingest(&item(1, 333)).unwrap();
        }
        let q = s.quantile(1, 0.5).unwrap() as u64;
        let hit = s
            .digest()
            .buckets()
            .any(|(b, _)| b.contains(333) && b.hi() == q);
        assert!(hit, "answer {q}");
        let avg = s.average(1).unwrap();
        assert!((avg - 333.0).abs() <= 1.0, "{avg}");
    }

    #[test]
    fn disjoint_streams_stay_in_their_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = vb(0.01, 1024, 64, 4);
        for _ in 0..2_000 {
            s.ingest(&item(1, rng.random_range(1..=100))).unwrap();
            s.ingest(&item(2, rng.random_range(900..=1000))).unwrap();
        }
        for est in [CountEstimator::Union, CountEstimator::PerBucket] {
            s.set_estimator(est);
            let a = s.quantile(1, 0.5).unwrap();
            let b = s.quantile(2, 0.5).unwrap();
            assert!((1.0..=100.0).contains(&a), "{a}");
            assert!((900.0..=1000.0).contains(&b), "{b}");
        }
    }

    #[test]
    fn union_estimator_matches_materialized_union() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = vb(0.05, 256, 8, 3);
        for _ in 0..5_000 {
            let id = rng.random_range(1..=30);
            let v = (id * 8 + rng.random_range(0..16)).min(256);
            s.ingest(&item(id, v)).unwrap();
        }
        s.compress();
        for id in 1..=30 {
            for phi in [0.1, 0.5, 0.95] {
                let fast = s.quantile(id, phi).unwrap() as u64;
                assert_eq!(Some(fast), union_quantile_reference(&s, id, phi));
            }
        }
    }

    #[test]
    fn per_bucket_is_never_looser_than_union() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = vb(0.05, 256, 8, 3);
        let mut exact: HashMap<u64, u64> = HashMap::new();
        for _ in 0..4_000 {
            let id = rng.random_range(1..=40);
            s.ingest(&item(id, rng.random_range(1..=256))).unwrap();
            *exact.entry(id).or_default() += 1;
        }
        for id in 1..=40 {
            s.set_estimator(CountEstimator::Union);
            let union = s.stream_size(id);
            s.set_estimator(CountEstimator::PerBucket);
            let per = s.stream_size(id);
            assert!(per <= union);
            assert!(per >= exact[&id]);
        }
    }

    #[test]
    fn batch_estimates_match_single_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = vb(0.05, 1024, 8, 3);
        for _ in 0..5_000 {
            let id = rng.random_range(1..=25);
            s.ingest(&item(id, (id * 30 + rng.random_range(0..300)).min(1024)))
                .unwrap();
        }
        for estimator in [CountEstimator::Union, CountEstimator::PerBucket] {
            s.set_estimator(estimator);
            for w in [
                WeightFunction::Average,
                WeightFunction::Median,
                WeightFunction::Quantile(0.9),
            ] {
                for (id, est) in s.estimates(w).unwrap() {
                    assert_eq!(est, s.estimate(id, w).unwrap(), "{estimator:?} {w} id {id}");
                }
            }
        }
    }

    #[test]
    fn sparse_sketch_queries_match_dense() {
        let cm = CmConfig::new(16, 4, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for ids in [3usize, SPARSE_LIMIT, SPARSE_LIMIT + 1, 60] {
            let mut sparse = BucketSketch::new(cm);
            let mut dense = CountMinSketch::new(cm);
            for _ in 0..200 {
                let id = rng.random_range(1..=ids as u64);
                sparse.insert(id, 1).unwrap();
                dense.insert(id, 1).unwrap();
            }
            assert_eq!(sparse.to_dense(), dense);
            assert_eq!(sparse.total(), dense.total());
            for id in 1..=80 {
                assert_eq!(sparse.point_query(id), dense.point_query(id));
            }
        }
    }

    #[test]
    fn empty_stream_errors() {
        let s = vb(0.1, 16, 8, 2);
        assert!(matches!(s.quantile(1, 0.5), Err(Error::EmptyStream(1))));
        assert!(matches!(s.average(1), Err(Error::EmptyStream(1))));
    }

    #[test]
    fn topk_is_permutation_for_k_equal_m() {
        let mut s = vb(0.1, 64, 16, 3);
        for id in 1..=6u64 {
            for v in 0..10 {
                s.ingest(&item(id, id * 8 + v % 3)).unwrap();
            }
        }
        let top = s.topk(WeightFunction::Median, 6).unwrap();
        let mut ids: Vec<_> = top.iter().map(|p| p.0).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=6).collect::<Vec<_>>());
        assert!(matches!(
            s.topk(WeightFunction::Spread, 2),
            Err(Error::UnsupportedWeight { .. })
        ));
    }

    #[test]
    fn snapshot_round_trip_and_replay() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let mut s = vb(0.1, 512, 8, 2);
            for _ in 0..2_000 {
                s.ingest(&item(rng.random_range(1..=10), rng.random_range(1..=512)))
                    .unwrap();
            }
            s
        };
        let a = build();
        let b = build();
        let bytes = a.to_bytes();
        assert_eq!(bytes, b.to_bytes());
        assert_eq!(bytes.len(), a.memory().total());
        let back = VariableBucket::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert!(VariableBucket::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn empty_memory_is_header_only() {
        let s = vb(0.1, 512, 64, 64);
        let m = s.memory();
        assert_eq!(m.counter_component(), 0);
        assert_eq!(m.id_set, 0);
        assert_eq!(s.to_bytes().len(), m.header);
    }
}
