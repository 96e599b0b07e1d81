//! ExponentialBucket: fixed geometric value buckets, each with a Count-Min
//! sketch keyed by stream id.
//!
//! Bucket `b` covers `[(1+rho)^b, (1+rho)^(b+1))`; the last one is closed at
//! `U`. Quantiles are reported as the left edge of the bracketing bucket.
//! There is no rank-error guarantee: all items may land in one bucket.

use std::collections::BTreeSet;

use crate::cm::{CmConfig, CountMinSketch, SnapshotReader};
use crate::error::{Error, Result};
use crate::model::{BraidItem, StreamId, Universe};
use crate::model::WeightFunction;
use crate::synopsis::{select_top_k, unsupported, BraidSynopsis, MemoryBreakdown};

const MAGIC: &[u8; 4] = b"EBS1";
/// magic, rho, U, width, depth, seed, bucket count.
const HEADER_BYTES: usize = 4 + 8 + 8 + 4 + 4 + 8 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialBucket {
    rho: f64,
    universe: Universe,
    cm: CmConfig,
    sketches: Vec<CountMinSketch>,
    ids: BTreeSet<StreamId>,
}

impl ExponentialBucket {
    pub fn new(rho: f64, universe: Universe, cm: CmConfig) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bucket ratio rho must be positive, got {rho}"
            )));
        }
        let n_buckets = Self::bucket_count_for(rho, universe);
        Ok(Self {
            rho,
            universe,
            cm,
            sketches: vec![CountMinSketch::new(cm); n_buckets],
            ids: BTreeSet::new(),
        })
    }

    /// `ceil(log_{1+rho} U) + 1`.
    pub fn bucket_count_for(rho: f64, universe: Universe) -> usize {
        let top = universe.top() as f64;
        (top.ln() / rho.ln_1p()).ceil() as usize + 1
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn cm_config(&self) -> &CmConfig {
        &self.cm
    }

    pub fn bucket_count(&self) -> usize {
        self.sketches.len()
    }

    /// Items that fell into bucket `b`, over all streams.
    pub fn bucket_items(&self, b: usize) -> u64 {
        self.sketches[b].total()
    }

    pub fn bucket_sketch(&self, b: usize) -> &CountMinSketch {
        &self.sketches[b]
    }

    /// `floor(ln v / ln(1+rho))`, corrected so a value exactly on a boundary
    /// lands in the higher bucket.
    pub fn bucket_of(&self, value: u64) -> usize {
        let v = value as f64;
        let mut b = (v.ln() / self.rho.ln_1p()).floor().max(0.0) as usize;
        while self.left_edge(b + 1) <= v {
            b += 1;
        }
        while b > 0 && self.left_edge(b) > v {
            b -= 1;
        }
        b.min(self.sketches.len() - 1)
    }

    pub fn left_edge(&self, b: usize) -> f64 {
        (1.0 + self.rho).powf(b as f64)
    }

    pub fn right_edge(&self, b: usize) -> f64 {
        (1.0 + self.rho).powf(b as f64 + 1.0)
    }

    /// Geometric mean of the bucket edges, with the top bucket cut at `U`.
    pub fn representative(&self, b: usize) -> f64 {
        let top = self.universe.top() as f64;
        let lo = self.left_edge(b);
        if lo >= top {
            return lo;
        }
        (lo * self.right_edge(b).min(top)).sqrt()
    }

    fn per_bucket_counts(&self, id: StreamId) -> Vec<u64> {
        let cells = self.cm.cells_for(id);
        self.sketches
            .iter()
            .map(|s| s.point_query_at(&cells))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.memory().total());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.rho.to_le_bytes());
        out.extend_from_slice(&self.universe.top().to_le_bytes());
        out.extend_from_slice(&(self.cm.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.cm.depth as u32).to_le_bytes());
        out.extend_from_slice(&self.cm.seed.to_le_bytes());
        out.extend_from_slice(&(self.sketches.len() as u32).to_le_bytes());
        for s in &self.sketches {
            out.extend_from_slice(&s.total().to_le_bytes());
            s.encode_into(&mut out);
        }
        encode_ids(&self.ids, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = SnapshotReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Snapshot("bad exponential-bucket magic"));
        }
        let rho = r.f64()?;
        let universe = Universe::new(r.u64()?).map_err(|_| Error::Snapshot("bad universe"))?;
        let cm = CmConfig::new(r.u32()? as usize, r.u32()? as usize, r.u64()?)
            .map_err(|_| Error::Snapshot("bad count-min shape"))?;
        let n_buckets = r.u32()? as usize;
        let mut eb = Self::new(rho, universe, cm).map_err(|_| Error::Snapshot("bad rho"))?;
        if n_buckets != eb.sketches.len() {
            return Err(Error::Snapshot("bucket count does not match rho and U"));
        }
        for slot in eb.sketches.iter_mut() {
            let n_b = r.u64()?;
            let (s, used) = CountMinSketch::decode(r.rest())?;
            r.advance(used);
            if s.total() != n_b || *s.config() != cm {
                return Err(Error::Snapshot("bucket sketch inconsistent with header"));
            }
            *slot = s;
        }
        eb.ids = decode_ids(&mut r)?;
        r.finish()?;
        Ok(eb)
    }
}

impl ExponentialBucket {
    /// The estimate of `weight` for every observed stream, in id order.
    ///
    /// Same answers as the per-stream queries, computed bucket by bucket and
    /// skipping empty buckets.
    pub fn estimates(&self, weight: WeightFunction) -> Result<Vec<(StreamId, f64)>> {
        if !weight.is_sketchable() {
            return Err(unsupported(self.name(), weight));
        }
        let ids: Vec<StreamId> = self.ids.iter().copied().collect();
        let depth = self.cm.depth;
        let cells: Vec<usize> = ids.iter().flat_map(|&id| self.cm.cells_for(id)).collect();
        let occupied: Vec<usize> = (0..self.sketches.len())
            .filter(|&b| !self.sketches[b].is_empty())
            .collect();
        let counts = |b: usize| {
            let s = &self.sketches[b];
            cells.chunks_exact(depth).map(move |c| s.point_query_at(c))
        };

        let mut n = vec![0u64; ids.len()];
        let mut weighted = vec![0.0f64; ids.len()];
        for &b in &occupied {
            let rep = self.representative(b);
            for ((n, w), c) in n.iter_mut().zip(weighted.iter_mut()).zip(counts(b)) {
                *n += c;
                *w += rep * c as f64;
            }
        }
        let Some(phi) = weight.phi() else {
            return Ok(ids
                .iter()
                .zip(weighted.iter().zip(&n))
                .map(|(&id, (&w, &n))| (id, w / n as f64))
                .collect());
        };

        let mut answer = vec![None; ids.len()];
        let mut prefix = vec![0u64; ids.len()];
        for &b in &occupied {
            for (((a, p), &n), c) in answer.iter_mut().zip(prefix.iter_mut()).zip(&n).zip(counts(b)) {
                *p += c;
                if a.is_none() && *p > 0 && *p as f64 >= phi * n as f64 {
                    *a = Some(self.left_edge(b));
                }
            }
        }
        let last = self.left_edge(self.sketches.len() - 1);
        Ok(ids
            .iter()
            .zip(answer)
            .map(|(&id, a)| (id, a.unwrap_or(last)))
            .collect())
    }
}

impl BraidSynopsis for ExponentialBucket {
    fn name(&self) -> &'static str {
        "expb"
    }

    fn ingest(&mut self, item: &BraidItem) -> Result<()> {
        self.universe.check(item.value)?;
        let b = self.bucket_of(item.value);
        self.sketches[b].insert(item.stream_id, 1)?;
        self.ids.insert(item.stream_id);
        Ok(())
    }

    fn stream_ids(&self) -> &BTreeSet<StreamId> {
        &self.ids
    }

    /// Sum over buckets of the per-bucket point query.
    fn stream_size(&self, id: StreamId) -> u64 {
        self.per_bucket_counts(id).iter().sum()
    }

    /// Left edge of the first bucket whose prefix count reaches `phi * n_i`.
    fn quantile(&self, id: StreamId, phi: f64) -> Result<f64> {
        let counts = self.per_bucket_counts(id);
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::EmptyStream(id));
        }
        let target = phi * n as f64;
        let mut prefix = 0u64;
        for (b, c) in counts.iter().enumerate() {
            prefix += c;
            if prefix > 0 && prefix as f64 >= target {
                return Ok(self.left_edge(b));
            }
        }
        Ok(self.left_edge(counts.len() - 1))
    }

    fn average(&self, id: StreamId) -> Result<f64> {
        let counts = self.per_bucket_counts(id);
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::EmptyStream(id));
        }
        let weighted: f64 = counts
            .iter()
            .enumerate()
            .map(|(b, &c)| self.representative(b) * c as f64)
            .sum();
        Ok(weighted / n as f64)
    }

    fn memory(&self) -> MemoryBreakdown {
        let per_sketch_meta = 8 + crate::cm::SNAPSHOT_HEADER_BYTES;
        MemoryBreakdown {
            header: HEADER_BYTES + 8,
            bucket_meta: per_sketch_meta * self.sketches.len(),
            counters: 8 * self.cm.cells() * self.sketches.len(),
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

pub(crate) fn encode_ids(ids: &BTreeSet<StreamId>, out: &mut Vec<u8>) {
    out.extend_from_slice(&(ids.len() as u64).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
}

pub(crate) fn decode_ids(r: &mut SnapshotReader<'_>) -> Result<BTreeSet<StreamId>> {
    let n = r.u64()?;
    let mut ids = BTreeSet::new();
    for _ in 0..n {
        if !ids.insert(r.u64()?) {
            return Err(Error::Snapshot("duplicate stream id"));
        }
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eb(rho: f64, top: u64) -> ExponentialBucket {
        ExponentialBucket::new(
            rho,
            Universe::new(top).unwrap(),
            CmConfig::new(64, 4, 7).unwrap(),
        )
        .unwrap()
    }

    fn feed(s: &mut ExponentialBucket, id: StreamId, values: &[u64]) {
        for (i, &v) in values.iter().enumerate() {
            s.ingest(&BraidItem::new(id, v, i as u64)).unwrap();
        }
    }

    #[test]
    fn bucket_assignment() {
        assert_eq!(eb(0.3, 1024).bucket_of(1), 0);
        assert_eq!(eb(1.0, 16).bucket_of(8), 3);
        // floor(ln 100 / ln 1.5) = floor(11.357...) = 11
        assert_eq!(eb(0.5, 1024).bucket_of(100), 11);
    }

    #[test]
    fn boundary_values_go_up() {
        // With ratio 2 every power of two is a left edge.
        let s = eb(1.0, 1 << 16);
        for k in 0..=15u32 {
            let v = 1u64 << k;
            assert_eq!(s.bucket_of(v), k as usize, "value {v}");
            if v > 1 {
                assert_eq!(s.bucket_of(v - 1), k as usize - 1, "value {}", v - 1);
            }
        }
    }

    #[test]
    fn bucket_count_and_monotone_map() {
        let s = eb(0.01, 1 << 16);
        assert_eq!(s.bucket_count(), (65536f64.ln() / 1.01f64.ln()).ceil() as usize + 1);
        let mut last = 0;
        for v in 1..=(1u64 << 16) {
            let b = s.bucket_of(v);
            assert!(b >= last);
            assert!(s.left_edge(b) <= v as f64 * (1.0 + 1e-12));
            last = b;
        }
        assert!(last < s.bucket_count());
    }

    #[test]
    fn empty_and_single_stream_sizes() {
        let mut s = eb(0.1, 1024);
        assert_eq!(s.stream_size(3), 0);
        feed(&mut s, 3, &[5; 50]);
        assert_eq!(s.stream_size(3), 50);
        let total: u64 = (0..s.bucket_count()).map(|b| s.bucket_items(b)).sum();
        assert_eq!(total, 50);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut s = eb(0.1, 1024);
        assert!(s.ingest(&BraidItem::new(1, 0, 0)).is_err());
        assert!(s.ingest(&BraidItem::new(1, 1025, 0)).is_err());
    }

    #[test]
    fn constant_stream_quantile_is_left_edge() {
        let mut s = eb(0.2, 1024);
        feed(&mut s, 1, &[300; 20]);
        let b = s.bucket_of(300);
        for phi in [0.01, 0.5, 0.99] {
            assert_eq!(s.quantile(1, phi).unwrap(), s.left_edge(b));
        }
    }

    #[test]
    fn powers_of_two_median() {
        // Ratio 2: buckets hold 1, 2, 4, 8 separately; prefix counts 1,2,3,4
        // reach 0.5 * 4 = 2 at bucket 1.
        let mut s = eb(1.0, 16);
        feed(&mut s, 1, &[1, 2, 4, 8]);
        assert_eq!(s.quantile(1, 0.5).unwrap(), 2.0);
    }

    #[test]
    fn average_uses_geometric_representatives() {
        let mut s = eb(1.0, 64);
        feed(&mut s, 1, &[2, 2, 8, 8]);
        let avg = s.average(1).unwrap();
        let expect = (2f64 * 4.0).sqrt() * 0.5 + (8f64 * 16.0).sqrt() * 0.5;
        assert!((avg - expect).abs() < 1e-6, "{avg} vs {expect}");
        assert!((avg - 7.07).abs() < 0.01);
        assert!(avg / 5.0 < 2.0);
    }

    #[test]
    fn constant_stream_average_within_sqrt_ratio() {
        let rho = 0.1;
        let mut s = eb(rho, 1024);
        feed(&mut s, 1, &[700; 10]);
        let avg = s.average(1).unwrap();
        assert!(avg / 700.0 <= (1.0 + rho).sqrt() + 1e-9);
        assert!(700.0 / avg <= (1.0 + rho).sqrt() + 1e-9);
    }

    #[test]
    fn batch_estimates_match_single_queries() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut s = eb(0.05, 4096);
        for j in 0..6_000 {
            let id = rng.random_range(1..=30u64);
            let v = (id * 100 + rng.random_range(0..900)).min(4096);
            s.ingest(&BraidItem::new(id, v, j)).unwrap();
        }
        for w in [
            WeightFunction::Average,
            WeightFunction::Median,
            WeightFunction::Quantile(0.05),
            WeightFunction::Quantile(0.95),
        ] {
            for (id, est) in s.estimates(w).unwrap() {
                assert_eq!(est, s.estimate(id, w).unwrap(), "{w} id {id}");
            }
        }
    }

    #[test]
    fn empty_stream_errors() {
        let s = eb(0.1, 1024);
        assert!(matches!(s.quantile(9, 0.5), Err(Error::EmptyStream(9))));
        assert!(matches!(s.average(9), Err(Error::EmptyStream(9))));
    }

    #[test]
    fn topk_routing() {
        let mut s = eb(0.1, 1024);
        feed(&mut s, 1, &[1024; 10]);
        for id in 2..=5 {
            feed(&mut s, id, &[1; 10]);
        }
        let top = s.topk(WeightFunction::Median, 1).unwrap();
        assert_eq!(top[0].0, 1);
        let all = s.topk(WeightFunction::Average, 5).unwrap();
        let mut ids: Vec<_> = all.iter().map(|p| p.0).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
        assert!(matches!(s.topk(WeightFunction::Median, 0), Err(Error::InvalidK)));
        for w in [
            WeightFunction::Max,
            WeightFunction::Min,
            WeightFunction::SecondMax,
            WeightFunction::Spread,
        ] {
            assert!(matches!(s.topk(w, 1), Err(Error::UnsupportedWeight { .. })));
        }
    }

    #[test]
    fn snapshot_round_trip_and_size() {
        let mut s = eb(0.5, 256);
        let empty_bytes = s.to_bytes().len();
        assert_eq!(empty_bytes, s.memory().total());
        assert_eq!(s.memory().id_set, 0);
        feed(&mut s, 4, &[3, 90, 200]);
        feed(&mut s, 2, &[256]);
        let bytes = s.to_bytes();
        assert_eq!(bytes.len(), s.memory().total());
        assert_eq!(bytes.len(), empty_bytes + 16);
        let back = ExponentialBucket::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert!(ExponentialBucket::from_bytes(&bytes[1..]).is_err());
    }
}
