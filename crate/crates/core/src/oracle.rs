//! Exact weights over a fully materialized braid.
//!
//! Every stream's values are kept sorted, so each weight is a lookup. Values
//! are held as `f64`: integer braids convert exactly, and the real-valued
//! second-max construction fits without a separate path.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::model::{median_rank, quantile_rank, BraidItem, StreamId, WeightFunction};
use crate::synopsis::desc_then_id;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaterializedBraid {
    streams: BTreeMap<StreamId, Vec<f64>>,
    n: u64,
}

impl MaterializedBraid {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (StreamId, f64)>) -> Self {
        let mut streams: BTreeMap<StreamId, Vec<f64>> = BTreeMap::new();
        let mut n = 0;
        for (id, v) in pairs {
            streams.entry(id).or_default().push(v);
            n += 1;
        }
        for values in streams.values_mut() {
            values.sort_by(f64::total_cmp);
        }
        Self { streams, n }
    }

    pub fn from_items<'a>(items: impl IntoIterator<Item = &'a BraidItem>) -> Self {
        Self::from_pairs(items.into_iter().map(|it| (it.stream_id, it.value as f64)))
    }

    /// Number of streams with at least one item.
    pub fn m(&self) -> usize {
        self.streams.len()
    }

    /// Total number of items.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn stream_ids(&self) -> impl Iterator<Item = StreamId> + '_ {
        self.streams.keys().copied()
    }

    /// Ascending values of one stream; empty if the id was never seen.
    pub fn stream(&self, id: StreamId) -> &[f64] {
        self.streams.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn exact_weight(&self, id: StreamId, weight: WeightFunction) -> Result<f64> {
        let s = self.stream(id);
        let n = s.len();
        if n == 0 {
            return Err(Error::EmptyStream(id));
        }
        Ok(match weight {
            WeightFunction::Average => s.iter().sum::<f64>() / n as f64,
            WeightFunction::Median => s[median_rank(n) - 1],
            WeightFunction::Quantile(phi) => s[quantile_rank(phi, n) - 1],
            WeightFunction::Max => s[n - 1],
            WeightFunction::Min => s[0],
            WeightFunction::SecondMax => {
                if n < 2 {
                    return Err(Error::SingletonStream(id));
                }
                s[n - 2]
            }
            WeightFunction::Spread => s[n - 1] - s[0],
        })
    }

    /// All streams ordered by exact weight, largest first, except for `Min`
    /// where the smallest minimum ranks first. Ties go to the smaller id.
    pub fn ranking(&self, weight: WeightFunction) -> Result<Ranking> {
        let mut order = self
            .stream_ids()
            .map(|id| Ok((id, self.exact_weight(id, weight)?)))
            .collect::<Result<Vec<_>>>()?;
        if weight == WeightFunction::Min {
            order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        } else {
            order.sort_by(|a, b| desc_then_id(*a, *b));
        }
        let rank_of = order
            .iter()
            .enumerate()
            .map(|(i, &(id, _))| (id, i + 1))
            .collect();
        Ok(Ranking { order, rank_of })
    }

    pub fn exact_topk(&self, weight: WeightFunction, k: usize) -> Result<Vec<(StreamId, f64)>> {
        if k < 1 {
            return Err(Error::InvalidK);
        }
        let mut order = self.ranking(weight)?.order;
        order.truncate(k);
        Ok(order)
    }
}

/// Exact ordering of every stream, with a 1-based rank lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    order: Vec<(StreamId, f64)>,
    rank_of: HashMap<StreamId, usize>,
}

impl Ranking {
    pub fn order(&self) -> &[(StreamId, f64)] {
        &self.order
    }

    pub fn top(&self, k: usize) -> &[(StreamId, f64)] {
        &self.order[..k.min(self.order.len())]
    }

    pub fn rank(&self, id: StreamId) -> Option<usize> {
        self.rank_of.get(&id).copied()
    }

    pub fn weight(&self, id: StreamId) -> Option<f64> {
        self.rank(id).map(|r| self.order[r - 1].1)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(values: &[f64]) -> MaterializedBraid {
        MaterializedBraid::from_pairs(values.iter().map(|&v| (1, v)))
    }

    #[test]
    fn weights_of_one_to_four() {
        let b = single(&[3.0, 1.0, 4.0, 2.0]);
        assert_eq!(b.exact_weight(1, WeightFunction::Median).unwrap(), 2.0);
        assert_eq!(b.exact_weight(1, WeightFunction::Spread).unwrap(), 3.0);
        assert_eq!(b.exact_weight(1, WeightFunction::Average).unwrap(), 2.5);
        assert_eq!(b.exact_weight(1, WeightFunction::Quantile(0.75)).unwrap(), 3.0);
        assert_eq!(b.exact_weight(1, WeightFunction::Max).unwrap(), 4.0);
        assert_eq!(b.exact_weight(1, WeightFunction::Min).unwrap(), 1.0);
    }

    #[test]
    fn second_max_real_valued() {
        let b = single(&[1.0 / 3.0, 3.0, 4.0, 0.25]);
        assert_eq!(b.exact_weight(1, WeightFunction::SecondMax).unwrap(), 3.0);
        let dup = single(&[5.0, 5.0, 1.0]);
        assert_eq!(dup.exact_weight(1, WeightFunction::SecondMax).unwrap(), 5.0);
    }

    #[test]
    fn second_max_rejects_singleton_and_empty() {
        let b = single(&[7.0]);
        assert!(matches!(
            b.exact_weight(1, WeightFunction::SecondMax),
            Err(Error::SingletonStream(1))
        ));
        assert!(matches!(
            b.exact_weight(2, WeightFunction::Max),
            Err(Error::EmptyStream(2))
        ));
    }

    #[test]
    fn equal_medians_order_by_id() {
        let b = MaterializedBraid::from_pairs([(9, 5.0), (4, 5.0), (7, 1.0)]);
        let top = b.exact_topk(WeightFunction::Median, 3).unwrap();
        assert_eq!(top, vec![(4, 5.0), (9, 5.0), (7, 1.0)]);
        assert!(matches!(b.exact_topk(WeightFunction::Median, 0), Err(Error::InvalidK)));
    }

    #[test]
    fn ranking_lookup() {
        let b = MaterializedBraid::from_pairs([(1, 1.0), (2, 3.0), (3, 2.0)]);
        let r = b.ranking(WeightFunction::Max).unwrap();
        assert_eq!(r.rank(2), Some(1));
        assert_eq!(r.rank(3), Some(2));
        assert_eq!(r.rank(1), Some(3));
        assert_eq!(r.rank(4), None);
        assert_eq!(r.weight(3), Some(2.0));
    }

    proptest! {
        #[test]
        fn max_is_negated_min_of_negation(
            pairs in prop::collection::vec((1u64..6, -1e3f64..1e3), 1..60)
        ) {
            let b = MaterializedBraid::from_pairs(pairs.iter().copied());
            let neg = MaterializedBraid::from_pairs(pairs.iter().map(|&(i, v)| (i, -v)));
            for id in b.stream_ids() {
                let max = b.exact_weight(id, WeightFunction::Max).unwrap();
                let min = neg.exact_weight(id, WeightFunction::Min).unwrap();
                prop_assert_eq!(max, -min);
            }
        }

        #[test]
        fn ranking_is_a_total_order(
            pairs in prop::collection::vec((1u64..20, 1u64..10), 1..100)
        ) {
            let b = MaterializedBraid::from_pairs(pairs.iter().map(|&(i, v)| (i, v as f64)));
            let r = b.ranking(WeightFunction::Median).unwrap();
            prop_assert_eq!(r.len(), b.m());
            for w in r.order().windows(2) {
                let (a, c) = (w[0], w[1]);
                prop_assert!(a.1 > c.1 || (a.1 == c.1 && a.0 < c.0));
            }
        }
    }
}
