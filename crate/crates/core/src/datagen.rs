//! Seeded braid generators: three synthetic distributions and three
//! set-disjointness constructions with a known YES/NO answer.
//!
//! Synthetic streams draw a per-stream mean, then items from a Normal around
//! it, rounded and clamped to `[1, U]`. Clamping piles a little mass on the
//! edges for means near 1 or U.
//!
//! The disjointness braids are value-shifted into the integer domain: the
//! median construction maps `{0, 1}` to `{1, 2}` and the spread construction
//! maps `{-1, 0, 1}` to `{1, 2, 3}`. The second-max construction is real
//! valued and only usable by the exact oracle.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{BraidItem, StreamId, Universe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interleave {
    #[default]
    RoundRobin,
    UniformRandom,
}

/// How the intra-stream noise parameter `U/20` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScale {
    /// `U/20` is the variance; standard deviation `sqrt(U/20)`.
    #[default]
    Variance,
    /// `U/20` is the standard deviation.
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instance {
    /// Pairwise disjoint sets.
    Yes,
    /// All sets share exactly one element and are otherwise disjoint.
    No,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Uniform,
    /// 10% of streams take means in `[aU, (a+0.2)U]`, the rest in `[1, 0.6U]`.
    Outlier { a: f64 },
    NormalInter,
    AdversarialMedian { t: usize, p: usize, instance: Instance },
    AdversarialSecondMax { t: usize, instance: Instance },
    AdversarialSpread { instance: Instance },
}

impl Distribution {
    pub fn players(&self) -> Option<usize> {
        match *self {
            Self::AdversarialMedian { t, .. } | Self::AdversarialSecondMax { t, .. } => Some(t),
            Self::AdversarialSpread { .. } => Some(2),
            _ => None,
        }
    }

    fn instance(&self) -> Option<Instance> {
        match *self {
            Self::AdversarialMedian { instance, .. }
            | Self::AdversarialSecondMax { instance, .. }
            | Self::AdversarialSpread { instance } => Some(instance),
            _ => None,
        }
    }

    /// Offset added to the construction's raw values.
    pub fn shift(&self) -> i64 {
        match self {
            Self::AdversarialMedian { .. } => 1,
            Self::AdversarialSpread { .. } => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub dist: Distribution,
    pub m: usize,
    /// Items per stream for the synthetic distributions.
    pub items_per_stream: usize,
    pub universe: Universe,
    pub seed: u64,
    pub interleave: Interleave,
    pub noise: NoiseScale,
    /// Stream sizes are drawn from `items * (1 + u)`, `u` uniform in `[-jitter, jitter]`.
    pub jitter: f64,
    /// Player sets for the disjointness braids; drawn from the seed when `None`.
    pub sets: Option<Vec<Vec<StreamId>>>,
}

impl GenSpec {
    pub fn new(dist: Distribution, m: usize, items_per_stream: usize, seed: u64) -> Self {
        Self {
            dist,
            m,
            items_per_stream,
            universe: Universe::default(),
            seed,
            interleave: Interleave::default(),
            noise: NoiseScale::default(),
            jitter: 0.0,
            sets: None,
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical spec line.
    pub fn hash(&self) -> String {
        spec_hash(&self.to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        if !(self.jitter.is_finite() && (0.0..1.0).contains(&self.jitter)) {
            return Err(Error::InvalidParameter(format!(
                "jitter must lie in [0, 1), got {}",
                self.jitter
            )));
        }
        match self.dist {
            Distribution::Uniform | Distribution::NormalInter => self.check_items(),
            Distribution::Outlier { a } => {
                if !(a > 0.0 && a <= 0.8) {
                    return Err(Error::InvalidParameter(format!(
                        "outlier parameter a must lie in (0, 0.8], got {a}"
                    )));
                }
                self.check_items()
            }
            Distribution::AdversarialMedian { t, p, .. } => {
                if p < 1 {
                    return Err(Error::InvalidParameter("p must be at least 1".into()));
                }
                self.check_players(t)
            }
            Distribution::AdversarialSecondMax { t, .. } => self.check_players(t),
            Distribution::AdversarialSpread { .. } => self.check_players(2),
        }
    }

    fn check_items(&self) -> Result<()> {
        if self.items_per_stream < 1 {
            return Err(Error::InvalidParameter("items per stream must be at least 1".into()));
        }
        if self.sets.is_some() {
            return Err(Error::InvalidParameter(
                "player sets only apply to the disjointness braids".into(),
            ));
        }
        Ok(())
    }

    fn check_players(&self, t: usize) -> Result<()> {
        if t < 1 {
            return Err(Error::InvalidParameter("t must be at least 1".into()));
        }
        if let (Some(sets), Some(instance)) = (&self.sets, self.dist.instance()) {
            if sets.len() != t {
                return Err(Error::PromiseViolation(format!(
                    "expected {t} player sets, got {}",
                    sets.len()
                )));
            }
            check_promise(sets, self.m, instance)?;
        }
        Ok(())
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dist = match self.dist {
            Distribution::Uniform => "uniform".to_string(),
            Distribution::Outlier { a } => format!("outlier a={a}"),
            Distribution::NormalInter => "normal".to_string(),
            Distribution::AdversarialMedian { t, p, instance } => {
                format!("adv-median t={t} p={p} instance={}", instance_token(instance))
            }
            Distribution::AdversarialSecondMax { t, instance } => {
                format!("adv-secondmax t={t} instance={}", instance_token(instance))
            }
            Distribution::AdversarialSpread { instance } => {
                format!("adv-spread instance={}", instance_token(instance))
            }
        };
        write!(
            f,
            "dist={dist} m={} items={} U={} seed={} interleave={} noise={} jitter={}",
            self.m,
            self.items_per_stream,
            self.universe.top(),
            self.seed,
            match self.interleave {
                Interleave::RoundRobin => "rr",
                Interleave::UniformRandom => "random",
            },
            match self.noise {
                NoiseScale::Variance => "variance",
                NoiseScale::StdDev => "stddev",
            },
            self.jitter,
        )?;
        if let Some(sets) = &self.sets {
            let sets: Vec<String> = sets
                .iter()
                .map(|s| s.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
                .collect();
            write!(f, " sets={}", sets.join("|"))?;
        }
        Ok(())
    }
}

/// First 16 hex digits of the SHA-256 of a spec line.
pub fn spec_hash(line: &str) -> String {
    let digest = Sha256::digest(line.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn instance_token(instance: Instance) -> &'static str {
    match instance {
        Instance::Yes => "yes",
        Instance::No => "no",
    }
}

/// Ground truth attached to a generated braid.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    None,
    /// Ids of the outlier streams.
    Outliers(Vec<StreamId>),
    Disjointness {
        instance: Instance,
        sets: Vec<Vec<StreamId>>,
        /// The common element of a NO instance.
        intersection: Option<StreamId>,
    },
}

/// A generated braid in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct Braid {
    pub m: usize,
    pub universe: Universe,
    pub shift: i64,
    /// Values are not integers in `[1, U]`; only the oracle can read them.
    pub real: bool,
    pub records: Vec<(StreamId, f64)>,
    pub label: Label,
}

impl Braid {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Integer items for the sketches; fails on a real-valued braid.
    pub fn items(&self) -> Result<Vec<BraidItem>> {
        if self.real {
            return Err(Error::InvalidParameter(
                "real-valued braids can only be evaluated by the oracle".into(),
            ));
        }
        Ok(self
            .records
            .iter()
            .enumerate()
            .map(|(j, &(id, v))| BraidItem::new(id, v as u64, j as u64))
            .collect())
    }
}

pub fn generate(spec: &GenSpec) -> Result<Braid> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.dist {
        Distribution::Uniform | Distribution::Outlier { .. } | Distribution::NormalInter => {
            synthetic(spec, &mut rng)
        }
        _ => adversarial(spec, &mut rng),
    }
}

fn synthetic(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Result<Braid> {
    let u = spec.universe.top() as f64;
    let clamp = |x: f64| x.round().clamp(1.0, u);
    let mut label = Label::None;
    let means: Vec<f64> = match spec.dist {
        Distribution::Uniform => (0..spec.m).map(|_| rng.random_range(1.0..=u)).collect(),
        Distribution::Outlier { a } => {
            let count = (spec.m as f64 / 10.0).round() as usize;
            let outliers: BTreeSet<usize> = index::sample(rng, spec.m, count).into_iter().collect();
            label = Label::Outliers(outliers.iter().map(|&i| i as StreamId + 1).collect());
            (0..spec.m)
                .map(|i| {
                    if outliers.contains(&i) {
                        rng.random_range(a * u..=(a + 0.2) * u)
                    } else {
                        rng.random_range(1.0..=0.6 * u)
                    }
                })
                .collect()
        }
        Distribution::NormalInter => {
            let normal = Normal::new(u / 2.0, u / 4.0).expect("positive standard deviation");
            (0..spec.m).map(|_| normal.sample(rng).clamp(1.0, u)).collect()
        }
        _ => unreachable!("adversarial kinds are generated separately"),
    };
    let sd = match spec.noise {
        NoiseScale::Variance => (u / 20.0).sqrt(),
        NoiseScale::StdDev => u / 20.0,
    };
    let streams: Vec<Vec<f64>> = means
        .iter()
        .map(|&mu| {
            let n = stream_size(spec, rng);
            let noise = Normal::new(mu, sd).expect("positive standard deviation");
            (0..n).map(|_| clamp(noise.sample(rng))).collect()
        })
        .collect();
    Ok(Braid {
        m: spec.m,
        universe: spec.universe,
        shift: 0,
        real: false,
        records: interleave(streams, spec.interleave, rng),
        label,
    })
}

fn stream_size(spec: &GenSpec, rng: &mut ChaCha8Rng) -> usize {
    if spec.jitter == 0.0 {
        return spec.items_per_stream;
    }
    let f = 1.0 + rng.random_range(-spec.jitter..=spec.jitter);
    ((spec.items_per_stream as f64 * f).round() as usize).max(1)
}

/// Merge per-stream sequences (stream `i` has id `i + 1`) into one braid,
/// keeping each stream's internal order.
fn interleave(streams: Vec<Vec<f64>>, mode: Interleave, rng: &mut ChaCha8Rng) -> Vec<(StreamId, f64)> {
    let total = streams.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    match mode {
        Interleave::RoundRobin => {
            let longest = streams.iter().map(Vec::len).max().unwrap_or(0);
            for j in 0..longest {
                for (i, s) in streams.iter().enumerate() {
                    if let Some(&v) = s.get(j) {
                        out.push((i as StreamId + 1, v));
                    }
                }
            }
        }
        Interleave::UniformRandom => {
            let mut order: Vec<usize> = streams
                .iter()
                .enumerate()
                .flat_map(|(i, s)| std::iter::repeat_n(i, s.len()))
                .collect();
            order.shuffle(rng);
            let mut next = vec![0usize; streams.len()];
            for i in order {
                out.push((i as StreamId + 1, streams[i][next[i]]));
                next[i] += 1;
            }
        }
    }
    out
}

/// Check the disjointness promise over ids `1..=m`.
pub fn check_promise(sets: &[Vec<StreamId>], m: usize, instance: Instance) -> Result<()> {
    let mut seen = BTreeSet::new();
    let mut shared = BTreeSet::new();
    for (j, set) in sets.iter().enumerate() {
        let mut own = BTreeSet::new();
        for &id in set {
            if id < 1 || id > m as StreamId {
                return Err(Error::PromiseViolation(format!(
                    "player {} holds {id}, outside 1..={m}",
                    j + 1
                )));
            }
            if !own.insert(id) {
                return Err(Error::PromiseViolation(format!("player {} repeats {id}", j + 1)));
            }
            if !seen.insert(id) {
                shared.insert(id);
            }
        }
    }
    match instance {
        Instance::Yes if !shared.is_empty() => Err(Error::PromiseViolation(format!(
            "YES instance has a shared element {}",
            shared.first().unwrap()
        ))),
        Instance::No => {
            let common = common_element(sets);
            match common {
                Some(x) if shared.len() == 1 && shared.contains(&x) => Ok(()),
                _ => Err(Error::PromiseViolation(
                    "NO instance needs one element common to all sets and no other overlap"
                        .into(),
                )),
            }
        }
        Instance::Yes => Ok(()),
    }
}

fn common_element(sets: &[Vec<StreamId>]) -> Option<StreamId> {
    let (first, rest) = sets.split_first()?;
    let common: Vec<StreamId> = first
        .iter()
        .copied()
        .filter(|x| rest.iter().all(|s| s.contains(x)))
        .collect();
    match common.as_slice() {
        [x] => Some(*x),
        _ => None,
    }
}

/// Random sets respecting the promise: every other stream goes to one
/// player or to none, uniformly. Sets of the spread braid are kept nonempty.
fn random_sets(m: usize, t: usize, instance: Instance, nonempty: bool, rng: &mut ChaCha8Rng) -> Vec<Vec<StreamId>> {
    loop {
        let mut sets = vec![Vec::new(); t];
        let common = match instance {
            Instance::No => Some(rng.random_range(1..=m as StreamId)),
            Instance::Yes => None,
        };
        for id in 1..=m as StreamId {
            if Some(id) == common {
                sets.iter_mut().for_each(|s| s.push(id));
                continue;
            }
            let owner = rng.random_range(0..=t);
            if owner < t {
                sets[owner].push(id);
            }
        }
        if !nonempty || sets.iter().all(|s| !s.is_empty()) {
            return sets;
        }
    }
}

/// Raw (unshifted) value each median-construction player adds to each
/// stream: 1 if the stream is in its set, else 0. Row `j` is player `j + 1`.
pub fn median_player_rows(sets: &[Vec<StreamId>], m: usize) -> Vec<Vec<u8>> {
    sets.iter()
        .map(|set| (1..=m as StreamId).map(|id| u8::from(set.contains(&id))).collect())
        .collect()
}

fn adversarial(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Result<Braid> {
    let m = spec.m;
    let t = spec.dist.players().expect("adversarial kind");
    let instance = spec.dist.instance().expect("adversarial kind");
    let nonempty = matches!(spec.dist, Distribution::AdversarialSpread { .. });
    if nonempty && m < 2 && instance == Instance::Yes {
        return Err(Error::InvalidParameter(
            "a YES spread instance with nonempty sets needs m >= 2".into(),
        ));
    }
    let sets = match &spec.sets {
        Some(s) => s.clone(),
        None => random_sets(m, t, instance, nonempty, rng),
    };
    let shift = spec.dist.shift() as f64;
    // Each phase is a list of rounds; a round holds at most one value per stream.
    let mut phases: Vec<Vec<Vec<Option<f64>>>> = Vec::new();
    let real = matches!(spec.dist, Distribution::AdversarialSecondMax { .. });
    match spec.dist {
        Distribution::AdversarialMedian { p, .. } => {
            phases.push(vec![vec![Some(shift); m]; p]);
            for row in median_player_rows(&sets, m) {
                let round: Vec<Option<f64>> = row.iter().map(|&b| Some(f64::from(b) + shift)).collect();
                phases.push(vec![round; p]);
            }
        }
        Distribution::AdversarialSecondMax { .. } => {
            for (j, set) in sets.iter().enumerate() {
                let hi = (j + 2) as f64;
                let member = |id: usize| set.contains(&(id as StreamId + 1));
                let first = (0..m).map(|i| Some(if member(i) { hi } else { 0.0 })).collect();
                let second = (0..m).map(|i| Some(if member(i) { 1.0 / hi } else { 0.0 })).collect();
                phases.push(vec![first, second]);
            }
        }
        Distribution::AdversarialSpread { .. } => {
            phases.push(vec![vec![Some(shift); m]]);
            for (set, raw) in sets.iter().zip([-1.0, 1.0]) {
                let round = (0..m)
                    .map(|i| set.contains(&(i as StreamId + 1)).then_some(raw + shift))
                    .collect();
                phases.push(vec![round]);
            }
        }
        _ => unreachable!("synthetic kinds are generated separately"),
    }
    let mut records = Vec::new();
    for rounds in phases {
        let mut phase: Vec<(StreamId, f64)> = Vec::new();
        for round in rounds {
            for (i, v) in round.into_iter().enumerate() {
                if let Some(v) = v {
                    phase.push((i as StreamId + 1, v));
                }
            }
        }
        if spec.interleave == Interleave::UniformRandom {
            phase.shuffle(rng);
        }
        records.extend(phase);
    }
    let intersection = match instance {
        Instance::No => common_element(&sets),
        Instance::Yes => None,
    };
    Ok(Braid {
        m,
        universe: spec.universe,
        shift: spec.dist.shift(),
        real,
        records,
        label: Label::Disjointness {
            instance,
            sets,
            intersection,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightFunction;
    use crate::oracle::MaterializedBraid;

    fn worked_sets() -> Vec<Vec<StreamId>> {
        vec![vec![2], vec![2, 4], vec![1, 2, 5], vec![2, 6]]
    }

    fn oracle(b: &Braid) -> MaterializedBraid {
        MaterializedBraid::from_pairs(b.records.iter().copied())
    }

    fn max_weight(b: &Braid, w: WeightFunction) -> f64 {
        oracle(b).exact_topk(w, 1).unwrap()[0].1
    }

    #[test]
    fn worked_example_player_rows() {
        let rows = median_player_rows(&worked_sets(), 6);
        assert_eq!(
            rows,
            vec![
                vec![0, 1, 0, 0, 0, 0],
                vec![0, 1, 0, 1, 0, 0],
                vec![1, 1, 0, 0, 1, 0],
                vec![0, 1, 0, 0, 0, 1],
            ]
        );
    }

    #[test]
    fn worked_example_braid() {
        let mut spec = GenSpec::new(
            Distribution::AdversarialMedian { t: 4, p: 1, instance: Instance::No },
            6,
            0,
            1,
        );
        spec.sets = Some(worked_sets());
        let b = generate(&spec).unwrap();
        assert_eq!(b.len(), 6 * 5);
        // The four player rounds follow the initial round, stream by stream.
        let rows: Vec<Vec<f64>> = b.records[6..].chunks(6).map(|c| c.iter().map(|r| r.1).collect()).collect();
        assert_eq!(rows[2], vec![2.0, 2.0, 1.0, 1.0, 2.0, 1.0]);
        assert!(rows.iter().all(|r| r[1] == 2.0));
        assert_eq!(
            b.label,
            Label::Disjointness {
                instance: Instance::No,
                sets: worked_sets(),
                intersection: Some(2)
            }
        );
    }

    #[test]
    fn median_instances_separate() {
        for seed in 0..5 {
            let yes = GenSpec::new(
                Distribution::AdversarialMedian { t: 5, p: 3, instance: Instance::Yes },
                40,
                0,
                seed,
            );
            let b = generate(&yes).unwrap();
            assert_eq!(max_weight(&b, WeightFunction::Median), 1.0);
            let no = GenSpec {
                dist: Distribution::AdversarialMedian { t: 5, p: 3, instance: Instance::No },
                ..yes
            };
            let b = generate(&no).unwrap();
            let Label::Disjointness { intersection: Some(x), .. } = b.label else {
                panic!("NO instance without intersection");
            };
            assert_eq!(oracle(&b).exact_weight(x, WeightFunction::Median).unwrap(), 2.0);
            assert!(oracle(&b).stream_ids().all(|id| oracle(&b).stream(id).len() == 18));
        }
    }

    #[test]
    fn second_max_instances_separate() {
        let yes = GenSpec::new(Distribution::AdversarialSecondMax { t: 4, instance: Instance::Yes }, 30, 0, 2);
        let b = generate(&yes).unwrap();
        assert!(b.real);
        assert!(max_weight(&b, WeightFunction::SecondMax) < 1.0);
        assert!(oracle(&b).stream_ids().all(|id| oracle(&b).stream(id).len() == 8));
        let no = GenSpec {
            dist: Distribution::AdversarialSecondMax { t: 4, instance: Instance::No },
            ..yes
        };
        let b = generate(&no).unwrap();
        let Label::Disjointness { intersection: Some(x), .. } = b.label else {
            panic!("NO instance without intersection");
        };
        assert_eq!(oracle(&b).exact_weight(x, WeightFunction::SecondMax).unwrap(), 4.0);
        assert!(b.items().is_err());
    }

    #[test]
    fn spread_instances_separate() {
        for seed in 0..5 {
            let yes = GenSpec::new(Distribution::AdversarialSpread { instance: Instance::Yes }, 10, 0, seed);
            let b = generate(&yes).unwrap();
            assert_eq!(max_weight(&b, WeightFunction::Spread), 1.0);
            let starts: Vec<f64> = b.records[..10].iter().map(|r| r.1).collect();
            assert_eq!(starts, vec![2.0; 10]);
            let no = GenSpec {
                dist: Distribution::AdversarialSpread { instance: Instance::No },
                ..yes
            };
            assert_eq!(max_weight(&generate(&no).unwrap(), WeightFunction::Spread), 2.0);
        }
    }

    #[test]
    fn promise_violations() {
        let sets = vec![vec![1, 2], vec![2, 3]];
        assert!(check_promise(&sets, 3, Instance::Yes).is_err());
        assert!(check_promise(&sets, 3, Instance::No).is_ok());
        assert!(check_promise(&[vec![1, 2], vec![1, 2]], 3, Instance::No).is_err());
        assert!(check_promise(&[vec![1], vec![2]], 3, Instance::No).is_err());
        assert!(check_promise(&[vec![4]], 3, Instance::Yes).is_err());
        let mut spec = GenSpec::new(Distribution::AdversarialSpread { instance: Instance::Yes }, 3, 0, 0);
        spec.sets = Some(sets);
        assert!(matches!(generate(&spec), Err(Error::PromiseViolation(_))));
    }

    #[test]
    fn outlier_parameter_checked() {
        for a in [0.0, 0.81, -0.1] {
            let spec = GenSpec::new(Distribution::Outlier { a }, 10, 5, 0);
            assert!(generate(&spec).is_err());
        }
    }

    #[test]
    fn synthetic_shape_and_range() {
        let spec = GenSpec::new(Distribution::Uniform, 1, 1, 9);
        let b = generate(&spec).unwrap();
        assert_eq!(b.len(), 1);
        assert!((1.0..=65536.0).contains(&b.records[0].1));
        let mut spec = GenSpec::new(Distribution::NormalInter, 50, 40, 9);
        spec.noise = NoiseScale::StdDev;
        let b = generate(&spec).unwrap();
        assert_eq!(b.len(), 2000);
        assert!(b.records.iter().all(|&(_, v)| (1.0..=65536.0).contains(&v) && v.fract() == 0.0));
    }

    #[test]
    fn ten_percent_outliers() {
        let spec = GenSpec::new(Distribution::Outlier { a: 0.8 }, 1000, 3, 4);
        let b = generate(&spec).unwrap();
        let Label::Outliers(ids) = &b.label else { panic!("no outlier label") };
        assert_eq!(ids.len(), 100);
        let o = oracle(&b);
        // Outlier means start at 0.8U; non-outliers end at 0.6U, far beyond the noise.
        for id in o.stream_ids() {
            let avg = o.exact_weight(id, WeightFunction::Average).unwrap();
            assert_eq!(ids.contains(&id), avg > 0.7 * 65536.0, "stream {id} avg {avg}");
        }
    }

    #[test]
    fn overlapping_outlier_ranges_interleave() {
        let spec = GenSpec::new(Distribution::Outlier { a: 0.3 }, 1000, 20, 5);
        let b = generate(&spec).unwrap();
        let Label::Outliers(ids) = &b.label else { panic!("no outlier label") };
        let o = oracle(&b);
        let med = |id| o.exact_weight(id, WeightFunction::Median).unwrap();
        let lowest_outlier = ids.iter().map(|&id| med(id)).fold(f64::INFINITY, f64::min);
        let highest_normal = o
            .stream_ids()
            .filter(|id| !ids.contains(id))
            .map(med)
            .fold(0.0, f64::max);
        assert!(lowest_outlier < highest_normal);
    }

    #[test]
    fn normal_means_center() {
        let spec = GenSpec::new(Distribution::NormalInter, 1000, 1, 11);
        let b = generate(&spec).unwrap();
        let mean = b.records.iter().map(|r| r.1).sum::<f64>() / 1000.0;
        // Standard error of the mean of means, inflated slightly for the item noise.
        let se = (16384.0f64.powi(2) + 65536.0 / 20.0).sqrt() / 1000f64.sqrt();
        assert!((mean - 32768.0).abs() <= 3.0 * se, "mean {mean}");
    }

    #[test]
    fn deterministic_by_seed() {
        let mut spec = GenSpec::new(Distribution::Outlier { a: 0.5 }, 30, 20, 42);
        spec.interleave = Interleave::UniformRandom;
        spec.jitter = 0.2;
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = GenSpec { seed: 43, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
        assert_ne!(spec.hash(), other.hash());
    }

    #[test]
    fn round_robin_prefix_balance() {
        let spec = GenSpec::new(Distribution::Uniform, 7, 13, 1);
        let b = generate(&spec).unwrap();
        let mut sizes = [0usize; 7];
        for &(id, _) in &b.records {
            sizes[id as usize - 1] += 1;
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1);
        }
        let spec = GenSpec::new(Distribution::AdversarialMedian { t: 3, p: 4, instance: Instance::No }, 9, 0, 1);
        let b = generate(&spec).unwrap();
        let mut sizes = [0usize; 9];
        for &(id, _) in &b.records {
            sizes[id as usize - 1] += 1;
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn jitter_varies_sizes() {
        let mut spec = GenSpec::new(Distribution::Uniform, 50, 100, 3);
        spec.jitter = 0.3;
        let o = oracle(&generate(&spec).unwrap());
        let sizes: BTreeSet<usize> = o.stream_ids().map(|id| o.stream(id).len()).collect();
        assert!(sizes.len() > 1);
        assert!(sizes.iter().all(|&n| (70..=130).contains(&n)));
    }
}
