//! Shared vocabulary: braid items, weight functions, approximation
//! parameters and the exact rank function every error measurement uses.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type StreamId = u64;

/// Default value-range top, `2^16`.
pub const DEFAULT_UNIVERSE: u64 = 1 << 16;

/// One arrival in the braid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BraidItem {
    pub stream_id: StreamId,
    pub value: u64,
    pub arrival_index: u64,
}

impl BraidItem {
    pub fn new(stream_id: StreamId, value: u64, arrival_index: u64) -> Self {
        Self {
            stream_id,
            value,
            arrival_index,
        }
    }
}

/// The integer value domain `[1, U]`, `U` a power of two and at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Universe(u64);

impl Universe {
    pub fn new(top: u64) -> Result<Self> {
        if top < 2 || !top.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "universe top {top} must be a power of two >= 2"
            )));
        }
        Ok(Self(top))
    }

    pub fn top(self) -> u64 {
        self.0
    }

    /// `log2 U`, the depth of the dyadic bucket tree.
    pub fn log2(self) -> u32 {
        self.0.trailing_zeros()
    }

    pub fn contains(self, value: u64) -> bool {
        (1..=self.0).contains(&value)
    }

    pub fn check(self, value: u64) -> Result<u64> {
        if self.contains(value) {
            Ok(value)
        } else {
            Err(Error::ValueOutOfRange {
                value,
                universe: self.0,
            })
        }
    }
}

impl Default for Universe {
    fn default() -> Self {
        Self(DEFAULT_UNIVERSE)
    }
}

/// Scalar statistic used to rank streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFunction {
    Average,
    Median,
    Quantile(f64),
    Max,
    Min,
    SecondMax,
    Spread,
}

impl WeightFunction {
    pub fn quantile(phi: f64) -> Result<Self> {
        check_open_unit("quantile phi", phi)?;
        Ok(Self::Quantile(phi))
    }

    /// The quantile fraction the sketches use for this weight, if it is a
    /// rank statistic.
    pub fn phi(self) -> Option<f64> {
        match self {
            Self::Median => Some(0.5),
            Self::Quantile(phi) => Some(phi),
            _ => None,
        }
    }

    /// Average, median and quantiles can be served by the bucketed synopses.
    pub fn is_sketchable(self) -> bool {
        matches!(self, Self::Average | Self::Median | Self::Quantile(_))
    }
}

impl fmt::Display for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Average => f.write_str("avg"),
            Self::Median => f.write_str("median"),
            Self::Quantile(phi) => write!(f, "q:{phi}"),
            Self::Max => f.write_str("max"),
            Self::Min => f.write_str("min"),
            Self::SecondMax => f.write_str("secondmax"),
            Self::Spread => f.write_str("spread"),
        }
    }
}

impl FromStr for WeightFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(Self::Average),
            "median" => Ok(Self::Median),
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            "secondmax" => Ok(Self::SecondMax),
            "spread" => Ok(Self::Spread),
            other => match other.strip_prefix("q:") {
                Some(phi) => {
                    let phi: f64 = phi.parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad quantile in weight `{other}`"))
                    })?;
                    Self::quantile(phi)
                }
                None => Err(Error::InvalidParameter(format!("unknown weight `{other}`"))),
            },
        }
    }
}

/// Error targets shared by the synopses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxParams {
    /// Count-Min additive error rate.
    pub eps: f64,
    /// Count-Min failure probability.
    pub delta: f64,
    /// Bucket compression rate (q-digest) or geometric ratio (exponential buckets).
    pub rho: f64,
    pub universe: Universe,
}

impl ApproxParams {
    pub fn new(eps: f64, delta: f64, rho: f64, universe: Universe) -> Result<Self> {
        check_open_unit("eps", eps)?;
        check_open_unit("delta", delta)?;
        check_open_unit("rho", rho)?;
        Ok(Self {
            eps,
            delta,
            rho,
            universe,
        })
    }

    /// `rho` defaults to `eps`.
    pub fn with_eps(eps: f64, delta: f64, universe: Universe) -> Result<Self> {
        Self::new(eps, delta, eps, universe)
    }
}

pub(crate) fn check_open_unit(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie strictly between 0 and 1, got {x}"
        )))
    }
}

/// Number of items in `stream` with value `<= x`.
pub fn rank<T: PartialOrd + Copy>(x: T, stream: &[T]) -> usize {
    stream.iter().filter(|&&s| s <= x).count()
}

/// [`rank`] over an ascending slice, by binary search.
pub fn rank_sorted<T: PartialOrd + Copy>(x: T, sorted: &[T]) -> usize {
    sorted.partition_point(|&s| s <= x)
}

/// `|rank(estimate) - rank(truth)|` over the same stream.
pub fn rank_error<T: PartialOrd + Copy>(estimate: T, truth: T, stream: &[T]) -> usize {
    rank(estimate, stream).abs_diff(rank(truth, stream))
}

pub fn relative_value_error(estimate: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((estimate - truth).abs() / truth.abs())
}

/// 1-based rank of the median of `n` items: `floor(n/2)`, at least 1.
pub fn median_rank(n: usize) -> usize {
    (n / 2).max(1)
}

/// 1-based rank of the `phi`-quantile of `n` items: `ceil(phi * n)` clamped to `[1, n]`.
pub fn quantile_rank(phi: f64, n: usize) -> usize {
    ((phi * n as f64).ceil() as usize).clamp(1, n.max(1))
}
