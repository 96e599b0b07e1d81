//! Small-memory synopses for finding the top-k outlier streams, by average,
//! median or any quantile, in a braid of interleaved streams.
//!
//! * [`exp_bucket::ExponentialBucket`] and [`var_bucket::VariableBucket`] are
//!   the bucketed synopses; both implement [`synopsis::BraidSynopsis`].
//! * [`extremes::ExtremeTracker`] tracks top-k by max or min exactly in O(k).
//! * [`oracle::MaterializedBraid`] computes every weight exactly, for evaluation.
//! * [`datagen`] builds seeded synthetic and adversarial braids, [`metrics`]
//!   scores a top-k answer and [`braid_file`] reads and writes braids.

pub mod braid_file;
pub mod cli;
pub mod cm;
pub mod datagen;
pub mod error;
pub mod exp_bucket;
pub mod extremes;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod qdigest;
pub mod synopsis;
pub mod var_bucket;

pub use error::{Error, Result};
pub use model::{BraidItem, StreamId, Universe, WeightFunction};
