//! Scoring a top-k answer against the exact ranking: precision, recall,
//! distortion and value error, plus the CSV row that carries them.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{relative_value_error, StreamId, WeightFunction};
use crate::oracle::Ranking;

/// `|S ∩ S'| / k`, walking the returned list.
pub fn precision_at_k(true_set: &[StreamId], returned: &[StreamId], k: usize) -> Result<f64> {
    check_sizes(true_set, returned, k)?;
    let truth: HashSet<_> = true_set.iter().collect();
    let hits = returned.iter().filter(|id| truth.contains(id)).count();
    Ok(hits as f64 / k as f64)
}

/// `|S ∩ S'| / |S|`, walking the true list.
pub fn recall_at_k(true_set: &[StreamId], returned: &[StreamId], k: usize) -> Result<f64> {
    check_sizes(true_set, returned, k)?;
    let answer: HashSet<_> = returned.iter().collect();
    let found = true_set.iter().filter(|id| answer.contains(id)).count();
    Ok(found as f64 / true_set.len() as f64)
}

fn check_sizes(true_set: &[StreamId], returned: &[StreamId], k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::InvalidK);
    }
    for len in [true_set.len(), returned.len()] {
        if len != k {
            return Err(Error::SizeMismatch { expected: k, actual: len });
        }
    }
    Ok(())
}

/// Mean over the returned list of `max(r / r', r' / r)`, where `r'` is the
/// reported position and `r` the exact rank.
pub fn distortion(returned: &[StreamId], ranking: &Ranking) -> Result<f64> {
    if returned.is_empty() {
        return Err(Error::EmptySummary);
    }
    let mut sum = 0.0;
    for (pos, &id) in returned.iter().enumerate() {
        let r = ranking.rank(id).ok_or(Error::MissingRank(id))? as f64;
        let r_rep = (pos + 1) as f64;
        sum += (r / r_rep).max(r_rep / r);
    }
    Ok(sum / returned.len() as f64)
}

/// Mean over positions of `|λ(S_j) - λ(S'_j)| / λ(S_j)`, with both weights exact.
pub fn avg_value_error(true_list: &[StreamId], returned: &[StreamId], ranking: &Ranking) -> Result<f64> {
    if true_list.is_empty() {
        return Err(Error::EmptySummary);
    }
    if true_list.len() != returned.len() {
        return Err(Error::SizeMismatch {
            expected: true_list.len(),
            actual: returned.len(),
        });
    }
    let mut sum = 0.0;
    for (&t, &r) in true_list.iter().zip(returned) {
        let truth = ranking.weight(t).ok_or(Error::MissingRank(t))?;
        let got = ranking.weight(r).ok_or(Error::MissingRank(r))?;
        sum += relative_value_error(got, truth)?;
    }
    Ok(sum / true_list.len() as f64)
}

/// Mean relative error of the reported estimates against each stream's own exact weight.
pub fn estimate_error(answer: &[(StreamId, f64)], ranking: &Ranking) -> Result<f64> {
    if answer.is_empty() {
        return Err(Error::EmptySummary);
    }
    let mut sum = 0.0;
    for &(id, est) in answer {
        let truth = ranking.weight(id).ok_or(Error::MissingRank(id))?;
        sum += relative_value_error(est, truth)?;
    }
    Ok(sum / answer.len() as f64)
}

/// Quality of one top-k answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub distortion: f64,
    pub avg_value_error: f64,
    pub estimate_error: f64,
}

/// Score `answer` (best first) against the exact ranking's top `k`.
pub fn score(answer: &[(StreamId, f64)], ranking: &Ranking, k: usize) -> Result<Scores> {
    let truth: Vec<StreamId> = ranking.top(k).iter().map(|e| e.0).collect();
    let returned: Vec<StreamId> = answer.iter().map(|e| e.0).collect();
    Ok(Scores {
        precision: precision_at_k(&truth, &returned, k)?,
        recall: recall_at_k(&truth, &returned, k)?,
        distortion: distortion(&returned, ranking)?,
        avg_value_error: avg_value_error(&truth, &returned, ranking)?,
        estimate_error: estimate_error(answer, ranking)?,
    })
}

pub const CSV_HEADER: &str =
    "algo,dataset,lambda,k,eps,delta,rho,precision,recall,distortion,avg_value_error,memory_bytes,seed";

/// One evaluated (algorithm, dataset, weight, k) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub algo: String,
    pub dataset: String,
    pub weight: WeightFunction,
    pub k: usize,
    pub eps: f64,
    pub delta: f64,
    pub rho: f64,
    pub scores: Scores,
    pub memory_bytes: usize,
    pub seed: u64,
}

impl EvalReport {
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        write!(
            row,
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.algo,
            self.dataset,
            self.weight,
            self.k,
            self.eps,
            self.delta,
            self.rho,
            self.scores.precision,
            self.scores.recall,
            self.scores.distortion,
            self.scores.avg_value_error,
            self.memory_bytes,
            self.seed,
        )
        .expect("writing to a String");
        row
    }
}
