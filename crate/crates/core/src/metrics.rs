//! Retrieval metrics and the manual-inspection sample size.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a rank file: the 1-based rank of the first correct result,
/// or `null` if it was not retrieved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEntry {
    pub query_id: String,
    pub rank: Option<u32>,
}

pub fn read_rank_file(path: impl AsRef<Path>) -> Result<Vec<RankEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let entry: RankEntry = serde_json::from_str(l).map_err(|e| Error::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?;
            if entry.rank == Some(0) {
                return Err(Error::MalformedLine {
                    line: i + 1,
                    message: "ranks start at 1".into(),
                });
            }
            Ok(entry)
        })
        .collect()
}

/// Mean reciprocal rank; unretrieved queries count as 0.
pub fn mrr(ranks: &[Option<u32>]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyRanks);
    }
    let sum: f64 = ranks.iter().flatten().map(|&r| 1.0 / f64::from(r)).sum();
    Ok(sum / ranks.len() as f64)
}

/// Number of queries answered within the top `k`.
pub fn answered_at_k(ranks: &[Option<u32>], k: u32) -> usize {
    ranks.iter().flatten().filter(|&&r| r <= k).count()
}

/// Cochran's sample size with finite-population correction, rounded up.
///
/// `p` is the assumed proportion (0.5 is the worst case) and `c` the margin
/// of error.
pub fn sample_size(population: u64, z: f64, p: f64, c: f64) -> u64 {
    let ss0 = z * z * p * (1.0 - p) / (c * c);
    let ss = ss0 / (1.0 + (ss0 - 1.0) / population as f64);
    (ss.ceil() as u64).min(population)
}
