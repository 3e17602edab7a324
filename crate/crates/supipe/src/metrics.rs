//! Token error rate via edit-distance alignment.
//!
//! Word error rate over token ids: the hypothesis is aligned against the
//! reference with unit-cost substitutions, deletions, and insertions, and
//! the error counts are normalized by reference length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::TokenId;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("reference is empty; error rate is undefined")]
    InvalidReference,
}

/// Alignment error counts between a reference and a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
}

impl WerBreakdown {
    /// Total edit operations in the minimal alignment.
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Errors over reference length. Exceeds 1.0 when the hypothesis carries
    /// more insertions than the reference has tokens.
    pub fn wer(&self) -> f64 {
        self.distance() as f64 / self.ref_len as f64
    }
}

/// Minimal-cost alignment of `hypothesis` against `reference` with unit
/// costs. Deletions are reference tokens absent from the hypothesis;
/// insertions are hypothesis tokens with no reference counterpart.
///
/// The backtrace resolves cost ties by preferring substitution, then
/// insertion, then deletion, so the breakdown is deterministic.
pub fn edit_distance(
    reference: &[TokenId],
    hypothesis: &[TokenId],
) -> Result<WerBreakdown, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::InvalidReference);
    }
    let m = reference.len();
    let n = hypothesis.len();
    let width = n + 1;
    let mut d = vec![0usize; (m + 1) * width];
    for j in 0..=n {
        d[j] = j;
    }
    for i in 1..=m {
        d[i * width] = i;
        for j in 1..=n {
            let sub = d[(i - 1) * width + j - 1]
                + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let ins = d[i * width + j - 1] + 1;
            let del = d[(i - 1) * width + j] + 1;
            d[i * width + j] = sub.min(ins).min(del);
        }
    }

    let mut counts = WerBreakdown { substitutions: 0, deletions: 0, insertions: 0, ref_len: m };
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let step = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if d[(i - 1) * width + j - 1] + step == here {
                counts.substitutions += step;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * width + j - 1] + 1 == here {
            counts.insertions += 1;
            j -= 1;
            continue;
        }
        counts.deletions += 1;
        i -= 1;
    }
    Ok(counts)
}
