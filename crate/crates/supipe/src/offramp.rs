//! Confidence estimation and the local/offload routing decision.
//!
//! At the end of ingestion the pipeline must either decode locally or ship
//! the audio to a simulated cloud endpoint. The confidence signal is the
//! perplexity of the last completed pilot's hypothesis: the exponentiated
//! negative mean per-token log-probability. High perplexity means the pilot
//! was unsure, so the utterance offloads. A naive baseline ignores the
//! signal and offloads a fixed fraction of traffic at random; always-local
//! and always-offload anchor the endpoints of the trade-off curve.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::TokenScore;
use crate::pilot::PilotReference;

#[derive(Debug, Error)]
pub enum OfframpError {
    #[error("invalid offramp config: {0}")]
    Config(String),
}

/// Perplexity of a sequence from its per-token log-probabilities:
/// `exp(-mean(logps))`. A confident hypothesis scores near 1; `None` means
/// there is nothing to measure (no tokens).
pub fn perplexity(token_logps: &[f64]) -> Option<f64> {
    if token_logps.is_empty() {
        return None;
    }
    let mean = token_logps.iter().sum::<f64>() / token_logps.len() as f64;
    Some((-mean).exp())
}

/// Which log-probability the confidence reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbBasis {
    /// The hybrid score actually used for ranking.
    Combined,
    /// The autoregressive scorer's term alone.
    AttnOnly,
}

pub fn perplexity_of(scores: &[TokenScore], basis: ProbBasis) -> Option<f64> {
    let logps: Vec<f64> = scores
        .iter()
        .map(|s| match basis {
            ProbBasis::Combined => s.combined,
            ProbBasis::AttnOnly => s.attn,
        })
        .collect();
    perplexity(&logps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfframpMode {
    Perplexity,
    Naive,
    AlwaysLocal,
    AlwaysOffload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfframpConfig {
    pub mode: OfframpMode,
    /// Perplexity threshold; offload strictly above it.
    pub theta: f64,
    /// Probability of staying local under the naive policy.
    pub alpha: f64,
    pub prob_basis: ProbBasis,
    /// What to do when no pilot finished in time to measure confidence.
    pub empty_reference_offloads: bool,
}

impl Default for OfframpConfig {
    fn default() -> Self {
        OfframpConfig {
            mode: OfframpMode::Perplexity,
            theta: 2.0,
            alpha: 0.5,
            prob_basis: ProbBasis::Combined,
            empty_reference_offloads: true,
        }
    }
}

impl OfframpConfig {
    pub fn validate(&self) -> Result<(), OfframpError> {
        if !(self.theta > 0.0) {
            return Err(OfframpError::Config(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(OfframpError::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadDecision {
    pub offload: bool,
    /// Measured confidence, when a pilot was available to measure.
    pub perplexity: Option<f64>,
    /// Wall-clock time of the decision (utterance end).
    pub decided_at_s: f64,
    /// Index of the pilot whose hypothesis was inspected.
    pub basis_pilot: Option<usize>,
}

/// Routes one utterance. `reference` is the last pilot that completed
/// before the utterance ended, tagged with its index in the trace; `rng`
/// feeds only the naive policy's coin.
pub fn decide(
    cfg: &OfframpConfig,
    reference: Option<(usize, &PilotReference)>,
    decided_at_s: f64,
    rng: &mut impl Rng,
) -> Result<OffloadDecision, OfframpError> {
    let ppl = reference.and_then(|(_, r)| perplexity_of(&r.token_scores, cfg.prob_basis));
    decide_from_ppl(cfg, ppl, reference.map(|(i, _)| i), decided_at_s, rng)
}

/// Same routing given an already-measured perplexity (callers that cached
/// the confidence and dropped the pilot itself).
pub fn decide_from_ppl(
    cfg: &OfframpConfig,
    ppl: Option<f64>,
    basis_pilot: Option<usize>,
    decided_at_s: f64,
    rng: &mut impl Rng,
) -> Result<OffloadDecision, OfframpError> {
    cfg.validate()?;
    let offload = match cfg.mode {
        OfframpMode::AlwaysLocal => false,
        OfframpMode::AlwaysOffload => true,
        OfframpMode::Naive => rng.gen::<f64>() >= cfg.alpha,
        OfframpMode::Perplexity => match ppl {
            Some(p) => p > cfg.theta,
            None => cfg.empty_reference_offloads,
        },
    };
    Ok(OffloadDecision { offload, perplexity: ppl, decided_at_s, basis_pilot })
}
