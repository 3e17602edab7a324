//! Pilot scheduling and pilot decoding.
//!
//! While an utterance is still being ingested, the pipeline periodically
//! runs a cheap beam search over the frames heard so far. Each pilot is
//! narrower and shorter-capped than the final decode, and when `incremental`
//! is on it treats the previous pilot's output as its reference, so the
//! same collapse/leap machinery that accelerates the final decode also keeps
//! pilot cost roughly flat as the partial input grows. The last pilot's
//! hypothesis is what the offramp inspects and what the final decode uses as
//! its reference transcript.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{beam_search, BeamConfig, BeamError, Hypothesis, TokenScore};
use crate::ctc::SharedState;
use crate::lattice::{EmissionLattice, TokenId, Vocab};
use crate::scorer::{AttnScorer, NfeReport};

#[derive(Debug, Error)]
pub enum PilotError {
    #[error("invalid pilot config: {0}")]
    Config(String),
    #[error(transparent)]
    Beam(#[from] BeamError),
}

/// Cap on how many tokens a pilot may emit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenLimitRule {
    /// A flat cap.
    Fixed(usize),
    /// This fraction of the final decode's `max_tokens`, rounded, floor 1.
    FullRatio(f64),
}

impl TokenLimitRule {
    pub fn resolve(&self, full_max_tokens: usize) -> usize {
        match *self {
            TokenLimitRule::Fixed(n) => n,
            TokenLimitRule::FullRatio(r) => {
                ((full_max_tokens as f64 * r).round() as usize).max(1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotConfig {
    /// Seconds between the first pilot triggers.
    pub granularity_s: f64,
    /// No pilot fires before this much audio exists.
    pub min_partial_s: f64,
    /// Each successive gap is the previous one times this; 1 keeps the
    /// period fixed, > 1 spaces pilots out as the utterance grows.
    pub growth: f64,
    pub beam_width: usize,
    pub token_limit: TokenLimitRule,
    /// Whether each pilot uses the previous pilot's output as a reference.
    pub incremental: bool,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            granularity_s: 1.0,
            min_partial_s: 1.5,
            growth: 1.0,
            beam_width: 3,
            token_limit: TokenLimitRule::Fixed(15),
            incremental: true,
        }
    }
}

impl PilotConfig {
    pub fn validate(&self) -> Result<(), PilotError> {
        if !(self.granularity_s > 0.0) {
            return Err(PilotError::Config(format!(
                "granularity_s must be positive, got {}",
                self.granularity_s
            )));
        }
        if !(self.min_partial_s >= 0.0) {
            return Err(PilotError::Config(format!(
                "min_partial_s must be >= 0, got {}",
                self.min_partial_s
            )));
        }
        if !(self.growth >= 1.0) || !self.growth.is_finite() {
            return Err(PilotError::Config(format!(
                "growth must be a finite factor >= 1, got {}",
                self.growth
            )));
        }
        if self.beam_width < 1 {
            return Err(PilotError::Config("beam_width must be >= 1".into()));
        }
        match self.token_limit {
            TokenLimitRule::Fixed(n) if n < 1 => {
                return Err(PilotError::Config("fixed token limit must be >= 1".into()));
            }
            TokenLimitRule::FullRatio(r) if !(r > 0.0 && r <= 1.0) => {
                return Err(PilotError::Config(format!(
                    "full_ratio token limit must lie in (0, 1], got {r}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Trigger times starting at `min_partial_s`, stepping by `granularity_s`
/// (times `growth` after each pilot), strictly before the utterance ends.
/// An utterance shorter than `min_partial_s` gets none.
pub fn schedule_pilots(duration_s: f64, cfg: &PilotConfig) -> Vec<f64> {
    let mut triggers = Vec::new();
    let mut t = cfg.min_partial_s;
    let mut step = cfg.granularity_s;
    while t < duration_s - 1e-9 {
        triggers.push(t);
        t += step;
        step *= cfg.growth;
    }
    triggers
}

/// The period each trigger was scheduled with: the budget its pilot must
/// fit inside for the schedule to be feasible.
pub fn pilot_budget(cfg: &PilotConfig, trigger_index: usize) -> f64 {
    cfg.granularity_s * cfg.growth.powi(trigger_index as i32)
}

/// Frames fully heard by wall time `t_s`.
pub fn partial_frames(t_s: f64, frame_rate_hz: f64) -> usize {
    (t_s * frame_rate_hz + 1e-9).floor() as usize
}

/// A pilot decode's output, packaged as the reference a later decode (the
/// next pilot or the final one) consumes.
#[derive(Debug, Clone)]
pub struct PilotReference {
    /// Hypothesis tokens; never contains eos.
    pub tokens: Vec<TokenId>,
    /// Per-token score breakdown, aligned with `tokens` (no eos entry).
    pub token_scores: Vec<TokenScore>,
    /// `ctc_states[i]` is the pilot's CTC state after the first i tokens,
    /// over the pilot's partial lattice. What CTC leap resumes from.
    pub ctc_states: Vec<SharedState>,
    pub partial_duration_s: f64,
    pub partial_frames: usize,
    /// Wall-clock trigger time of the pilot that produced this.
    pub decoded_at_s: f64,
    /// The pilot decode's own effort.
    pub nfe: NfeReport,
    /// Whether the pilot hypothesis ended on its own (emitted eos) rather
    /// than hitting the pilot token cap.
    pub ended: bool,
}

/// Loggable view of one pilot, without the CTC state payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSummary {
    pub decoded_at_s: f64,
    pub partial_frames: usize,
    pub partial_duration_s: f64,
    pub tokens: Vec<TokenId>,
    pub ended: bool,
    pub attn_evals: u64,
    pub ctc_frames_scored: u64,
}

impl From<&PilotReference> for PilotSummary {
    fn from(r: &PilotReference) -> Self {
        PilotSummary {
            decoded_at_s: r.decoded_at_s,
            partial_frames: r.partial_frames,
            partial_duration_s: r.partial_duration_s,
            tokens: r.tokens.clone(),
            ended: r.ended,
            attn_evals: r.nfe.attn_evals,
            ctc_frames_scored: r.nfe.ctc_frames_scored,
        }
    }
}

impl PilotReference {
    pub fn from_hypothesis(
        hyp: &Hypothesis,
        partial_duration_s: f64,
        partial_frames: usize,
        decoded_at_s: f64,
        nfe: NfeReport,
    ) -> Self {
        PilotReference {
            tokens: hyp.tokens.clone(),
            token_scores: hyp.token_scores[..hyp.tokens.len()].to_vec(),
            ctc_states: hyp.state_chain().to_vec(),
            partial_duration_s,
            partial_frames,
            decoded_at_s,
            nfe,
            ended: hyp.ended,
        }
    }
}

/// Decodes one partial lattice. The pilot inherits the final decode's
/// scoring weights but runs with its own narrow beam and token cap; with a
/// previous pilot's reference it applies collapse, early termination, and
/// leap exactly like the final decode does.
pub fn run_pilot(
    partial: &EmissionLattice,
    scorer: &dyn AttnScorer,
    vocab: &Vocab,
    base: &BeamConfig,
    cfg: &PilotConfig,
    previous: Option<&PilotReference>,
    decoded_at_s: f64,
) -> Result<PilotReference, PilotError> {
    cfg.validate()?;
    let pilot_cfg = BeamConfig {
        beam_width: cfg.beam_width,
        max_tokens: cfg.token_limit.resolve(base.max_tokens),
        ..base.clone()
    };
    let reference = if cfg.incremental { previous } else { None };
    let out = beam_search(partial, scorer, vocab, &pilot_cfg, reference)?;
    Ok(PilotReference::from_hypothesis(
        &out.best,
        partial.duration_s(),
        partial.num_frames(),
        decoded_at_s,
        out.nfe,
    ))
}

/// The pilots executed for one utterance, in trigger order.
#[derive(Debug, Clone, Default)]
pub struct PilotTrace {
    pilots: Vec<PilotReference>,
}

impl PilotTrace {
    pub fn push(&mut self, reference: PilotReference) {
        if let Some(last) = self.pilots.last() {
            assert!(
                reference.partial_frames > last.partial_frames,
                "pilot partial lengths must strictly increase ({} then {})",
                last.partial_frames,
                reference.partial_frames
            );
        }
        self.pilots.push(reference);
    }

    pub fn pilots(&self) -> &[PilotReference] {
        &self.pilots
    }

    pub fn last(&self) -> Option<&PilotReference> {
        self.pilots.last()
    }

    pub fn len(&self) -> usize {
        self.pilots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pilots.is_empty()
    }

    /// Summed pilot effort, the overhead side of the acceleration trade.
    pub fn total_nfe(&self) -> NfeReport {
        let mut total = NfeReport::default();
        for p in &self.pilots {
            total.absorb(&p.nfe);
        }
        total
    }
}
