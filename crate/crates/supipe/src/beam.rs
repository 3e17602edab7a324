//! Hybrid CTC/attention beam search with pilot-aided acceleration.
//!
//! Candidates are ranked by `(1 - ctc_weight) * attn_logp + ctc_weight *
//! ctc_psi`, where `attn_logp` is the autoregressive scorer's cumulative
//! log-probability and `ctc_psi` the exact CTC prefix score over the
//! emission lattice. A decode may carry a reference transcript from an
//! earlier pilot pass; three optimizations exploit it, each individually
//! switchable and each inert when no reference is supplied:
//!
//! - beam collapse: after pruning each round, if the best hypothesis's
//!   newest token matches the reference, drop every other hypothesis; on
//!   the first mismatch the reference is considered diverged and collapse
//!   (and leap) stay off for the rest of the decode.
//! - early termination: predict the full output length from the reference
//!   length and the partial/full duration ratio, and stop as soon as that
//!   many rounds have run and at least one hypothesis has ended.
//! - CTC leap: when an expansion reproduces the next reference token, resume
//!   the CTC recursion from the pilot's cached rows instead of frame 0.
//!
//! Every round expands each live hypothesis once (one scorer call, counted
//! as one attention NFE) across all regular tokens plus eos. Ended
//! hypotheses ride along unexpanded. The search stops when the best ended
//! hypothesis beats the best developing one by `end_detect_margin`, when
//! early termination fires, when no hypothesis is left developing, or after
//! `max_tokens` rounds; the result is the best ended hypothesis if any
//! exists, otherwise the best developing one.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{ctc_extend, ctc_extend_leap, ctc_init, CtcError, SharedState};
use crate::lattice::{EmissionLattice, TokenId, Vocab};
use crate::pilot::PilotReference;
use crate::scorer::{AttnScorer, NfeReport};

#[derive(Debug, Error)]
pub enum BeamError {
    #[error("invalid beam config: {0}")]
    Config(String),
    #[error(transparent)]
    Ctc(#[from] CtcError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Weight on the CTC prefix score; 0 is pure attention, 1 pure CTC.
    pub ctc_weight: f64,
    /// Hard cap on decode rounds (= emitted tokens per hypothesis).
    pub max_tokens: usize,
    /// The best ended hypothesis must beat the best developing one by this
    /// much before the search stops.
    pub end_detect_margin: f64,
    pub collapse_enabled: bool,
    pub early_term_enabled: bool,
    /// Slack rounds added to the predicted output length.
    pub early_term_constant: usize,
    pub leap_enabled: bool,
    /// Fraction of the pilot's scored frames the leap trusts; 1.0 resumes at
    /// the pilot boundary itself.
    pub leap_fraction: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 5,
            ctc_weight: 0.3,
            max_tokens: 30,
            end_detect_margin: 0.0,
            collapse_enabled: true,
            early_term_enabled: true,
            early_term_constant: 5,
            leap_enabled: true,
            leap_fraction: 1.0,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), BeamError> {
        if self.beam_width < 1 {
            return Err(BeamError::Config("beam_width must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ctc_weight) {
            return Err(BeamError::Config(format!(
                "ctc_weight must lie in [0, 1], got {}",
                self.ctc_weight
            )));
        }
        if self.max_tokens < 1 {
            return Err(BeamError::Config("max_tokens must be >= 1".into()));
        }
        if !self.end_detect_margin.is_finite() || self.end_detect_margin < 0.0 {
            return Err(BeamError::Config(format!(
                "end_detect_margin must be finite and >= 0, got {}",
                self.end_detect_margin
            )));
        }
        if !(0.5..=1.0).contains(&self.leap_fraction) {
            return Err(BeamError::Config(format!(
                "leap_fraction must lie in [0.5, 1], got {}",
                self.leap_fraction
            )));
        }
        Ok(())
    }
}

/// Per-token score breakdown, in the order tokens were emitted. Ended
/// hypotheses carry a final entry for the eos step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub attn: f64,
    pub ctc: f64,
    pub combined: f64,
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Emitted regular tokens; eos is tracked by `ended`, never stored here.
    pub tokens: Vec<TokenId>,
    pub ended: bool,
    pub attn_logp: f64,
    pub ctc_psi: f64,
    pub score: f64,
    pub token_scores: Vec<TokenScore>,
    ctc_state: SharedState,
    /// `state_chain[i]` is the CTC state after the first i tokens; what a
    /// pilot hands to the full decode so leaps can resume per prefix.
    state_chain: Vec<SharedState>,
    /// Whether `tokens` is a prefix of the decode's reference transcript.
    matches_reference: bool,
}

impl Hypothesis {
    pub fn ctc_state(&self) -> &SharedState {
        &self.ctc_state
    }

    pub fn state_chain(&self) -> &[SharedState] {
        &self.state_chain
    }

    pub fn matches_reference(&self) -> bool {
        self.matches_reference
    }
}

/// Beam ranking: higher score first, ties broken by lexicographically
/// smaller token sequence so pruning is deterministic.
pub(crate) fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub best: Hypothesis,
    /// Final beam, best first.
    pub beam: Vec<Hypothesis>,
    pub nfe: NfeReport,
    pub rounds: usize,
    /// Rounds where collapse validated the best hypothesis and pruned to it.
    pub collapse_hits: usize,
    /// 1 if the reference diverged from the search (which disables collapse
    /// and leap for the rest of the decode), else 0.
    pub collapse_divergences: usize,
    pub early_terminated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseOutcome {
    /// No reference token to validate against this round.
    NotApplicable,
    /// Best hypothesis agreed with the reference; beam pruned to it.
    Validated,
    /// Best hypothesis contradicted the reference.
    Diverged,
}

/// One beam-collapse check, run after pruning at 1-indexed `round`. The
/// beam must already be sorted best-first.
pub fn collapse_step(
    beam: &mut Vec<Hypothesis>,
    reference: &[TokenId],
    round: usize,
) -> CollapseOutcome {
    if round == 0 || round > reference.len() {
        return CollapseOutcome::NotApplicable;
    }
    let best = &beam[0];
    // A developing hypothesis at round r holds exactly r tokens; an ended
    // one stopped short, contradicting a reference that expects more.
    if best.ended || best.tokens.len() != round || best.tokens[round - 1] != reference[round - 1] {
        return CollapseOutcome::Diverged;
    }
    beam.truncate(1);
    CollapseOutcome::Validated
}

/// Predicted output length: reference tokens scaled by the full/partial
/// duration ratio, rounded, plus a slack constant.
pub fn predict_length(
    full_s: f64,
    partial_s: f64,
    partial_tokens: usize,
    constant: usize,
) -> Result<usize, BeamError> {
    if !(full_s > 0.0) || !(partial_s > 0.0) {
        return Err(BeamError::Config(format!(
            "length prediction needs positive durations, got full={full_s} partial={partial_s}"
        )));
    }
    Ok((full_s / partial_s * partial_tokens as f64).round() as usize + constant)
}

/// Early termination fires once the predicted number of rounds has run and
/// some hypothesis has ended.
pub fn early_terminate(has_ended: bool, round: usize, predicted: usize) -> bool {
    has_ended && round >= predicted
}

pub fn beam_search(
    lattice: &EmissionLattice,
    scorer: &dyn AttnScorer,
    vocab: &Vocab,
    cfg: &BeamConfig,
    reference: Option<&PilotReference>,
) -> Result<DecodeResult, BeamError> {
    cfg.validate()?;
    let eos = vocab.eos_id();
    let w = cfg.ctc_weight;

    let init = Arc::new(ctc_init(lattice, vocab));
    let root = Hypothesis {
        tokens: Vec::new(),
        ended: false,
        attn_logp: 0.0,
        ctc_psi: 0.0,
        score: 0.0,
        token_scores: Vec::new(),
        ctc_state: init.clone(),
        state_chain: vec![init],
        matches_reference: reference.is_some(),
    };
    let mut beam = vec![root];

    let predicted = match (cfg.early_term_enabled, reference) {
        (true, Some(r)) => Some(predict_length(
            lattice.duration_s(),
            r.partial_duration_s,
            r.tokens.len(),
            cfg.early_term_constant,
        )?),
        _ => None,
    };

    let mut nfe = NfeReport::default();
    let mut rounds = 0;
    let mut collapse_hits = 0;
    let mut collapse_divergences = 0;
    let mut early_terminated = false;
    let mut diverged = false;

    for round in 1..=cfg.max_tokens {
        if beam.iter().all(|h| h.ended) {
            break;
        }
        let mut candidates: Vec<Hypothesis> =
            beam.iter().filter(|h| h.ended).cloned().collect();
        for hyp in beam.iter().filter(|h| !h.ended) {
            let lps = scorer.next_log_probs(&hyp.tokens, lattice);
            nfe.attn_evals += 1;
            for &c in vocab.candidates() {
                let attn_delta = lps[c];
                let pos = hyp.tokens.len();
                let mut child = hyp.clone();
                child.attn_logp += attn_delta;
                if c == eos {
                    let scored = ctc_extend(&hyp.ctc_state, eos, lattice, vocab)?;
                    child.ended = true;
                    child.ctc_psi = scored.psi;
                    child.ctc_state = Arc::new(scored.state);
                } else {
                    // CTC leap applies while this hypothesis still tracks the
                    // reference and the expansion reproduces its next token.
                    let cached = match reference {
                        Some(r)
                            if cfg.leap_enabled
                                && !diverged
                                && hyp.matches_reference
                                && pos < r.tokens.len()
                                && r.tokens[pos] == c =>
                        {
                            Some(&r.ctc_states[pos + 1])
                        }
                        _ => None,
                    };
                    let scored = match cached {
                        Some(state) => ctc_extend_leap(
                            state,
                            c,
                            &hyp.ctc_state,
                            lattice,
                            cfg.leap_fraction,
                            vocab,
                        )?,
                        None => ctc_extend(&hyp.ctc_state, c, lattice, vocab)?,
                    };
                    nfe.ctc_frames_scored += scored.frames_computed as u64;
                    child.tokens.push(c);
                    child.ctc_psi = scored.psi;
                    child.ctc_state = Arc::new(scored.state);
                    child.state_chain.push(child.ctc_state.clone());
                    child.matches_reference = hyp.matches_reference
                        && reference
                            .map_or(false, |r| pos < r.tokens.len() && r.tokens[pos] == c);
                }
                child.score = (1.0 - w) * child.attn_logp + w * child.ctc_psi;
                child.token_scores.push(TokenScore {
                    attn: attn_delta,
                    ctc: child.ctc_psi - hyp.ctc_psi,
                    combined: child.score - hyp.score,
                });
                candidates.push(child);
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(cfg.beam_width);
        beam = candidates;
        rounds = round;

        if cfg.collapse_enabled && !diverged {
            if let Some(r) = reference {
                match collapse_step(&mut beam, &r.tokens, round) {
                    CollapseOutcome::Validated => collapse_hits += 1,
                    CollapseOutcome::Diverged => {
                        diverged = true;
                        collapse_divergences += 1;
                    }
                    CollapseOutcome::NotApplicable => {}
                }
            }
        }

        let best_ended = beam.iter().filter(|h| h.ended).map(|h| h.score).fold(
            f64::NEG_INFINITY,
            f64::max,
        );
        let best_developing = beam.iter().filter(|h| !h.ended).map(|h| h.score).fold(
            f64::NEG_INFINITY,
            f64::max,
        );
        if best_ended > best_developing + cfg.end_detect_margin {
            break;
        }
        if let Some(n) = predicted {
            if early_terminate(best_ended > f64::NEG_INFINITY, round, n) {
                early_terminated = true;
                break;
            }
        }
    }

    // Prefer an ended hypothesis; fall back to the best developing one when
    // the round cap cut the search off.
    let best = beam
        .iter()
        .filter(|h| h.ended)
        .min_by(|a, b| rank(a, b))
        .or_else(|| beam.first())
        .expect("beam never empties")
        .clone();
    nfe.decode_rounds = rounds as u64;
    debug_assert!(best.ended || rounds == cfg.max_tokens || best.tokens.len() == cfg.max_tokens);
    Ok(DecodeResult {
        best,
        beam,
        nfe,
        rounds,
        collapse_hits,
        collapse_divergences,
        early_terminated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_lattice, SyntheticUtterance, Vocab};
    use crate::scorer::TeacherScorer;

    fn clean_setup() -> (Vocab, SyntheticUtterance, EmissionLattice) {
        let vocab = Vocab::with_regular_tokens(6).unwrap();
        let utt = SyntheticUtterance {
            truth: vec![3, 5, 4, 3],
            alignment: vec![8, 22, 37, 52],
            noise_level: 0.0,
            duration_s: 2.4,
        };
        let lattice = make_lattice(&utt, &vocab, 11).unwrap();
        (vocab, utt, lattice)
    }

    fn vanilla(cfg: &BeamConfig) -> BeamConfig {
        BeamConfig {
            collapse_enabled: false,
            early_term_enabled: false,
            leap_enabled: false,
            ..cfg.clone()
        }
    }

    #[test]
    fn faithful_scorer_recovers_truth_and_ends() {
        let (vocab, utt, lattice) = clean_setup();
        let scorer = TeacherScorer::new(&utt, 1.0, &vocab, 0);
        let cfg = BeamConfig::default();
        let out = beam_search(&lattice, &scorer, &vocab, &cfg, None).unwrap();
        assert_eq!(out.best.tokens, utt.truth);
        assert!(out.best.ended);
        assert!(out.best.score.is_finite());
        assert_eq!(out.rounds, 5, "four tokens plus the closing round");
        assert_eq!(out.collapse_hits, 0, "no reference, no collapse");
        // one eos entry beyond the per-token breakdown
        assert_eq!(out.best.token_scores.len(), 5);
        let sum: f64 = out.best.token_scores.iter().map(|s| s.combined).sum();
        assert!((sum - out.best.score).abs() < 1e-9);
    }

    #[test]
    fn round_cap_yields_developing_best() {
        let (vocab, utt, lattice) = clean_setup();
        let scorer = TeacherScorer::new(&utt, 1.0, &vocab, 0);
        // width 1 keeps only the truth prefix, so nothing ended survives and
        // the cap must surface the best developing hypothesis
        let cfg = BeamConfig { max_tokens: 2, beam_width: 1, ..BeamConfig::default() };
        let out = beam_search(&lattice, &scorer, &vocab, &cfg, None).unwrap();
        assert!(!out.best.ended);
        assert_eq!(out.rounds, 2);
        assert_eq!(out.best.tokens, vec![3, 5]);
    }

    #[test]
    fn round_cap_prefers_a_complete_hypothesis_when_one_survives() {
        let (vocab, utt, lattice) = clean_setup();
        let scorer = TeacherScorer::new(&utt, 1.0, &vocab, 0);
        let cfg = BeamConfig { max_tokens: 2, ..BeamConfig::default() };
        let out = beam_search(&lattice, &scorer, &vocab, &cfg, None).unwrap();
        assert_eq!(out.rounds, 2);
        assert!(out.beam.iter().any(|h| !h.ended), "cap hit with work left");
        if out.beam.iter().any(|h| h.ended) {
            assert!(out.best.ended, "an ended survivor outranks truncated output");
        }
    }

    #[test]
    fn width_one_attn_evals_equal_rounds() {
        let (vocab, utt, lattice) = clean_setup();
        let scorer = TeacherScorer::new(&utt, 1.0, &vocab, 0);
        let cfg = BeamConfig { beam_width: 1, ..BeamConfig::default() };
        let out = beam_search(&lattice, &scorer, &vocab, &cfg, None).unwrap();
        assert_eq!(out.nfe.attn_evals, out.rounds as u64);
        assert_eq!(out.nfe.decode_rounds, out.rounds as u64);
        assert!(out.nfe.ctc_frames_scored > 0);
    }

    #[test]
    fn predicted_length_matches_worked_example() {
        assert_eq!(predict_length(3.0, 2.0, 8, 5).unwrap(), 17);
        assert!(predict_length(3.0, 0.0, 8, 5).is_err());
        assert!(!early_terminate(true, 16, 17));
        assert!(early_terminate(true, 17, 17));
        assert!(!early_terminate(false, 40, 17));
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = BeamConfig::default();
        cfg.ctc_weight = 1.5;
        assert!(cfg.validate().is_err());
        cfg.ctc_weight = 0.3;
        cfg.leap_fraction = 0.4;
        assert!(cfg.validate().is_err());
        cfg.leap_fraction = 1.0;
        cfg.beam_width = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn collapse_validates_then_prunes_and_diverges_on_mismatch() {
        let (vocab, utt, lattice) = clean_setup();
        let scorer = TeacherScorer::new(&utt, 1.0, &vocab, 0);
        // capping at 4 rounds leaves a genuine mid-search beam whose best is
        // the developing 4-token truth prefix
        let cfg = BeamConfig { max_tokens: 4, ..vanilla(&BeamConfig::default()) };
        let out = beam_search(&lattice, &scorer, &vocab, &cfg, None).unwrap();
        let mut beam = out.beam.clone();
        beam.sort_by(rank);

        // agreeing reference prunes to one
        let hit = collapse_step(&mut beam.clone(), &[3, 5, 4, 3], 4);
        assert_eq!(hit, CollapseOutcome::Validated);
        let mut pruned = beam.clone();
        collapse_step(&mut pruned, &[3, 5, 4, 3], 4);
        assert_eq!(pruned.len(), 1);

        // contradicting reference reports divergence, beam untouched
        let mut untouched = beam.clone();
        let miss = collapse_step(&mut untouched, &[3, 5, 4, 5], 4);
        assert_eq!(miss, CollapseOutcome::Diverged);
        assert_eq!(untouched.len(), beam.len());

        // reference exhausted
        assert_eq!(collapse_step(&mut beam.clone(), &[3, 5], 4), CollapseOutcome::NotApplicable);
    }

    #[test]
    fn exact_reference_keeps_output_and_cuts_attn_evals() {
        let (vocab, utt, lattice) = clean_setup();
        let scorer = TeacherScorer::new(&utt, 0.9, &vocab, 3);
        let base = BeamConfig::default();

        let plain = beam_search(&lattice, &scorer, &vocab, &vanilla(&base), None).unwrap();
        let reference = PilotReference::from_hypothesis(
            &plain.best,
            lattice.duration_s(),
            lattice.num_frames(),
            lattice.duration_s(),
            plain.nfe.clone(),
        );
        let aided = beam_search(&lattice, &scorer, &vocab, &base, Some(&reference)).unwrap();

        assert_eq!(aided.best.tokens, plain.best.tokens);
        assert_eq!(aided.best.score, plain.best.score, "leap over own states is bit-exact");
        assert!(aided.nfe.attn_evals <= plain.nfe.attn_evals);
        assert!(aided.collapse_hits > 0);
        assert_eq!(aided.collapse_divergences, 0);
        assert!(aided.nfe.ctc_frames_scored < plain.nfe.ctc_frames_scored);
    }
}
