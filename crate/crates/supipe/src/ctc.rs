//! CTC prefix scoring: exact forward recursion over lattice frames, a leap
//! variant that resumes from cached rows, and a brute-force path-sum oracle.
//!
//! For a token prefix h the recursion tracks, per frame t, the log
//! probability of all frame paths that collapse exactly to h and end at t in
//! the last token of h (`r_nonblank`) or in blank / an earlier boundary
//! (`r_blank`). The prefix score psi(h) accumulates the probability that a
//! path has completed h by frame t and is free afterwards, i.e. the total
//! probability that the collapsed output *begins with* h. Ending a
//! hypothesis (eos) scores the probability that the output *is exactly* the
//! prefix: logaddexp of the two r values at the final frame.
//!
//! All arithmetic is in log space with a saturating sentinel for log(0)
//! ([`LOG_ZERO`]); no NaN or infinity can appear.

use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{EmissionLattice, TokenId, Vocab, LOG_ZERO};

#[derive(Debug, Error, PartialEq)]
pub enum CtcError {
    #[error("token {0} cannot extend a prefix (blank/sos are not emittable)")]
    InvalidToken(TokenId),
    #[error("prefix already ended with eos")]
    EndedPrefix,
    #[error("state covers {state} frames but lattice has {lattice}")]
    FrameMismatch { state: usize, lattice: usize },
    #[error("cached rows do not belong to an extension with token {0}")]
    ReferenceMismatch(TokenId),
    #[error("leap fraction {0} outside [0.5, 1]")]
    InvalidFraction(f64),
    #[error("reuse boundary {boundary} exceeds lattice length {lattice}")]
    InvalidState { boundary: usize, lattice: usize },
    #[error("brute force would enumerate {0:.3e} paths (limit 1e7)")]
    TooLarge(f64),
}

/// Saturating log-space addition (logaddexp). Values at or below the
/// sentinel count as zero probability.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi <= LOG_ZERO {
        return LOG_ZERO;
    }
    if lo <= LOG_ZERO {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Saturating log-space multiplication: zero times anything stays zero.
pub fn log_mul(a: f64, b: f64) -> f64 {
    if a <= LOG_ZERO || b <= LOG_ZERO {
        LOG_ZERO
    } else {
        a + b
    }
}

/// Forward rows for one prefix over the frames scored so far.
///
/// `psi_prefix[t]` is psi accumulated through frame t, kept per frame so a
/// cached state can be cut back to any reuse boundary without log-space
/// subtraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcPrefixState {
    r_nonblank: Vec<f64>,
    r_blank: Vec<f64>,
    psi_prefix: Vec<f64>,
    last_token: Option<TokenId>,
}

impl CtcPrefixState {
    pub fn frames_scored(&self) -> usize {
        self.r_nonblank.len()
    }

    pub fn last_token(&self) -> Option<TokenId> {
        self.last_token
    }

    pub fn r_nonblank(&self, t: usize) -> f64 {
        self.r_nonblank[t]
    }

    pub fn r_blank(&self, t: usize) -> f64 {
        self.r_blank[t]
    }
}

/// Result of extending a prefix by one token.
#[derive(Debug, Clone)]
pub struct CtcScore {
    /// Log probability that the collapsed output begins with the extended
    /// prefix (for eos: is exactly the parent prefix).
    pub psi: f64,
    pub state: CtcPrefixState,
    /// Lattice frames the recursion actually visited; the cost unit that CTC
    /// leap saves.
    pub frames_computed: usize,
}

/// State for the empty prefix: r_blank accumulates blank emissions, nothing
/// can have ended in a token yet, and every path trivially extends the empty
/// prefix (psi = 0 throughout).
pub fn ctc_init(lattice: &EmissionLattice, vocab: &Vocab) -> CtcPrefixState {
    let frames = lattice.num_frames();
    let blank = vocab.blank_id();
    let mut r_blank = Vec::with_capacity(frames);
    let mut acc = 0.0;
    for t in 0..frames {
        acc = log_mul(acc, lattice.log_prob(t, blank));
        r_blank.push(acc);
    }
    CtcPrefixState {
        r_nonblank: vec![LOG_ZERO; frames],
        r_blank,
        psi_prefix: vec![0.0; frames],
        last_token: None,
    }
}

/// Extends `parent` by token `c` over the full lattice, returning psi and
/// the child state. `c == eos` closes the hypothesis in O(1) from the final
/// frame; any other candidate runs the forward recursion over all frames.
pub fn ctc_extend(
    parent: &CtcPrefixState,
    c: TokenId,
    lattice: &EmissionLattice,
    vocab: &Vocab,
) -> Result<CtcScore, CtcError> {
    check_extendable(parent, c, lattice, vocab)?;
    if c == vocab.eos_id() {
        return Ok(close_with_eos(parent, c));
    }
    Ok(forward(parent, c, lattice, vocab.blank_id(), None))
}

/// Extends `parent` by token `c`, reusing the first
/// `B = floor(cached.frames_scored * leap_fraction)` frames of `cached` (the
/// rows a pilot decode produced for exactly this child prefix) and running
/// the recursion only over frames B..T.
///
/// The recomputed frames read the parent's rows, so `parent` must span the
/// full lattice; `cached` may span any prefix of it. When the pilot's
/// lattice frames equal the full lattice's prefix frames the result is
/// bit-exact with [`ctc_extend`], at `T - B` frames of work instead of `T`.
pub fn ctc_extend_leap(
    cached: &CtcPrefixState,
    c: TokenId,
    parent: &CtcPrefixState,
    lattice: &EmissionLattice,
    leap_fraction: f64,
    vocab: &Vocab,
) -> Result<CtcScore, CtcError> {
    if !(0.5..=1.0).contains(&leap_fraction) {
        return Err(CtcError::InvalidFraction(leap_fraction));
    }
    check_extendable(parent, c, lattice, vocab)?;
    if c == vocab.eos_id() {
        // eos needs only the parent's final frame; nothing to leap over.
        return Err(CtcError::InvalidToken(c));
    }
    if cached.last_token != Some(c) {
        return Err(CtcError::ReferenceMismatch(c));
    }
    let frames = lattice.num_frames();
    let boundary = (cached.frames_scored() as f64 * leap_fraction).floor() as usize;
    if boundary > frames {
        return Err(CtcError::InvalidState { boundary, lattice: frames });
    }
    Ok(forward(parent, c, lattice, vocab.blank_id(), Some((cached, boundary))))
}

fn check_extendable(
    parent: &CtcPrefixState,
    c: TokenId,
    lattice: &EmissionLattice,
    vocab: &Vocab,
) -> Result<(), CtcError> {
    if c >= vocab.size() || c == vocab.blank_id() || c == vocab.sos_id() {
        return Err(CtcError::InvalidToken(c));
    }
    if parent.last_token == Some(vocab.eos_id()) {
        return Err(CtcError::EndedPrefix);
    }
    if parent.frames_scored() != lattice.num_frames() {
        return Err(CtcError::FrameMismatch {
            state: parent.frames_scored(),
            lattice: lattice.num_frames(),
        });
    }
    Ok(())
}

fn close_with_eos(parent: &CtcPrefixState, eos: TokenId) -> CtcScore {
    let frames = parent.frames_scored();
    let psi = log_add(parent.r_nonblank[frames - 1], parent.r_blank[frames - 1]);
    // The ended state is never extended again; its psi_prefix records the
    // exact-completion probability through each frame for inspection.
    let psi_prefix: Vec<f64> = (0..frames)
        .map(|t| log_add(parent.r_nonblank[t], parent.r_blank[t]))
        .collect();
    CtcScore {
        psi,
        state: CtcPrefixState {
            r_nonblank: vec![LOG_ZERO; frames],
            r_blank: vec![LOG_ZERO; frames],
            psi_prefix,
            last_token: Some(eos),
        },
        frames_computed: 0,
    }
}

/// The forward recursion. With `reuse = Some((cached, B))` the first B
/// frames are copied from the cached child rows and psi resumes from the
/// cached per-frame prefix sum; frames B..T are recomputed against the
/// parent rows either way.
fn forward(
    parent: &CtcPrefixState,
    c: TokenId,
    lattice: &EmissionLattice,
    blank: TokenId,
    reuse: Option<(&CtcPrefixState, usize)>,
) -> CtcScore {
    let frames = lattice.num_frames();
    let repeat = parent.last_token == Some(c);
    let parent_empty = parent.last_token.is_none();

    let mut r_nonblank = Vec::with_capacity(frames);
    let mut r_blank = Vec::with_capacity(frames);
    let mut psi_prefix = Vec::with_capacity(frames);
    let mut psi = LOG_ZERO;
    let start = match reuse {
        Some((cached, boundary)) => {
            r_nonblank.extend_from_slice(&cached.r_nonblank[..boundary]);
            r_blank.extend_from_slice(&cached.r_blank[..boundary]);
            psi_prefix.extend_from_slice(&cached.psi_prefix[..boundary]);
            if boundary > 0 {
                psi = cached.psi_prefix[boundary - 1];
            }
            boundary
        }
        None => 0,
    };

    for t in start..frames {
        let lp_c = lattice.log_prob(t, c);
        // phi: paths that have completed the parent prefix strictly before
        // frame t and may emit c at t. A repeated token cannot chain onto the
        // parent's non-blank ending (that would collapse into it).
        let phi = if t == 0 {
            if parent_empty {
                0.0
            } else {
                LOG_ZERO
            }
        } else {
            let via_blank = parent.r_blank[t - 1];
            if repeat {
                via_blank
            } else {
                log_add(via_blank, parent.r_nonblank[t - 1])
            }
        };
        let prev_n = if t == 0 { LOG_ZERO } else { r_nonblank[t - 1] };
        let prev_b = if t == 0 { LOG_ZERO } else { r_blank[t - 1] };
        r_nonblank.push(log_mul(log_add(prev_n, phi), lp_c));
        r_blank.push(log_mul(log_add(prev_b, prev_n), lattice.log_prob(t, blank)));
        psi = log_add(psi, log_mul(phi, lp_c));
        psi_prefix.push(psi);
    }

    CtcScore {
        psi,
        state: CtcPrefixState { r_nonblank, r_blank, psi_prefix, last_token: Some(c) },
        frames_computed: frames - start,
    }
}

/// Convenience: score a whole prefix from scratch by chaining extensions.
/// Returns the final score; the empty prefix yields psi = 0 and the init
/// state.
pub fn ctc_score_prefix(
    prefix: &[TokenId],
    lattice: &EmissionLattice,
    vocab: &Vocab,
) -> Result<CtcScore, CtcError> {
    let mut state = ctc_init(lattice, vocab);
    let mut score = CtcScore { psi: 0.0, state: state.clone(), frames_computed: 0 };
    for &c in prefix {
        score = ctc_extend(&state, c, lattice, vocab)?;
        state = score.state.clone();
    }
    Ok(score)
}

/// Shared immutable handle for states held by many hypotheses.
pub type SharedState = Arc<CtcPrefixState>;

// === Brute-force oracle ===

/// Exact log probability, by enumeration of all V^T frame paths, that the
/// CTC-collapsed output begins with `prefix`. Verification oracle for the
/// forward recursion; guarded against blowup.
pub fn ctc_brute_force(
    prefix: &[TokenId],
    lattice: &EmissionLattice,
    vocab: &Vocab,
) -> Result<f64, CtcError> {
    brute_force(prefix, lattice, vocab, false)
}

/// Exact log probability that the collapsed output equals `sequence`
/// exactly (the eos case).
pub fn ctc_brute_force_exact(
    sequence: &[TokenId],
    lattice: &EmissionLattice,
    vocab: &Vocab,
) -> Result<f64, CtcError> {
    brute_force(sequence, lattice, vocab, true)
}

fn brute_force(
    prefix: &[TokenId],
    lattice: &EmissionLattice,
    vocab: &Vocab,
    exact: bool,
) -> Result<f64, CtcError> {
    for &c in prefix {
        if !vocab.is_regular(c) {
            return Err(CtcError::InvalidToken(c));
        }
    }
    let frames = lattice.num_frames();
    let v = lattice.vocab_size();
    let total_paths = (v as f64).powi(frames as i32);
    if total_paths > 1e7 {
        return Err(CtcError::TooLarge(total_paths));
    }
    let blank = vocab.blank_id();
    let mut path = vec![0usize; frames];
    let mut total = LOG_ZERO;
    loop {
        // collapse the path against the prefix as we walk it
        let mut matched = 0;
        let mut qualifies = true;
        let mut prev = usize::MAX;
        for &sym in &path {
            if sym != prev && sym != blank {
                if matched < prefix.len() {
                    if sym == prefix[matched] {
                        matched += 1;
                    } else {
                        qualifies = false;
                        break;
                    }
                } else if exact {
                    qualifies = false;
                    break;
                }
            }
            prev = sym;
        }
        if qualifies && matched == prefix.len() {
            let mut lp = 0.0;
            for (t, &sym) in path.iter().enumerate() {
                lp = log_mul(lp, lattice.log_prob(t, sym));
            }
            total = log_add(total, lp);
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == frames {
                return Ok(total);
            }
            path[pos] += 1;
            if path[pos] < v {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}
