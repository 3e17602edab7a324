//! Vocabularies, emission lattices, and a synthetic-utterance generator.
//!
//! An emission lattice is the T x V matrix of per-frame token log-posteriors
//! that the CTC scorer consumes. The generator produces lattices with a known
//! ground-truth token sequence at a controllable difficulty: each frame mixes
//! a truth-aligned one-hot distribution with a random one, weighted by the
//! utterance's noise level, so zero-noise lattices greedy-decode exactly to
//! the truth and high-noise lattices do not.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TokenId = usize;

/// Sentinel for log(0). Large enough in magnitude that no genuine score
/// reaches it, small enough that sums of a few of them stay finite, so NaN
/// never appears in the arithmetic.
pub const LOG_ZERO: f64 = -1.0e30;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("invalid vocab: {0}")]
    InvalidVocab(String),
    #[error("invalid utterance: {0}")]
    InvalidUtterance(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("lattice row {row} is not a normalized log-distribution (log-sum-exp {lse:.3e})")]
    NotNormalized { row: usize, lse: f64 },
    #[error("lattice shape invalid: {0}")]
    BadShape(String),
}

// === Vocabulary ===

/// Token inventory with the three structural symbols (blank, sos, eos) plus
/// regular tokens. Beam search candidates are the regular tokens and eos;
/// blank exists only inside lattice frames, sos only as the hypothesis root.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    blank_id: TokenId,
    sos_id: TokenId,
    eos_id: TokenId,
    candidates: Vec<TokenId>,
}

impl Vocab {
    pub fn new(
        tokens: Vec<String>,
        blank_id: TokenId,
        sos_id: TokenId,
        eos_id: TokenId,
    ) -> Result<Self, LatticeError> {
        let n = tokens.len();
        if n < 4 {
            return Err(LatticeError::InvalidVocab(format!(
                "need at least 4 tokens (blank, sos, eos, one regular), got {n}"
            )));
        }
        for (&id, name) in [(blank_id, "blank"), (sos_id, "sos"), (eos_id, "eos")]
            .iter()
            .map(|(id, name)| (id, *name))
        {
            if id >= n {
                return Err(LatticeError::InvalidVocab(format!(
                    "{name}_id {id} out of range for {n} tokens"
                )));
            }
        }
        if blank_id == sos_id || blank_id == eos_id || sos_id == eos_id {
            return Err(LatticeError::InvalidVocab(
                "blank/sos/eos ids must be distinct".into(),
            ));
        }
        let mut candidates: Vec<TokenId> =
            (0..n).filter(|&i| i != blank_id && i != sos_id && i != eos_id).collect();
        candidates.push(eos_id);
        candidates.sort_unstable();
        Ok(Vocab { tokens, blank_id, sos_id, eos_id, candidates })
    }

    /// Standard layout: `<blank>`, `<sos>`, `<eos>`, then `n` regular tokens
    /// named t00, t01, ...
    pub fn with_regular_tokens(n: usize) -> Result<Self, LatticeError> {
        if n == 0 {
            return Err(LatticeError::InvalidVocab("need at least one regular token".into()));
        }
        let mut tokens = vec!["<blank>".to_string(), "<sos>".to_string(), "<eos>".to_string()];
        tokens.extend((0..n).map(|i| format!("t{i:02}")));
        Vocab::new(tokens, 0, 1, 2)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn blank_id(&self) -> TokenId {
        self.blank_id
    }

    pub fn sos_id(&self) -> TokenId {
        self.sos_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokens a decoder may emit: every regular token plus eos, ascending.
    pub fn candidates(&self) -> &[TokenId] {
        &self.candidates
    }

    /// Regular tokens only (no blank/sos/eos), ascending.
    pub fn regular_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        let eos = self.eos_id;
        self.candidates.iter().copied().filter(move |&c| c != eos)
    }

    pub fn is_regular(&self, id: TokenId) -> bool {
        id < self.size() && id != self.blank_id && id != self.sos_id && id != self.eos_id
    }
}

// === Emission lattice ===

/// T x V per-frame token log-posteriors, row-major. Every row log-sum-exps
/// to 0 (a normalized distribution); zero-probability entries hold
/// [`LOG_ZERO`] rather than -inf.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionLattice {
    log_probs: Vec<f64>,
    vocab_size: usize,
    frame_duration: f64,
}

impl EmissionLattice {
    /// Builds a lattice from per-frame rows, validating shape and
    /// normalization (log-sum-exp of each row within 1e-6 of 0).
    pub fn from_rows(rows: Vec<Vec<f64>>, frame_duration: f64) -> Result<Self, LatticeError> {
        if rows.is_empty() {
            return Err(LatticeError::BadShape("lattice needs at least one frame".into()));
        }
        if !(frame_duration > 0.0) || !frame_duration.is_finite() {
            return Err(LatticeError::BadShape(format!(
                "frame_duration must be positive and finite, got {frame_duration}"
            )));
        }
        let vocab_size = rows[0].len();
        if vocab_size == 0 {
            return Err(LatticeError::BadShape("lattice rows are empty".into()));
        }
        let mut log_probs = Vec::with_capacity(rows.len() * vocab_size);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != vocab_size {
                return Err(LatticeError::BadShape(format!(
                    "row {t} has {} entries, expected {vocab_size}",
                    row.len()
                )));
            }
            for &lp in row {
                if lp.is_nan() || lp == f64::INFINITY {
                    return Err(LatticeError::BadShape(format!(
                        "row {t} contains a non-finite log-prob {lp}"
                    )));
                }
            }
            let lse = log_sum_exp(row);
            if lse.abs() > 1e-6 {
                return Err(LatticeError::NotNormalized { row: t, lse });
            }
            log_probs.extend_from_slice(row);
        }
        Ok(EmissionLattice { log_probs, vocab_size, frame_duration })
    }

    pub fn num_frames(&self) -> usize {
        self.log_probs.len() / self.vocab_size
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_duration
    }

    pub fn duration_s(&self) -> f64 {
        self.num_frames() as f64 * self.frame_duration
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let v = self.vocab_size;
        &self.log_probs[t * v..(t + 1) * v]
    }

    pub fn log_prob(&self, t: usize, c: TokenId) -> f64 {
        self.log_probs[t * self.vocab_size + c]
    }

    /// The first `frames` rows as their own lattice (what a pilot decode sees
    /// after ingesting that much of the input).
    pub fn prefix(&self, frames: usize) -> Result<EmissionLattice, LatticeError> {
        if frames == 0 || frames > self.num_frames() {
            return Err(LatticeError::BadShape(format!(
                "prefix of {frames} frames out of range 1..={}",
                self.num_frames()
            )));
        }
        Ok(EmissionLattice {
            log_probs: self.log_probs[..frames * self.vocab_size].to_vec(),
            vocab_size: self.vocab_size,
            frame_duration: self.frame_duration,
        })
    }

    /// Per-frame argmax followed by standard CTC collapse (dedupe runs, strip
    /// blanks). Ties resolve to the lowest token id.
    pub fn greedy_collapse(&self, blank_id: TokenId) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut prev = usize::MAX;
        for t in 0..self.num_frames() {
            let row = self.row(t);
            let mut best = 0;
            for (c, &lp) in row.iter().enumerate() {
                if lp > row[best] {
                    best = c;
                }
            }
            if best != prev && best != blank_id {
                out.push(best);
            }
            prev = best;
        }
        out
    }

    /// Copy with every row's log-probs jittered by seeded uniform noise in
    /// [-amplitude, amplitude] and renormalized. Emulates the discrepancy
    /// between a lattice computed from partial context and the true prefix.
    pub fn jittered(&self, amplitude: f64, seed: u64) -> EmissionLattice {
        if amplitude == 0.0 {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = self.vocab_size;
        let mut rows = Vec::with_capacity(self.num_frames());
        for t in 0..self.num_frames() {
            let mut row = self.row(t).to_vec();
            for lp in row.iter_mut() {
                if *lp > LOG_ZERO {
                    *lp += (rng.gen::<f64>() * 2.0 - 1.0) * amplitude;
                }
            }
            let lse = log_sum_exp(&row);
            for lp in row.iter_mut() {
                if *lp > LOG_ZERO {
                    *lp -= lse;
                } else {
                    *lp = LOG_ZERO;
                }
            }
            let _ = v;
            rows.push(row);
        }
        EmissionLattice::from_rows(rows, self.frame_duration).expect("renormalized rows")
    }
}

/// Log-sum-exp with the [`LOG_ZERO`] sentinel: entries at or below the
/// sentinel contribute nothing.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let mut max = LOG_ZERO;
    for &lp in row {
        if lp > max {
            max = lp;
        }
    }
    if max <= LOG_ZERO {
        return LOG_ZERO;
    }
    let mut sum = 0.0;
    for &lp in row {
        if lp > LOG_ZERO {
            sum += (lp - max).exp();
        }
    }
    max + sum.ln()
}

// === Synthetic utterances ===

/// Ground truth for one synthetic utterance: the token sequence, the frame
/// each token is anchored to, a difficulty knob, and the audio duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticUtterance {
    pub truth: Vec<TokenId>,
    pub alignment: Vec<usize>,
    pub noise_level: f64,
    pub duration_s: f64,
}

impl SyntheticUtterance {
    pub fn num_frames(&self, frame_rate_hz: f64) -> usize {
        (self.duration_s * frame_rate_hz).round() as usize
    }
}

/// Lattice-synthesis constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeParams {
    /// Frames per second of the emission lattice.
    pub frame_rate_hz: f64,
    /// Multiplier on blank mass in noisy frames; values above 1 keep noisy
    /// alignments blank-dominated between anchored tokens.
    pub blank_bias: f64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        LatticeParams { frame_rate_hz: 25.0, blank_bias: 2.0 }
    }
}

/// Synthesizes the emission lattice for an utterance with default params
/// (25 frames/s, blank bias 2).
pub fn make_lattice(
    utt: &SyntheticUtterance,
    vocab: &Vocab,
    seed: u64,
) -> Result<EmissionLattice, LatticeError> {
    make_lattice_with(utt, vocab, seed, &LatticeParams::default())
}

/// Synthesizes the emission lattice for an utterance.
///
/// Each frame's distribution is `(1 - noise) * onehot + noise * dirichlet`
/// over blank plus the regular tokens, where the one-hot target is the
/// aligned truth token on anchored frames and blank elsewhere; the blank
/// entry is then multiplied by `blank_bias` before normalization. At noise 0
/// the per-frame argmax path collapses exactly to the truth.
pub fn make_lattice_with(
    utt: &SyntheticUtterance,
    vocab: &Vocab,
    seed: u64,
    params: &LatticeParams,
) -> Result<EmissionLattice, LatticeError> {
    if !(params.frame_rate_hz > 0.0) || !(params.blank_bias > 0.0) {
        return Err(LatticeError::InvalidConfig(
            "frame_rate_hz and blank_bias must be positive".into(),
        ));
    }
    let frames = utt.num_frames(params.frame_rate_hz);
    validate_utterance(utt, vocab, frames)?;
    let frame_duration = 1.0 / params.frame_rate_hz;

    let blank = vocab.blank_id();
    let v = vocab.size();
    let mut target = vec![blank; frames];
    for (&tok, &f) in utt.truth.iter().zip(&utt.alignment) {
        target[f] = tok;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = utt.noise_level;
    let mut rows = Vec::with_capacity(frames);
    for t in 0..frames {
        // Dirichlet(1) noise over blank + regular tokens, drawn every frame
        // so the stream position is independent of noise_level.
        let mut weights = vec![0.0f64; v];
        let mut gsum = 0.0;
        for c in 0..v {
            if c == vocab.sos_id() || c == vocab.eos_id() {
                continue;
            }
            let g = -(1.0 - rng.gen::<f64>()).ln();
            weights[c] = g;
            gsum += g;
        }
        let mut total = 0.0;
        for c in 0..v {
            if c == vocab.sos_id() || c == vocab.eos_id() {
                continue;
            }
            let onehot = if c == target[t] { 1.0 } else { 0.0 };
            let mut w = (1.0 - noise) * onehot + noise * weights[c] / gsum;
            if c == blank {
                w *= params.blank_bias;
            }
            weights[c] = w;
            total += w;
        }
        let mut row = vec![LOG_ZERO; v];
        for c in 0..v {
            if weights[c] > 0.0 && c != vocab.sos_id() && c != vocab.eos_id() {
                row[c] = (weights[c] / total).ln();
            }
        }
        rows.push(row);
    }
    EmissionLattice::from_rows(rows, frame_duration)
}

fn validate_utterance(
    utt: &SyntheticUtterance,
    vocab: &Vocab,
    frames: usize,
) -> Result<(), LatticeError> {
    if utt.truth.is_empty() {
        return Err(LatticeError::InvalidUtterance("truth is empty".into()));
    }
    if utt.truth.len() != utt.alignment.len() {
        return Err(LatticeError::InvalidUtterance(format!(
            "{} truth tokens but {} alignment entries",
            utt.truth.len(),
            utt.alignment.len()
        )));
    }
    if !(utt.duration_s > 0.0) || frames == 0 {
        return Err(LatticeError::InvalidUtterance(format!(
            "duration {}s yields no frames",
            utt.duration_s
        )));
    }
    if !(0.0..=1.0).contains(&utt.noise_level) {
        return Err(LatticeError::InvalidUtterance(format!(
            "noise_level {} outside [0, 1]",
            utt.noise_level
        )));
    }
    for &tok in &utt.truth {
        if !vocab.is_regular(tok) {
            return Err(LatticeError::InvalidUtterance(format!(
                "truth token {tok} is not a regular vocab token"
            )));
        }
    }
    for w in utt.alignment.windows(2) {
        if w[1] <= w[0] {
            return Err(LatticeError::InvalidUtterance(
                "alignment must be strictly increasing".into(),
            ));
        }
    }
    if let Some(&last) = utt.alignment.last() {
        if last >= frames {
            return Err(LatticeError::InvalidUtterance(format!(
                "alignment frame {last} out of range for {frames} frames"
            )));
        }
    }
    // A repeated token on adjacent frames would collapse to one occurrence,
    // so no lattice could greedy-decode to the truth.
    for i in 1..utt.truth.len() {
        if utt.truth[i] == utt.truth[i - 1] && utt.alignment[i] == utt.alignment[i - 1] + 1 {
            return Err(LatticeError::InvalidUtterance(format!(
                "repeated token {} on adjacent frames {} and {}",
                utt.truth[i],
                utt.alignment[i - 1],
                utt.alignment[i]
            )));
        }
    }
    Ok(())
}

// === Corpus generation ===

/// Corpus-level generation knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusParams {
    /// Utterance durations are drawn uniformly from this range (seconds).
    pub duration_range_s: (f64, f64),
    /// Mean speaking rate; per-utterance rates vary +-25% around it.
    pub tokens_per_s: f64,
    /// Must match the lattice frame rate so alignments land on frames.
    pub frame_rate_hz: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams { duration_range_s: (2.0, 6.0), tokens_per_s: 2.5, frame_rate_hz: 25.0 }
    }
}

/// Generates `n` utterances with noise levels drawn from `difficulty_mix`,
/// a list of `(noise_level, fraction)` pairs whose fractions sum to 1.
/// Class counts are exact (largest-remainder apportionment), durations and
/// token content are seeded draws, and alignments always leave at least one
/// blank frame between consecutive tokens.
pub fn gen_corpus(
    vocab: &Vocab,
    n: usize,
    difficulty_mix: &[(f64, f64)],
    seed: u64,
) -> Result<Vec<SyntheticUtterance>, LatticeError> {
    gen_corpus_with(vocab, n, difficulty_mix, seed, &CorpusParams::default())
}

pub fn gen_corpus_with(
    vocab: &Vocab,
    n: usize,
    difficulty_mix: &[(f64, f64)],
    seed: u64,
    params: &CorpusParams,
) -> Result<Vec<SyntheticUtterance>, LatticeError> {
    if difficulty_mix.is_empty() {
        return Err(LatticeError::InvalidConfig("difficulty mix is empty".into()));
    }
    let total: f64 = difficulty_mix.iter().map(|&(_, f)| f).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(LatticeError::InvalidConfig(format!(
            "difficulty mix fractions sum to {total}, expected 1"
        )));
    }
    for &(noise, frac) in difficulty_mix {
        if !(0.0..=1.0).contains(&noise) || frac < 0.0 {
            return Err(LatticeError::InvalidConfig(format!(
                "bad mix entry (noise {noise}, fraction {frac})"
            )));
        }
    }
    let (lo, hi) = params.duration_range_s;
    if !(lo > 0.0) || hi < lo {
        return Err(LatticeError::InvalidConfig(format!("bad duration range [{lo}, {hi}]")));
    }
    if !(params.tokens_per_s > 0.0) || !(params.frame_rate_hz > 0.0) {
        return Err(LatticeError::InvalidConfig(
            "tokens_per_s and frame_rate_hz must be positive".into(),
        ));
    }

    // Exact class counts: floor everything, then hand out the remainder by
    // largest fractional part (ties to the earlier class).
    let mut counts: Vec<usize> =
        difficulty_mix.iter().map(|&(_, f)| (f * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..difficulty_mix.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = difficulty_mix[a].1 * n as f64;
        let fb = difficulty_mix[b].1 * n as f64;
        (fb - fb.floor()).partial_cmp(&(fa - fa.floor())).unwrap().then(a.cmp(&b))
    });
    for i in 0..n - assigned {
        counts[order[i % order.len()]] += 1;
    }

    let rate = params.frame_rate_hz;
    let lo_frames = (lo * rate).ceil() as usize;
    let hi_frames = ((hi * rate).floor() as usize).max(lo_frames);
    let regular: Vec<TokenId> = vocab.regular_tokens().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        let noise = difficulty_mix[class].0;
        for _ in 0..count {
            let frames = rng.gen_range(lo_frames..=hi_frames);
            let duration = frames as f64 / rate;
            let rate_jitter = 0.75 + 0.5 * rng.gen::<f64>();
            let want = (duration * params.tokens_per_s * rate_jitter).round() as usize;
            // Gap of >= 2 frames between anchors keeps repeated tokens apart.
            let max_tokens = (frames + 1) / 2;
            let m = want.clamp(1, max_tokens.max(1));
            let slack = (frames - 1).saturating_sub(2 * (m - 1));
            let mut offsets: Vec<usize> = if slack == 0 {
                vec![0; m]
            } else {
                (0..m).map(|_| rng.gen_range(0..slack)).collect()
            };
            offsets.sort_unstable();
            let alignment: Vec<usize> = (0..m).map(|i| 2 * i + offsets[i]).collect();
            let truth: Vec<TokenId> =
                (0..m).map(|_| regular[rng.gen_range(0..regular.len())]).collect();
            out.push(SyntheticUtterance {
                truth,
                alignment,
                noise_level: noise,
                duration_s: duration,
            });
        }
    }
    Ok(out)
}

// === Corpus serialization ===

/// Serializable vocabulary description used in corpus files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSpec {
    pub tokens: Vec<String>,
    pub blank_id: TokenId,
    pub sos_id: TokenId,
    pub eos_id: TokenId,
}

impl VocabSpec {
    pub fn from_vocab(vocab: &Vocab) -> Self {
        VocabSpec {
            tokens: vocab.tokens().to_vec(),
            blank_id: vocab.blank_id(),
            sos_id: vocab.sos_id(),
            eos_id: vocab.eos_id(),
        }
    }

    pub fn to_vocab(&self) -> Result<Vocab, LatticeError> {
        Vocab::new(self.tokens.clone(), self.blank_id, self.sos_id, self.eos_id)
    }
}

/// Optional pre-rendered lattice in a corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub frame_duration: f64,
    pub rows: Vec<Vec<f64>>,
}

/// On-disk corpus: vocabulary, generation seed, utterances, and optionally
/// the rendered lattices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    pub vocab: VocabSpec,
    pub frame_rate_hz: f64,
    pub seed: u64,
    pub utterances: Vec<SyntheticUtterance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattices: Option<Vec<LatticeSpec>>,
}
