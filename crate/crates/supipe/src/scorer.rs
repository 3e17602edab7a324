//! Autoregressive next-token scorers standing in for an attention decoder.
//!
//! Both scorers emit a normalized log-distribution over the full vocabulary
//! given the emitted prefix and the visible lattice context, and both are
//! pure functions of (prefix, context, seed), so decodes are reproducible.
//! The n-gram scorer is a fixed seeded conditional table with a built-in
//! length model; the teacher scorer peaks on the ground-truth continuation
//! with tunable fidelity, which lets experiments dial hypothesis quality up
//! and down without any training.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{EmissionLattice, SyntheticUtterance, TokenId, Vocab, LOG_ZERO};

/// Decode effort counters. Attention evaluations are the unit the pilot
/// optimizations exist to save; CTC frames measure the forward-recursion
/// work that leap skips.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfeReport {
    pub attn_evals: u64,
    pub ctc_frames_scored: u64,
    pub decode_rounds: u64,
}

impl NfeReport {
    pub fn absorb(&mut self, other: &NfeReport) {
        self.attn_evals += other.attn_evals;
        self.ctc_frames_scored += other.ctc_frames_scored;
        self.decode_rounds += other.decode_rounds;
    }
}

/// Next-token scorer interface. `prefix` holds emitted tokens only (no
/// sos/eos); the returned vector spans the full vocabulary and log-sum-exps
/// to 0, with blank and sos at [`LOG_ZERO`].
pub trait AttnScorer {
    fn next_log_probs(&self, prefix: &[TokenId], context: &EmissionLattice) -> Vec<f64>;

    /// Total next_log_probs calls since construction.
    fn nfe(&self) -> u64;
}

/// Stable 64-bit mixing (splitmix64 finalizer). Used instead of the
/// standard library hasher because reruns must be byte-identical across
/// compiler releases.
pub(crate) fn mix(h: u64, v: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(h ^ splitmix(v))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dirichlet(1) draw over the given ids, written into `out` scaled by
/// `mass`.
fn scaled_simplex(rng: &mut ChaCha8Rng, ids: &[TokenId], mass: f64, out: &mut [f64]) {
    let mut total = 0.0;
    for &c in ids {
        let w = -(1.0 - rng.gen::<f64>()).ln();
        out[c] = w;
        total += w;
    }
    for &c in ids {
        out[c] = out[c] / total * mass;
    }
}

fn to_log(probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|&p| if p > 0.0 { p.ln() } else { LOG_ZERO }).collect()
}

// === N-gram scorer ===

/// Seeded conditional distribution over next tokens given the trailing
/// `order - 1` emitted tokens, with an eos probability that rises once the
/// prefix passes the context-proportional expected length.
pub struct NgramScorer {
    order: usize,
    seed: u64,
    regular: Vec<TokenId>,
    eos_id: TokenId,
    vocab_size: usize,
    /// Expected output tokens per lattice frame (length model center).
    pub tokens_per_frame: f64,
    /// Length-model softness in tokens; smaller is sharper.
    pub eos_sharpness: f64,
    nfe: AtomicU64,
}

impl NgramScorer {
    pub fn new(order: usize, vocab: &Vocab, seed: u64) -> Self {
        NgramScorer {
            order: order.max(1),
            seed,
            regular: vocab.regular_tokens().collect(),
            eos_id: vocab.eos_id(),
            vocab_size: vocab.size(),
            tokens_per_frame: 0.1,
            eos_sharpness: 1.0,
            nfe: AtomicU64::new(0),
        }
    }
}

impl AttnScorer for NgramScorer {
    fn next_log_probs(&self, prefix: &[TokenId], context: &EmissionLattice) -> Vec<f64> {
        self.nfe.fetch_add(1, Ordering::Relaxed);
        let expected = context.num_frames() as f64 * self.tokens_per_frame;
        let p_eos = logistic((prefix.len() as f64 - expected) / self.eos_sharpness);

        let mut h = mix(self.seed, 0x6e67_7261_6d00);
        let from = prefix.len().saturating_sub(self.order - 1);
        for &tok in &prefix[from..] {
            h = mix(h, tok as u64 + 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let mut probs = vec![0.0; self.vocab_size];
        scaled_simplex(&mut rng, &self.regular, 1.0 - p_eos, &mut probs);
        probs[self.eos_id] = p_eos;
        to_log(&probs)
    }

    fn nfe(&self) -> u64 {
        self.nfe.load(Ordering::Relaxed)
    }
}

// === Teacher scorer ===

/// Scorer that knows the ground truth. At each position it assigns
/// `fidelity` of the mass to the correct continuation (the next truth token
/// whose anchor frame is inside the visible context, or eos once they are
/// exhausted) and spreads the rest over a seeded noise simplex. On a partial
/// lattice it therefore predicts only the tokens heard so far, the way a
/// real decoder's pilot pass would.
pub struct TeacherScorer {
    truth: Vec<TokenId>,
    alignment: Vec<usize>,
    fidelity: f64,
    seed: u64,
    candidates: Vec<TokenId>,
    eos_id: TokenId,
    vocab_size: usize,
    nfe: AtomicU64,
}

impl TeacherScorer {
    pub fn new(utt: &SyntheticUtterance, fidelity: f64, vocab: &Vocab, seed: u64) -> Self {
        TeacherScorer {
            truth: utt.truth.clone(),
            alignment: utt.alignment.clone(),
            fidelity: fidelity.clamp(0.0, 1.0),
            seed,
            candidates: vocab.candidates().to_vec(),
            eos_id: vocab.eos_id(),
            vocab_size: vocab.size(),
            nfe: AtomicU64::new(0),
        }
    }
}

impl AttnScorer for TeacherScorer {
    fn next_log_probs(&self, prefix: &[TokenId], context: &EmissionLattice) -> Vec<f64> {
        self.nfe.fetch_add(1, Ordering::Relaxed);
        let frames = context.num_frames();
        let visible = self.alignment.iter().filter(|&&f| f < frames).count();
        let target = if prefix.len() < visible { self.truth[prefix.len()] } else { self.eos_id };

        // Noise is keyed by the prefix alone so a pilot decode and the full
        // decode disagree only where their targets differ.
        let mut h = mix(self.seed, 0x7465_6163_6800);
        for &tok in prefix {
            h = mix(h, tok as u64 + 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let mut probs = vec![0.0; self.vocab_size];
        if self.fidelity < 1.0 {
            scaled_simplex(&mut rng, &self.candidates, 1.0 - self.fidelity, &mut probs);
        }
        probs[target] += self.fidelity;
        to_log(&probs)
    }

    fn nfe(&self) -> u64 {
        self.nfe.load(Ordering::Relaxed)
    }
}

// === Config-driven construction ===

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Teacher,
    Ngram,
}

/// How the teacher's fidelity is chosen per utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMode {
    /// Use `fidelity` as-is for every utterance.
    Fixed,
    /// Use `1 - noise_level`, so clean utterances get a sharp scorer and
    /// noisy ones a blurry one.
    NoiseCoupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    pub fidelity: f64,
    pub fidelity_mode: FidelityMode,
    pub ngram_order: usize,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec {
            kind: ScorerKind::Teacher,
            fidelity: 0.9,
            fidelity_mode: FidelityMode::Fixed,
            ngram_order: 2,
        }
    }
}

impl ScorerSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(format!("scorer fidelity must lie in [0, 1], got {}", self.fidelity));
        }
        if self.ngram_order < 1 {
            return Err("ngram_order must be >= 1".into());
        }
        Ok(())
    }

    pub fn build(&self, utt: &SyntheticUtterance, vocab: &Vocab, seed: u64) -> Box<dyn AttnScorer> {
        match self.kind {
            ScorerKind::Ngram => Box::new(NgramScorer::new(self.ngram_order, vocab, seed)),
            ScorerKind::Teacher => {
                let fidelity = match self.fidelity_mode {
                    FidelityMode::Fixed => self.fidelity,
                    FidelityMode::NoiseCoupled => 1.0 - utt.noise_level,
                };
                Box::new(TeacherScorer::new(utt, fidelity, vocab, seed))
            }
        }
    }
}
