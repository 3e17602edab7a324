//! Toy late-contextualization encoder.
//!
//! The bottom stage is a stack of causal convolutions processed segment by
//! segment with per-layer caches, so its output for any frame is available
//! during ingestion and identical no matter how the input was chunked. The
//! top stage is full-context single-head attention run once over whatever
//! frames exist, which is why a pilot's contextualized prefix differs from
//! the same frames inside the full utterance. Weights are random but seeded;
//! the module exists to exhibit the streaming/contextual structure and its
//! FLOPs split, not to be accurate. Accuracy experiments bypass it and take
//! lattices straight from the synthesizer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{EmissionLattice, SyntheticUtterance, Vocab, LOG_ZERO};
use crate::scorer::mix;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("expected {expected} feature dims, got {got}")]
    ShapeError { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub conv_layers: usize,
    /// Causal kernel width in frames; each output frame sees this many
    /// trailing input frames.
    pub kernel: usize,
    pub attn_layers: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { conv_layers: 2, kernel: 3, attn_layers: 2, dim: 16, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.conv_layers < 1 || self.attn_layers < 1 || self.kernel < 1 || self.dim < 1 {
            return Err(format!(
                "encoder config needs conv_layers/attn_layers/kernel/dim >= 1, got {self:?}"
            ));
        }
        Ok(())
    }
}

/// T x dim row-major feature matrix with a frame clock.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    data: Vec<f64>,
    dim: usize,
    frame_duration: f64,
}

impl LatentSequence {
    pub fn empty(dim: usize, frame_duration: f64) -> Self {
        LatentSequence { data: Vec::new(), dim, frame_duration }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, frame_duration: f64) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "ragged feature rows");
            data.extend_from_slice(&row);
        }
        LatentSequence { data, dim, frame_duration }
    }

    pub fn num_frames(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_duration
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Frames `range.start..range.end` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> LatentSequence {
        LatentSequence {
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            frame_duration: self.frame_duration,
        }
    }

    pub fn append(&mut self, other: &LatentSequence) {
        assert_eq!(self.dim, other.dim, "dim mismatch on append");
        self.data.extend_from_slice(&other.data);
    }
}

/// Per-layer trailing context for streaming convolution. Holds the last
/// kernel-1 input frames of every conv layer, zero-filled at stream start
/// (equivalent to left zero-padding).
#[derive(Debug, Clone)]
pub struct SegmentCache {
    tails: Vec<Vec<f64>>,
    frames_seen: usize,
}

impl SegmentCache {
    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }
}

pub struct Encoder {
    cfg: EncoderConfig,
    /// Per layer: kernel x dim x dim, indexed [lag][in][out].
    conv: Vec<Vec<f64>>,
    /// Per layer: three dim x dim projections (query, key, value).
    attn: Vec<[Vec<f64>; 3]>,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Self {
        let d = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x656e_6300));
        let conv_scale = (1.0 / (cfg.kernel * d) as f64).sqrt();
        let conv = (0..cfg.conv_layers)
            .map(|_| {
                (0..cfg.kernel * d * d)
                    .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * conv_scale)
                    .collect()
            })
            .collect();
        let attn_scale = (1.0 / d as f64).sqrt();
        let attn = (0..cfg.attn_layers)
            .map(|_| {
                [(); 3].map(|_| {
                    (0..d * d).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * attn_scale).collect()
                })
            })
            .collect();
        Encoder { cfg, conv, attn }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn new_cache(&self) -> SegmentCache {
        SegmentCache {
            tails: vec![vec![0.0; (self.cfg.kernel - 1) * self.cfg.dim]; self.cfg.conv_layers],
            frames_seen: 0,
        }
    }

    /// Runs the causal conv stack over one segment, continuing from the
    /// cache. Output frame t depends only on input frames <= t, so
    /// concatenated segment outputs equal the single-shot output bitwise for
    /// any segmentation. An empty segment returns an empty output and leaves
    /// the cache untouched.
    pub fn encode_segment(
        &self,
        cache: &mut SegmentCache,
        segment: &LatentSequence,
    ) -> Result<LatentSequence, EncoderError> {
        let d = self.cfg.dim;
        if segment.dim() != d {
            return Err(EncoderError::ShapeError { expected: d, got: segment.dim() });
        }
        let frames = segment.num_frames();
        if frames == 0 {
            return Ok(LatentSequence::empty(d, segment.frame_duration()));
        }
        let k = self.cfg.kernel;
        let tail_len = k - 1;
        let mut x = segment.data.clone();
        for (layer, weights) in self.conv.iter().enumerate() {
            let tail = &mut cache.tails[layer];
            // extended input: cached tail followed by this segment's frames
            let mut ext = Vec::with_capacity((tail_len + frames) * d);
            ext.extend_from_slice(tail);
            ext.extend_from_slice(&x);
            let mut y = vec![0.0; frames * d];
            for t in 0..frames {
                for lag in 0..k {
                    let src = &ext[(t + tail_len - lag) * d..(t + tail_len - lag + 1) * d];
                    let w = &weights[lag * d * d..(lag + 1) * d * d];
                    for (din, &xv) in src.iter().enumerate() {
                        let wrow = &w[din * d..(din + 1) * d];
                        let yrow = &mut y[t * d..(t + 1) * d];
                        for (dout, &wv) in wrow.iter().enumerate() {
                            yrow[dout] += xv * wv;
                        }
                    }
                }
                for v in &mut y[t * d..(t + 1) * d] {
                    *v = v.tanh();
                }
            }
            if tail_len > 0 {
                let total = tail_len + frames;
                tail.copy_from_slice(&ext[(total - tail_len) * d..total * d]);
            }
            x = y;
        }
        cache.frames_seen += frames;
        Ok(LatentSequence { data: x, dim: d, frame_duration: segment.frame_duration() })
    }

    /// Full-context attention stage: every output frame attends to every
    /// input frame. Run once, after ingestion, over all conv outputs.
    pub fn contextualize(&self, conv_out: &LatentSequence) -> LatentSequence {
        let d = self.cfg.dim;
        let t_len = conv_out.num_frames();
        let mut x = conv_out.data.clone();
        let scale = 1.0 / (d as f64).sqrt();
        for [wq, wk, wv] in &self.attn {
            let q = matmul(&x, wq, t_len, d);
            let k = matmul(&x, wk, t_len, d);
            let v = matmul(&x, wv, t_len, d);
            let mut out = vec![0.0; t_len * d];
            let mut scores = vec![0.0; t_len];
            for i in 0..t_len {
                let qi = &q[i * d..(i + 1) * d];
                let mut max = f64::NEG_INFINITY;
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &k[j * d..(j + 1) * d];
                    let mut dot = 0.0;
                    for (a, b) in qi.iter().zip(kj) {
                        dot += a * b;
                    }
                    *s = dot * scale;
                    if *s > max {
                        max = *s;
                    }
                }
                let mut denom = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    denom += *s;
                }
                let orow = &mut out[i * d..(i + 1) * d];
                for (j, &s) in scores.iter().enumerate() {
                    let weight = s / denom;
                    let vj = &v[j * d..(j + 1) * d];
                    for (o, &vv) in orow.iter_mut().zip(vj) {
                        *o += weight * vv;
                    }
                }
            }
            for (xv, ov) in x.iter_mut().zip(&out) {
                *xv += ov;
            }
        }
        LatentSequence { data: x, dim: d, frame_duration: conv_out.frame_duration() }
    }

    /// Projects latents to a normalized emission lattice. The projection is
    /// seeded by (encoder seed, vocab size); sos and eos get zero frame
    /// mass, matching synthesized lattices.
    pub fn project_ctc(&self, z: &LatentSequence, vocab: &Vocab) -> EmissionLattice {
        let d = self.cfg.dim;
        let v = vocab.size();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.cfg.seed, 0x70_726f_6a00 ^ v as u64));
        let scale = (1.0 / d as f64).sqrt();
        let w: Vec<f64> = (0..d * v).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect();
        let mut rows = Vec::with_capacity(z.num_frames());
        for t in 0..z.num_frames() {
            let zt = z.frame(t);
            let mut logits = vec![f64::NEG_INFINITY; v];
            for c in 0..v {
                if c == vocab.sos_id() || c == vocab.eos_id() {
                    continue;
                }
                let mut dot = 0.0;
                for (din, &zv) in zt.iter().enumerate() {
                    dot += zv * w[din * v + c];
                }
                logits[c] = dot;
            }
            // log-softmax over the participating entries
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &l in &logits {
                if l.is_finite() {
                    denom += (l - max).exp();
                }
            }
            let lse = max + denom.ln();
            let row: Vec<f64> =
                logits.iter().map(|&l| if l.is_finite() { l - lse } else { LOG_ZERO }).collect();
            rows.push(row);
        }
        EmissionLattice::from_rows(rows, z.frame_duration()).expect("softmax rows normalized")
    }
}

fn matmul(x: &[f64], w: &[f64], rows: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * d];
    for i in 0..rows {
        let xi = &x[i * d..(i + 1) * d];
        let oi = &mut out[i * d..(i + 1) * d];
        for (din, &xv) in xi.iter().enumerate() {
            let wrow = &w[din * d..(din + 1) * d];
            for (o, &wv) in oi.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Synthetic input features for encoder-mode runs: per frame, the seeded
/// embedding of the anchored truth token (blank elsewhere) plus
/// noise-level-scaled jitter.
pub fn utterance_features(
    utt: &SyntheticUtterance,
    vocab: &Vocab,
    cfg: &EncoderConfig,
    frame_rate_hz: f64,
    seed: u64,
) -> LatentSequence {
    let d = cfg.dim;
    let frames = utt.num_frames(frame_rate_hz);
    let mut table_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x6665_6174_0000));
    let table: Vec<f64> =
        (0..vocab.size() * d).map(|_| table_rng.gen::<f64>() * 2.0 - 1.0).collect();
    let mut target = vec![vocab.blank_id(); frames];
    for (&tok, &f) in utt.truth.iter().zip(&utt.alignment) {
        if f < frames {
            target[f] = tok;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(frames * d);
    for &tok in target.iter() {
        for i in 0..d {
            let jitter = (rng.gen::<f64>() * 2.0 - 1.0) * utt.noise_level;
            data.push(table[tok * d + i] + jitter);
        }
    }
    LatentSequence { data, dim: d, frame_duration: 1.0 / frame_rate_hz }
}

// === FLOPs accounting ===

/// Analytic per-utterance FLOPs split between the streaming (conv) and
/// contextual (attention) stages. Multiply-accumulates count as 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub streaming: f64,
    pub contextual: f64,
}

impl FlopsReport {
    pub fn total(&self) -> f64 {
        self.streaming + self.contextual
    }

    pub fn streaming_fraction(&self) -> f64 {
        self.streaming / self.total()
    }
}

pub fn flops_report(cfg: &EncoderConfig, num_frames: usize) -> FlopsReport {
    let t = num_frames as f64;
    let d = cfg.dim as f64;
    let k = cfg.kernel as f64;
    let streaming = cfg.conv_layers as f64 * t * (2.0 * k * d * d + d);
    let contextual = cfg.attn_layers as f64
        * (6.0 * t * d * d + 4.0 * t * t * d + 5.0 * t * t + t * d);
    FlopsReport { streaming, contextual }
}
