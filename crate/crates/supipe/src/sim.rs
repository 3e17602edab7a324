//! Deterministic latency simulation and sweep experiments.
//!
//! The device is modeled as a single serial worker with a busy frontier.
//! During ingestion it receives one frame of audio every frame period and
//! pays the streaming (conv) cost per frame; pilot decodes enter the same
//! queue at their trigger times, FIFO, frames first on ties, and once
//! started always run to completion. A pilot whose would-be start lands at
//! or after the utterance end is skipped. User-visible local latency starts
//! when the audio ends: whatever ingest work is still queued must drain,
//! then the full-context attention pass runs, then the final decode. When
//! pilots fit inside their budget the drain is (near) zero and pilot compute
//! never shows up in user latency; when they do not, the schedule is flagged
//! infeasible and the overflow surfaces as drain.
//!
//! The offload path ships the audio after the utterance ends and pays
//! upload, round-trip, and cloud compute; its transcript is the truth with a
//! small seeded residual error. Both paths are computed for every utterance
//! exactly once, so threshold and baseline sweeps reduce to re-aggregation
//! with no re-decoding and no seed coupling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{beam_search, BeamConfig, BeamError};
use crate::encoder::{utterance_features, Encoder, EncoderConfig, EncoderError, LatentSequence};
use crate::lattice::{
    make_lattice_with, EmissionLattice, LatticeError, LatticeParams, SyntheticUtterance, TokenId,
    Vocab,
};
use crate::metrics::{edit_distance, MetricsError, WerBreakdown};
use crate::offramp::{OfframpConfig, OfframpError, ProbBasis};
use crate::pilot::{
    partial_frames, pilot_budget, run_pilot, schedule_pilots, PilotConfig, PilotError,
    PilotSummary, PilotTrace,
};
use crate::scorer::{mix, NfeReport, ScorerSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Pilot(#[from] PilotError),
    #[error(transparent)]
    Offramp(#[from] OfframpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("invalid sim config: {0}")]
    Config(String),
}

/// A scalar that is either fixed or drawn uniformly per utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl Sampler {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Sampler::Fixed(v) => v,
            Sampler::Uniform { lo, hi } => lo + rng.gen::<f64>() * (hi - lo),
        }
    }

    pub fn validate(&self, name: &str) -> Result<(), SimError> {
        let ok = match *self {
            Sampler::Fixed(v) => v >= 0.0 && v.is_finite(),
            Sampler::Uniform { lo, hi } => lo >= 0.0 && hi >= lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("{name} must be non-negative and ordered")))
        }
    }
}

/// Per-operation compute costs on the local device, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    /// Streaming cost per conv layer per frame.
    pub conv_frame_s: f64,
    /// Full-context attention cost per attn layer per frame^2.
    pub attn_frame_sq_s: f64,
    /// Cost of one decoder attention evaluation.
    pub attn_eval_s: f64,
    /// Cost of scoring one CTC frame.
    pub ctc_frame_s: f64,
    pub conv_layers: usize,
    pub attn_layers: usize,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            conv_frame_s: 2.0e-4,
            attn_frame_sq_s: 1.0e-5,
            attn_eval_s: 2.0e-3,
            ctc_frame_s: 1.0e-6,
            conv_layers: 2,
            attn_layers: 2,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let vals = [self.conv_frame_s, self.attn_frame_sq_s, self.attn_eval_s, self.ctc_frame_s];
        if vals.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SimError::Config("cost model entries must be non-negative".into()));
        }
        Ok(())
    }

    /// Streaming work triggered by one arriving frame.
    pub fn ingest_frame_cost(&self) -> f64 {
        self.conv_layers as f64 * self.conv_frame_s
    }

    /// Full-context attention over `frames` frames.
    pub fn context_cost(&self, frames: usize) -> f64 {
        self.attn_layers as f64 * (frames * frames) as f64 * self.attn_frame_sq_s
    }

    /// Beam-search compute from its effort counters.
    pub fn decode_cost(&self, nfe: &NfeReport) -> f64 {
        nfe.attn_evals as f64 * self.attn_eval_s
            + nfe.ctc_frames_scored as f64 * self.ctc_frame_s
    }

    /// One pilot: contextualize the heard prefix, then its beam search.
    pub fn pilot_cost(&self, partial_frames: usize, nfe: &NfeReport) -> f64 {
        self.context_cost(partial_frames) + self.decode_cost(nfe)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkModel {
    pub rtt_s: Sampler,
    pub upload_s_per_kb: f64,
    pub audio_kb_per_s: f64,
    pub cloud_compute_s: Sampler,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            rtt_s: Sampler::Fixed(0.15),
            upload_s_per_kb: 0.003,
            audio_kb_per_s: 32.0,
            cloud_compute_s: Sampler::Fixed(0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudModel {
    /// Cloud transcripts substitute each truth token with this probability.
    pub residual_error_rate: f64,
}

impl Default for CloudModel {
    fn default() -> Self {
        CloudModel { residual_error_rate: 0.02 }
    }
}

/// Where emission lattices come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// Lattices synthesized directly from the utterance; pilot lattices are
    /// exact prefixes (optionally jittered). The accuracy workhorse.
    #[default]
    Teacher,
    /// Lattices produced by the toy encoder; pilot lattices re-contextualize
    /// the heard prefix, so they genuinely differ from the final lattice the
    /// way a streaming system's do.
    Encoder,
}

/// Everything one utterance's simulation depends on besides the utterance
/// itself and the seed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub source: SourceMode,
    pub lattice: LatticeParams,
    pub encoder: EncoderConfig,
    pub scorer: ScorerSpec,
    pub beam: BeamConfig,
    pub pilot: PilotConfig,
    pub cost: CostModel,
    pub network: NetworkModel,
    pub cloud: CloudModel,
    /// Log-space jitter on teacher-mode pilot lattices; 0 keeps each pilot
    /// an exact prefix of the final lattice (and CTC leap exact).
    pub pilot_lattice_jitter: f64,
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        self.encoder.validate().map_err(SimError::Config)?;
        self.scorer.validate().map_err(SimError::Config)?;
        self.beam.validate()?;
        self.pilot.validate()?;
        self.cost.validate()?;
        self.network.rtt_s.validate("rtt_s")?;
        self.network.cloud_compute_s.validate("cloud_compute_s")?;
        if !(self.network.upload_s_per_kb >= 0.0) || !(self.network.audio_kb_per_s >= 0.0) {
            return Err(SimError::Config("network rates must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.cloud.residual_error_rate) {
            return Err(SimError::Config("residual_error_rate must lie in [0, 1]".into()));
        }
        if !(self.pilot_lattice_jitter >= 0.0) {
            return Err(SimError::Config("pilot_lattice_jitter must be >= 0".into()));
        }
        Ok(())
    }
}

/// User-visible local-path latency, measured from the end of the audio.
/// `total_s` is exactly the sum of the three parts; pilot compute is listed
/// for accounting but is user-visible only through the drain it causes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Queued ingest/pilot work still running when the audio ended.
    pub ingest_drain_s: f64,
    /// Full-context attention pass over the whole utterance.
    pub context_s: f64,
    /// Final beam-search decode.
    pub decode_s: f64,
    /// Total pilot compute (informational; overlaps ingestion).
    pub pilot_compute_s: f64,
    pub total_s: f64,
}

/// Everything measured for one utterance: the executed pilots, both
/// routing paths' transcripts/costs, and the confidence signal. Threshold
/// sweeps consume these without re-simulating.
#[derive(Debug, Clone)]
pub struct UtteranceOutcome {
    pub index: usize,
    pub duration_s: f64,
    pub num_frames: usize,
    pub noise_level: f64,
    pub truth: Vec<TokenId>,

    pub pilot_count: usize,
    pub pilot_nfe: NfeReport,
    /// Loggable view of each executed pilot.
    pub pilot_summaries: Vec<PilotSummary>,
    /// Completion wall-times, aligned with executed pilots.
    pub pilot_ends_s: Vec<f64>,
    /// True when some pilot cost more than the trigger period.
    pub pilot_infeasible: bool,

    /// Perplexity of the decision pilot under each basis.
    pub ppl_combined: Option<f64>,
    pub ppl_attn: Option<f64>,
    /// Last pilot that completed before the utterance ended.
    pub decision_pilot: Option<usize>,

    pub local_tokens: Vec<TokenId>,
    pub local_wer: WerBreakdown,
    pub local_nfe: NfeReport,
    pub local_latency: LatencyReport,
    pub rounds: usize,
    pub collapse_hits: usize,
    pub collapse_divergences: usize,
    pub early_terminated: bool,

    pub cloud_tokens: Vec<TokenId>,
    pub cloud_wer: WerBreakdown,
    pub offload_latency_s: f64,
}

impl UtteranceOutcome {
    pub fn ppl(&self, basis: ProbBasis) -> Option<f64> {
        match basis {
            ProbBasis::Combined => self.ppl_combined,
            ProbBasis::AttnOnly => self.ppl_attn,
        }
    }
}

// Seed-stream tags; every random stream in a run is keyed by
// mix(mix(seed, TAG), utterance index) so streams never alias.
const TAG_LATTICE: u64 = 0x6c61_7400;
const TAG_SCORER: u64 = 0x7363_6f00;
const TAG_CLOUD: u64 = 0x636c_6400;
const TAG_NETWORK: u64 = 0x6e65_7400;
const TAG_JITTER: u64 = 0x6a69_7400;
const TAG_NAIVE: u64 = 0x6e61_6900;
const TAG_FEATURES: u64 = 0x6665_6100;

/// Produces the final lattice and each pilot's partial lattice.
enum Source {
    Teacher { lattice: EmissionLattice, jitter: f64, seed: u64, idx: u64 },
    Enc { enc: Encoder, conv_out: LatentSequence, lattice: EmissionLattice },
}

impl Source {
    fn build(
        utt: &SyntheticUtterance,
        vocab: &Vocab,
        params: &SimParams,
        seed: u64,
        idx: u64,
    ) -> Result<Source, SimError> {
        match params.source {
            SourceMode::Teacher => Ok(Source::Teacher {
                lattice: make_lattice_with(
                    utt,
                    vocab,
                    mix(mix(seed, TAG_LATTICE), idx),
                    &params.lattice,
                )?,
                jitter: params.pilot_lattice_jitter,
                seed,
                idx,
            }),
            SourceMode::Encoder => {
                let enc = Encoder::new(params.encoder.clone());
                let feats = utterance_features(
                    utt,
                    vocab,
                    &params.encoder,
                    params.lattice.frame_rate_hz,
                    mix(mix(seed, TAG_FEATURES), idx),
                );
                let mut cache = enc.new_cache();
                let conv_out = enc.encode_segment(&mut cache, &feats)?;
                let lattice = enc.project_ctc(&enc.contextualize(&conv_out), vocab);
                Ok(Source::Enc { enc, conv_out, lattice })
            }
        }
    }

    fn full(&self) -> &EmissionLattice {
        match self {
            Source::Teacher { lattice, .. } | Source::Enc { lattice, .. } => lattice,
        }
    }

    /// The lattice a pilot triggered after `heard` frames decodes. Teacher
    /// mode slices the final lattice (optionally jittered); encoder mode
    /// re-contextualizes the cached conv prefix, which is where the real
    /// pilot/full discrepancy comes from.
    fn partial(&self, heard: usize, vocab: &Vocab) -> Result<EmissionLattice, SimError> {
        match self {
            Source::Teacher { lattice, jitter, seed, idx } => {
                let mut p = lattice.prefix(heard)?;
                if *jitter > 0.0 {
                    p = p.jittered(*jitter, mix(mix(*seed, TAG_JITTER), mix(*idx, heard as u64)));
                }
                Ok(p)
            }
            Source::Enc { enc, conv_out, .. } => {
                let prefix = conv_out.slice(0, heard);
                Ok(enc.project_ctc(&enc.contextualize(&prefix), vocab))
            }
        }
    }
}

/// Seed of the lattice-synthesis stream for one utterance, exposed so
/// pre-rendered corpus lattices can match what the simulation would build.
pub fn utterance_lattice_seed(seed: u64, index: usize) -> u64 {
    mix(mix(seed, TAG_LATTICE), index as u64)
}

/// Runs one utterance end to end: ingestion with pilots on the busy
/// frontier, the accelerated local decode, and the offload path.
pub fn simulate_utterance(
    utt: &SyntheticUtterance,
    vocab: &Vocab,
    params: &SimParams,
    seed: u64,
    index: usize,
) -> Result<UtteranceOutcome, SimError> {
    params.validate()?;
    let idx = index as u64;
    let source = Source::build(utt, vocab, params, seed, idx)?;
    let lattice = source.full();
    let scorer = params.scorer.build(utt, vocab, mix(mix(seed, TAG_SCORER), idx));
    let duration = utt.duration_s;
    let frames = lattice.num_frames();
    let fd = lattice.frame_duration();
    let rate = params.lattice.frame_rate_hz;

    // --- ingestion: busy frontier over frame arrivals and pilot triggers ---
    let triggers = schedule_pilots(duration, &params.pilot);
    let frame_cost = params.cost.ingest_frame_cost();
    let mut busy = 0.0_f64;
    let mut trace = PilotTrace::default();
    let mut pilot_ends = Vec::new();
    let mut pilot_compute = 0.0;
    let mut infeasible = false;
    let mut next_frame = 0usize;
    let mut next_trigger = 0usize;
    loop {
        let frame_time = if next_frame < frames { Some((next_frame + 1) as f64 * fd) } else { None };
        let trigger_time = if next_trigger < triggers.len() {
            Some(triggers[next_trigger])
        } else {
            None
        };
        // frames win ties so a pilot always sees every frame heard by its
        // trigger instant
        let take_frame = match (frame_time, trigger_time) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(ft), Some(tt)) => ft <= tt,
        };
        if take_frame {
            let ft = frame_time.unwrap();
            busy = busy.max(ft) + frame_cost;
            next_frame += 1;
            continue;
        }
        let tt = trigger_time.unwrap();
        let trigger_idx = next_trigger;
        next_trigger += 1;
        let start = busy.max(tt);
        if start >= duration {
            continue; // too late to be useful; pilot skipped
        }
        let heard = partial_frames(tt, rate).min(frames);
        if heard == 0 || trace.last().map_or(false, |p| heard <= p.partial_frames) {
            continue;
        }
        let partial = source.partial(heard, vocab)?;
        let p = run_pilot(
            &partial,
            scorer.as_ref(),
            vocab,
            &params.beam,
            &params.pilot,
            trace.last(),
            tt,
        )?;
        let cost = params.cost.pilot_cost(heard, &p.nfe);
        infeasible |= cost > pilot_budget(&params.pilot, trigger_idx);
        busy = start + cost;
        pilot_compute += cost;
        pilot_ends.push(busy);
        trace.push(p);
    }
    let busy_end = busy.max(duration);

    // --- local path: full-context pass plus the accelerated decode ---
    let decode = beam_search(lattice, scorer.as_ref(), vocab, &params.beam, trace.last())?;
    let ingest_drain_s = busy_end - duration;
    let context_s = params.cost.context_cost(frames);
    let decode_s = params.cost.decode_cost(&decode.nfe);
    let local_latency = LatencyReport {
        ingest_drain_s,
        context_s,
        decode_s,
        pilot_compute_s: pilot_compute,
        total_s: ingest_drain_s + context_s + decode_s,
    };
    let local_wer = edit_distance(&utt.truth, &decode.best.tokens)?;

    // --- confidence: last pilot that finished before the audio did ---
    let decision_pilot = pilot_ends
        .iter()
        .enumerate()
        .filter(|(_, &end)| end <= duration + 1e-9)
        .map(|(i, _)| i)
        .last();
    let (ppl_combined, ppl_attn) = match decision_pilot {
        Some(i) => {
            let scores = &trace.pilots()[i].token_scores;
            (
                crate::offramp::perplexity_of(scores, ProbBasis::Combined),
                crate::offramp::perplexity_of(scores, ProbBasis::AttnOnly),
            )
        }
        None => (None, None),
    };

    // --- offload path ---
    let mut cloud_rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, TAG_CLOUD), idx));
    let regular: Vec<TokenId> = vocab.regular_tokens().collect();
    let cloud_tokens: Vec<TokenId> = utt
        .truth
        .iter()
        .map(|&t| {
            if cloud_rng.gen::<f64>() < params.cloud.residual_error_rate {
                let others: Vec<TokenId> = regular.iter().copied().filter(|&c| c != t).collect();
                others[cloud_rng.gen_range(0..others.len())]
            } else {
                t
            }
        })
        .collect();
    let cloud_wer = edit_distance(&utt.truth, &cloud_tokens)?;
    let mut net_rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, TAG_NETWORK), idx));
    let offload_latency_s = duration * params.network.audio_kb_per_s * params.network.upload_s_per_kb
        + params.network.rtt_s.sample(&mut net_rng)
        + params.network.cloud_compute_s.sample(&mut net_rng);

    Ok(UtteranceOutcome {
        index,
        duration_s: duration,
        num_frames: frames,
        noise_level: utt.noise_level,
        truth: utt.truth.clone(),
        pilot_count: trace.len(),
        pilot_nfe: trace.total_nfe(),
        pilot_summaries: trace.pilots().iter().map(PilotSummary::from).collect(),
        pilot_ends_s: pilot_ends,
        pilot_infeasible: infeasible,
        ppl_combined,
        ppl_attn,
        decision_pilot,
        local_tokens: decode.best.tokens.clone(),
        local_wer,
        local_nfe: decode.nfe.clone(),
        local_latency,
        rounds: decode.rounds,
        collapse_hits: decode.collapse_hits,
        collapse_divergences: decode.collapse_divergences,
        early_terminated: decode.early_terminated,
        cloud_tokens,
        cloud_wer,
        offload_latency_s,
    })
}

// === Sweeps ===

/// One aggregated operating point of a routing policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub policy: String,
    pub param: f64,
    pub offload_fraction: f64,
    /// Corpus WER of the routed transcripts (pooled edits over pooled
    /// reference length).
    pub wer: f64,
    pub mean_latency_s: f64,
    /// Nearest-rank 90th percentile of per-utterance latency.
    pub p90_latency_s: f64,
    /// Mean of user latency over utterance duration.
    pub mean_rtf: f64,
    /// Mean final-decode compute over locally routed utterances.
    pub mean_local_decode_s: f64,
    /// Final-decode attention NFEs summed over locally routed utterances.
    pub attn_nfe_total: u64,
    pub ctc_frames_total: u64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub thetas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Supplies the basis and the no-pilot default; its mode is ignored.
    pub offramp: OfframpConfig,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            thetas: vec![1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, f64::INFINITY],
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            offramp: OfframpConfig::default(),
        }
    }
}

fn aggregate(
    outcomes: &[UtteranceOutcome],
    offloads: &[bool],
    policy: &str,
    param: f64,
) -> SweepPoint {
    let n = outcomes.len();
    let mut offloaded = 0usize;
    let mut edits = 0usize;
    let mut ref_len = 0usize;
    let mut latencies = Vec::with_capacity(n);
    let mut rtf = 0.0;
    let mut local_decode = 0.0;
    let mut local_n = 0usize;
    let mut attn_nfe_total = 0u64;
    let mut ctc_frames_total = 0u64;
    for (o, &off) in outcomes.iter().zip(offloads) {
        ref_len += o.truth.len();
        let latency = if off {
            offloaded += 1;
            edits += o.cloud_wer.distance();
            o.offload_latency_s
        } else {
            edits += o.local_wer.distance();
            local_decode += o.local_latency.decode_s;
            local_n += 1;
            attn_nfe_total += o.local_nfe.attn_evals;
            ctc_frames_total += o.local_nfe.ctc_frames_scored;
            o.local_latency.total_s
        };
        latencies.push(latency);
        rtf += latency / o.duration_s;
    }
    let mean_latency_s = latencies.iter().sum::<f64>() / n as f64;
    latencies.sort_by(f64::total_cmp);
    let p90_latency_s = latencies[((n as f64 * 0.9).ceil() as usize).max(1) - 1];
    SweepPoint {
        policy: policy.into(),
        param,
        offload_fraction: offloaded as f64 / n as f64,
        wer: if ref_len > 0 { edits as f64 / ref_len as f64 } else { 0.0 },
        mean_latency_s,
        p90_latency_s,
        mean_rtf: rtf / n as f64,
        mean_local_decode_s: if local_n > 0 { local_decode / local_n as f64 } else { 0.0 },
        attn_nfe_total,
        ctc_frames_total,
        n,
    }
}

/// Re-aggregates simulated outcomes across the threshold and naive grids.
/// No decoding happens here; the naive coin streams are keyed by (seed,
/// alpha) so every point is independently reproducible.
pub fn sweep_points(outcomes: &[UtteranceOutcome], grid: &SweepGrid, seed: u64) -> Vec<SweepPoint> {
    if outcomes.is_empty() {
        return Vec::new();
    }
    let mut points = Vec::new();
    for &theta in &grid.thetas {
        let offloads: Vec<bool> = outcomes
            .iter()
            .map(|o| match o.ppl(grid.offramp.prob_basis) {
                Some(p) => p > theta,
                None => grid.offramp.empty_reference_offloads,
            })
            .collect();
        points.push(aggregate(outcomes, &offloads, "perplexity", theta));
    }
    for &alpha in &grid.alphas {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, TAG_NAIVE), alpha.to_bits()));
        let offloads: Vec<bool> = outcomes.iter().map(|_| rng.gen::<f64>() >= alpha).collect();
        points.push(aggregate(outcomes, &offloads, "naive", alpha));
    }
    // frontier endpoints
    points.push(aggregate(outcomes, &vec![false; outcomes.len()], "always_local", 0.0));
    points.push(aggregate(outcomes, &vec![true; outcomes.len()], "always_offload", 1.0));
    points
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub outcomes: Vec<UtteranceOutcome>,
    pub points: Vec<SweepPoint>,
}

/// Simulates every utterance once, then sweeps the routing grids over the
/// cached outcomes.
pub fn run_experiment(
    corpus: &[SyntheticUtterance],
    vocab: &Vocab,
    params: &SimParams,
    grid: &SweepGrid,
    seed: u64,
) -> Result<ExperimentReport, SimError> {
    let outcomes = corpus
        .iter()
        .enumerate()
        .map(|(i, u)| simulate_utterance(u, vocab, params, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let points = sweep_points(&outcomes, grid, seed);
    Ok(ExperimentReport { outcomes, points })
}

/// One operating point of the pilot-granularity sweep, always-local.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub tau_s: f64,
    pub mean_decode_s: f64,
    pub mean_latency_s: f64,
    pub mean_attn_nfe: f64,
    pub wer: f64,
    /// Fraction of utterances where some pilot overran the period.
    pub infeasible_fraction: f64,
    pub n: usize,
}

/// Re-simulates the corpus at each pilot granularity. Smaller periods mean
/// fresher references and cheaper final decodes, until pilot compute stops
/// fitting inside the period.
pub fn tau_sweep(
    corpus: &[SyntheticUtterance],
    vocab: &Vocab,
    params: &SimParams,
    taus: &[f64],
    seed: u64,
) -> Result<Vec<TauPoint>, SimError> {
    let mut points = Vec::new();
    for &tau in taus {
        let mut p = params.clone();
        p.pilot.granularity_s = tau;
        let outcomes = corpus
            .iter()
            .enumerate()
            .map(|(i, u)| simulate_utterance(u, vocab, &p, seed, i))
            .collect::<Result<Vec<_>, SimError>>()?;
        let n = outcomes.len();
        let mean_decode_s =
            outcomes.iter().map(|o| o.local_latency.decode_s).sum::<f64>() / n as f64;
        let mean_latency_s =
            outcomes.iter().map(|o| o.local_latency.total_s).sum::<f64>() / n as f64;
        let mean_attn_nfe =
            outcomes.iter().map(|o| o.local_nfe.attn_evals as f64).sum::<f64>() / n as f64;
        let edits: usize = outcomes.iter().map(|o| o.local_wer.distance()).sum();
        let ref_len: usize = outcomes.iter().map(|o| o.truth.len()).sum();
        let infeasible =
            outcomes.iter().filter(|o| o.pilot_infeasible).count() as f64 / n as f64;
        points.push(TauPoint {
            tau_s: tau,
            mean_decode_s,
            mean_latency_s,
            mean_attn_nfe,
            wer: edits as f64 / ref_len.max(1) as f64,
            infeasible_fraction: infeasible,
            n,
        });
    }
    Ok(points)
}
