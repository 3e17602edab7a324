//! Config schema and the gen/decode/sweep subcommands.
//!
//! Three subcommands cover the whole workflow:
//! - `gen` writes a synthetic corpus as JSON, optionally embedding the
//!   rendered emission lattices;
//! - `decode` simulates every utterance in a corpus once, applies the
//!   configured routing policy, and logs per-utterance results as a CSV
//!   table plus a JSON-lines run log;
//! - `sweep` traces either the routing frontier (threshold grid plus the
//!   seeded-coin baseline, with always-local / always-offload endpoints) or
//!   the pilot-period tradeoff, as CSV tables.
//!
//! Every run is reproducible from its config and seed. The effective config
//! is echoed into a leading `# config:` comment line of each CSV and into
//! the first line of each JSON-lines log. All floating-point output uses the
//! shortest round-trip decimal form, so identical runs are byte-identical.
//! Exit codes: 0 success, 2 config error, 3 runtime error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{BeamConfig, BeamError};
use crate::encoder::{flops_report, EncoderConfig};
use crate::lattice::{
    gen_corpus_with, make_lattice_with, CorpusFile, CorpusParams, LatticeError, LatticeSpec,
    TokenId, Vocab, VocabSpec,
};
use crate::metrics::WerBreakdown;
use crate::offramp::{decide_from_ppl, OffloadDecision, OfframpConfig};
use crate::pilot::{PilotError, PilotSummary};
use crate::scorer::{mix, NfeReport};
use crate::sim::{
    run_experiment, tau_sweep, utterance_lattice_seed, LatencyReport, SimError, SimParams,
    SweepGrid, UtteranceOutcome,
};

/// Stream tag for the routing decision's coin (only the naive policy
/// consumes it); keyed per utterance so ordering never matters.
const TAG_DECIDE: u64 = 0x6465_6300;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, bad flag value, or failed validation; exit code 2.
    #[error("{0}")]
    Config(String),
    /// Missing inputs or failures while running and writing; exit code 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let config = matches!(
            &e,
            SimError::Config(_)
                | SimError::Offramp(_)
                | SimError::Lattice(LatticeError::InvalidConfig(_))
                | SimError::Lattice(LatticeError::InvalidVocab(_))
                | SimError::Beam(BeamError::Config(_))
                | SimError::Pilot(PilotError::Config(_))
                | SimError::Pilot(PilotError::Beam(BeamError::Config(_)))
        );
        if config {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        let config =
            matches!(&e, LatticeError::InvalidConfig(_) | LatticeError::InvalidVocab(_));
        if config {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

// === Config schema ===

/// Serde adapter for threshold lists: JSON numbers pass through, and the
/// string "inf" stands in for infinity (plain JSON has no literal for it).
mod theta_values {
    use serde::de::Error as DeError;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Threshold {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        let mut seq = ser.serialize_seq(Some(values.len()))?;
        for &v in values {
            if v.is_finite() {
                seq.serialize_element(&v)?;
            } else {
                seq.serialize_element("inf")?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Threshold>::deserialize(de)?
            .into_iter()
            .map(|t| match t {
                Threshold::Number(v) => Ok(v),
                Threshold::Text(s) => s.trim().parse::<f64>().map_err(|_| {
                    D::Error::custom(format!("bad threshold {s:?}; use a number or \"inf\""))
                }),
            })
            .collect()
    }
}

/// Corpus-generation settings used by `gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    /// Number of utterances.
    pub n: usize,
    /// `(noise_level, fraction)` pairs; fractions must sum to 1.
    pub difficulty_mix: Vec<(f64, f64)>,
    pub duration_range_s: (f64, f64),
    pub tokens_per_s: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            n: 100,
            difficulty_mix: vec![(0.2, 1.0)],
            duration_range_s: (2.0, 6.0),
            tokens_per_s: 2.5,
        }
    }
}

/// Sweep grids used by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Perplexity thresholds; JSON accepts numbers or the string "inf".
    #[serde(with = "theta_values")]
    pub thetas: Vec<f64>,
    /// Stay-local probabilities for the seeded-coin baseline.
    pub alphas: Vec<f64>,
    /// Pilot periods (seconds) for the granularity sweep.
    pub taus: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let grid = SweepGrid::default();
        SweepSection { thetas: grid.thetas, alphas: grid.alphas, taus: vec![2.0, 1.0, 0.5] }
    }
}

/// Everything a run needs, as one JSON document. Unknown keys are rejected
/// at every level so a typo fails loudly instead of silently falling back
/// to a default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Regular (content) tokens in the synthetic vocabulary.
    pub vocab_regular_tokens: usize,
    pub corpus: CorpusSection,
    pub sim: SimParams,
    pub offramp: OfframpConfig,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            vocab_regular_tokens: 8,
            corpus: CorpusSection::default(),
            sim: SimParams::default(),
            offramp: OfframpConfig::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.vocab_regular_tokens == 0 {
            return Err(CliError::Config("vocab_regular_tokens must be at least 1".into()));
        }
        if self.corpus.n == 0 {
            return Err(CliError::Config("corpus.n must be at least 1".into()));
        }
        let (lo, hi) = self.corpus.duration_range_s;
        if !(lo > 0.0 && hi >= lo) {
            return Err(CliError::Config(format!(
                "corpus.duration_range_s must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        if !(self.corpus.tokens_per_s > 0.0) {
            return Err(CliError::Config(format!(
                "corpus.tokens_per_s must be positive, got {}",
                self.corpus.tokens_per_s
            )));
        }
        self.sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.offramp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.sweep.thetas.is_empty() || self.sweep.alphas.is_empty() || self.sweep.taus.is_empty()
        {
            return Err(CliError::Config("sweep grids must not be empty".into()));
        }
        for &t in &self.sweep.thetas {
            if !(t > 0.0) {
                return Err(CliError::Config(format!("sweep theta must be positive, got {t}")));
            }
        }
        for &a in &self.sweep.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(CliError::Config(format!("sweep alpha must lie in [0, 1], got {a}")));
            }
        }
        for &t in &self.sweep.taus {
            if !(t > 0.0) || !t.is_finite() {
                return Err(CliError::Config(format!(
                    "sweep tau must be positive and finite, got {t}"
                )));
            }
        }
        Ok(())
    }
}

// === Argument types ===

#[derive(Debug, Parser)]
#[command(name = "supipe", version, about = "Streaming decode pipeline simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus file.
    Gen(GenArgs),
    /// Decode every utterance in a corpus and log per-utterance results.
    Decode(DecodeArgs),
    /// Sweep routing thresholds or pilot periods and emit frontier tables.
    Sweep(SweepArgs),
}

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the corpus size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Also render and embed the per-utterance emission lattices.
    #[arg(long)]
    pub with_lattices: bool,
    /// Output corpus path.
    #[arg(long, default_value = "corpus.json")]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct DecodeArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus file written by `gen`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Overrides the seed (default: config seed if --config given, else the
    /// corpus file's own seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for per_utterance.csv and run_log.jsonl.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Force beam collapse on or off (default: config value).
    #[arg(long)]
    pub collapse: Option<bool>,
    /// Force early termination on or off (default: config value).
    #[arg(long)]
    pub early_term: Option<bool>,
    /// Force the CTC leap on or off (default: config value).
    #[arg(long)]
    pub leap: Option<bool>,
    /// Enable all three pilot-aided optimizations.
    #[arg(long, conflicts_with = "no_opts")]
    pub all_opts: bool,
    /// Disable all three (vanilla baseline).
    #[arg(long)]
    pub no_opts: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    /// Threshold grid plus the seeded-coin baseline and both endpoints.
    Routing,
    /// Pilot-period grid, always-local.
    Tau,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus file written by `gen`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Overrides the seed (same precedence as decode).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the frontier tables and run_log.jsonl.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Which axis to sweep.
    #[arg(long, value_enum, default_value_t = SweepKind::Routing)]
    pub kind: SweepKind,
    /// Overrides the threshold grid ("inf" allowed).
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
    /// Overrides the baseline stay-local probabilities.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Overrides the pilot-period grid (seconds).
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,
}

/// Entry point used by the binary; errors map to exit codes via
/// [`CliError::exit_code`].
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

// === Commands ===

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn load_corpus(path: &Path) -> Result<CorpusFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read corpus {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("corpus {} is not valid: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Resolves the effective seed: an explicit flag wins, then the seed of an
/// explicitly given config, then the seed recorded in the corpus file. The
/// last default reproduces exactly the lattices `gen --with-lattices` would
/// embed for that corpus.
fn resolve_seed(flag: Option<u64>, config_given: bool, cfg: &RunConfig, corpus: &CorpusFile) -> u64 {
    match (flag, config_given) {
        (Some(s), _) => s,
        (None, true) => cfg.seed,
        (None, false) => corpus.seed,
    }
}

fn config_header(cfg: &RunConfig) -> Result<String, CliError> {
    let json = serde_json::to_string(cfg)
        .map_err(|e| CliError::Runtime(format!("cannot encode config: {e}")))?;
    Ok(format!("# config: {json}\n"))
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n {
        cfg.corpus.n = n;
    }
    cfg.validate()?;
    let vocab = Vocab::with_regular_tokens(cfg.vocab_regular_tokens)?;
    let params = CorpusParams {
        duration_range_s: cfg.corpus.duration_range_s,
        tokens_per_s: cfg.corpus.tokens_per_s,
        frame_rate_hz: cfg.sim.lattice.frame_rate_hz,
    };
    let utterances =
        gen_corpus_with(&vocab, cfg.corpus.n, &cfg.corpus.difficulty_mix, cfg.seed, &params)?;
    let lattices = if args.with_lattices {
        let mut specs = Vec::with_capacity(utterances.len());
        for (i, utt) in utterances.iter().enumerate() {
            let lat = make_lattice_with(
                utt,
                &vocab,
                utterance_lattice_seed(cfg.seed, i),
                &cfg.sim.lattice,
            )?;
            let rows = (0..lat.num_frames()).map(|t| lat.row(t).to_vec()).collect();
            specs.push(LatticeSpec { frame_duration: lat.frame_duration(), rows });
        }
        Some(specs)
    } else {
        None
    };
    let file = CorpusFile {
        vocab: VocabSpec::from_vocab(&vocab),
        frame_rate_hz: cfg.sim.lattice.frame_rate_hz,
        seed: cfg.seed,
        utterances,
        lattices,
    };
    let mut json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Runtime(format!("cannot encode corpus: {e}")))?;
    json.push('\n');
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| {
                CliError::Runtime(format!("cannot create {}: {e}", dir.display()))
            })?;
        }
    }
    write_text(&args.out, &json)?;
    println!(
        "wrote {} utterances (seed {}) to {}",
        file.utterances.len(),
        file.seed,
        args.out.display()
    );
    Ok(())
}

fn apply_toggles(beam: &mut BeamConfig, args: &DecodeArgs) {
    if args.all_opts || args.no_opts {
        beam.collapse_enabled = args.all_opts;
        beam.early_term_enabled = args.all_opts;
        beam.leap_enabled = args.all_opts;
    }
    if let Some(v) = args.collapse {
        beam.collapse_enabled = v;
    }
    if let Some(v) = args.early_term {
        beam.early_term_enabled = v;
    }
    if let Some(v) = args.leap {
        beam.leap_enabled = v;
    }
}

/// Routes one simulated utterance under the configured policy. The coin
/// stream is keyed by (seed, utterance index) so results do not depend on
/// decision order.
fn route(
    cfg: &RunConfig,
    outcome: &UtteranceOutcome,
    seed: u64,
) -> Result<OffloadDecision, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, TAG_DECIDE), outcome.index as u64));
    let ppl = outcome.ppl(cfg.offramp.prob_basis);
    decide_from_ppl(&cfg.offramp, ppl, outcome.decision_pilot, outcome.duration_s, &mut rng)
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_decode(args: &DecodeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_toggles(&mut cfg.sim.beam, args);
    let corpus = load_corpus(&args.corpus)?;
    let vocab = corpus
        .vocab
        .to_vocab()
        .map_err(|e| CliError::Runtime(format!("corpus {}: {e}", args.corpus.display())))?;
    cfg.sim.lattice.frame_rate_hz = corpus.frame_rate_hz;
    cfg.seed = resolve_seed(args.seed, args.config.is_some(), &cfg, &corpus);
    cfg.validate()?;

    let outcomes = corpus
        .utterances
        .iter()
        .enumerate()
        .map(|(i, u)| simulate_checked(u, &vocab, &cfg, i))
        .collect::<Result<Vec<_>, CliError>>()?;
    let rows = outcomes
        .iter()
        .map(|o| Ok(RunLogRow::new(o, route(&cfg, o, cfg.seed)?)))
        .collect::<Result<Vec<_>, CliError>>()?;

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let header = config_header(&cfg)?;

    let mut csv = header.clone();
    csv.push_str(DECODE_CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&decode_csv_row(&cfg.sim.encoder, row));
        csv.push('\n');
    }
    let csv_path = args.out_dir.join("per_utterance.csv");
    write_text(&csv_path, &csv)?;

    let log_path = args.out_dir.join("run_log.jsonl");
    write_run_log(&log_path, &cfg, &args.corpus, &rows)?;

    let local = rows.iter().filter(|r| !r.decision.offload).count();
    let attn: u64 = rows.iter().map(|r| r.local_nfe.attn_evals).sum();
    let ctc: u64 = rows.iter().map(|r| r.local_nfe.ctc_frames_scored).sum();
    let mean_decode =
        rows.iter().map(|r| r.local_latency.decode_s).sum::<f64>() / rows.len().max(1) as f64;
    println!(
        "decoded {} utterances ({} local, {} offloaded): attn NFE {attn}, ctc frames {ctc}, \
         mean local decode {mean_decode} s",
        rows.len(),
        local,
        rows.len() - local,
    );
    println!("wrote {} and {}", csv_path.display(), log_path.display());
    Ok(())
}

fn simulate_checked(
    utt: &crate::lattice::SyntheticUtterance,
    vocab: &Vocab,
    cfg: &RunConfig,
    index: usize,
) -> Result<UtteranceOutcome, CliError> {
    crate::sim::simulate_utterance(utt, vocab, &cfg.sim, cfg.seed, index)
        .map_err(CliError::from)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    let corpus = load_corpus(&args.corpus)?;
    let vocab = corpus
        .vocab
        .to_vocab()
        .map_err(|e| CliError::Runtime(format!("corpus {}: {e}", args.corpus.display())))?;
    cfg.sim.lattice.frame_rate_hz = corpus.frame_rate_hz;
    cfg.seed = resolve_seed(args.seed, args.config.is_some(), &cfg, &corpus);
    if !args.theta.is_empty() {
        cfg.sweep.thetas = args.theta.clone();
    }
    if !args.alpha.is_empty() {
        cfg.sweep.alphas = args.alpha.clone();
    }
    if !args.tau.is_empty() {
        cfg.sweep.taus = args.tau.clone();
    }
    cfg.validate()?;

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let header = config_header(&cfg)?;

    match args.kind {
        SweepKind::Routing => {
            let grid = SweepGrid {
                thetas: cfg.sweep.thetas.clone(),
                alphas: cfg.sweep.alphas.clone(),
                offramp: cfg.offramp.clone(),
            };
            let report = run_experiment(&corpus.utterances, &vocab, &cfg.sim, &grid, cfg.seed)?;

            let mut csv = header.clone();
            csv.push_str(FRONTIER_CSV_HEADER);
            csv.push('\n');
            for p in &report.points {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    p.policy,
                    p.param,
                    p.offload_fraction,
                    p.wer,
                    p.mean_latency_s,
                    p.p90_latency_s,
                    p.mean_rtf,
                    p.mean_local_decode_s,
                    p.attn_nfe_total,
                    p.ctc_frames_total,
                    p.n
                ));
            }
            let csv_path = args.out_dir.join("frontier.csv");
            write_text(&csv_path, &csv)?;

            let rows = report
                .outcomes
                .iter()
                .map(|o| Ok(RunLogRow::new(o, route(&cfg, o, cfg.seed)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let log_path = args.out_dir.join("run_log.jsonl");
            write_run_log(&log_path, &cfg, &args.corpus, &rows)?;
            println!(
                "swept {} routing points over {} utterances",
                report.points.len(),
                report.outcomes.len()
            );
            println!("wrote {} and {}", csv_path.display(), log_path.display());
        }
        SweepKind::Tau => {
            let points = tau_sweep(&corpus.utterances, &vocab, &cfg.sim, &cfg.sweep.taus, cfg.seed)?;
            let mut csv = header;
            csv.push_str(TAU_CSV_HEADER);
            csv.push('\n');
            for p in &points {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    p.tau_s,
                    p.mean_decode_s,
                    p.mean_latency_s,
                    p.mean_attn_nfe,
                    p.wer,
                    p.infeasible_fraction,
                    p.n
                ));
            }
            let csv_path = args.out_dir.join("tau_frontier.csv");
            write_text(&csv_path, &csv)?;
            println!("swept {} pilot periods", points.len());
            println!("wrote {}", csv_path.display());
        }
    }
    Ok(())
}

// === Output rendering ===

/// One utterance in the JSON-lines run log. `tokens`, `wer`, and
/// `user_latency_s` belong to whichever path the decision chose; the
/// `local_*` fields always describe the accelerated on-device decode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLogRow {
    pub index: usize,
    pub duration_s: f64,
    pub num_frames: usize,
    pub noise_level: f64,
    pub truth: Vec<TokenId>,
    pub pilots: Vec<PilotSummary>,
    pub pilot_infeasible: bool,
    pub decision: OffloadDecision,
    pub tokens: Vec<TokenId>,
    pub wer: WerBreakdown,
    pub user_latency_s: f64,
    pub rtf: f64,
    pub local_tokens: Vec<TokenId>,
    pub local_wer: WerBreakdown,
    pub local_nfe: NfeReport,
    pub local_latency: LatencyReport,
    pub rounds: usize,
    pub collapse_hits: usize,
    pub collapse_divergences: usize,
    pub early_terminated: bool,
    pub offload_latency_s: f64,
}

impl RunLogRow {
    fn new(o: &UtteranceOutcome, decision: OffloadDecision) -> Self {
        let (tokens, wer, user_latency_s) = if decision.offload {
            (o.cloud_tokens.clone(), o.cloud_wer, o.offload_latency_s)
        } else {
            (o.local_tokens.clone(), o.local_wer, o.local_latency.total_s)
        };
        RunLogRow {
            index: o.index,
            duration_s: o.duration_s,
            num_frames: o.num_frames,
            noise_level: o.noise_level,
            truth: o.truth.clone(),
            pilots: o.pilot_summaries.clone(),
            pilot_infeasible: o.pilot_infeasible,
            decision,
            tokens,
            wer,
            user_latency_s,
            rtf: user_latency_s / o.duration_s,
            local_tokens: o.local_tokens.clone(),
            local_wer: o.local_wer,
            local_nfe: o.local_nfe,
            local_latency: o.local_latency,
            rounds: o.rounds,
            collapse_hits: o.collapse_hits,
            collapse_divergences: o.collapse_divergences,
            early_terminated: o.early_terminated,
            offload_latency_s: o.offload_latency_s,
        }
    }
}

/// Columns of per_utterance.csv. `local_wer`/`subs`/`dels`/`ins` grade the
/// on-device decode against the truth (the offload path's residual error is
/// visible in run_log.jsonl); booleans are 0/1; `ppl` is empty when no pilot
/// finished in time.
pub const DECODE_CSV_HEADER: &str = "index,duration_s,frames,noise,truth_len,pilot_count,\
pilot_attn_nfe,pilot_ctc_frames,ppl,offload,local_wer,subs,dels,ins,attn_nfe,ctc_frames,\
rounds,collapse_hits,divergences,early_term,ingest_drain_s,context_s,decode_s,\
local_latency_s,offload_latency_s,user_latency_s,rtf,infeasible,flops_streaming,\
flops_contextual";

/// Columns of frontier.csv; one row per sweep point.
pub const FRONTIER_CSV_HEADER: &str = "policy,param,offload_fraction,wer,mean_latency_s,\
p90_latency_s,mean_rtf,mean_local_decode_s,attn_nfe_total,ctc_frames_total,n";

/// Columns of tau_frontier.csv; one row per pilot period.
pub const TAU_CSV_HEADER: &str =
    "tau_s,mean_decode_s,mean_latency_s,mean_attn_nfe,wer,infeasible_fraction,n";

fn decode_csv_row(encoder: &EncoderConfig, row: &RunLogRow) -> String {
    let flops = flops_report(encoder, row.num_frames);
    let ppl = row.decision.perplexity.map(|p| p.to_string()).unwrap_or_default();
    let pilot_attn: u64 = row.pilots.iter().map(|p| p.attn_evals).sum();
    let pilot_ctc: u64 = row.pilots.iter().map(|p| p.ctc_frames_scored).sum();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.index,
        row.duration_s,
        row.num_frames,
        row.noise_level,
        row.truth.len(),
        row.pilots.len(),
        pilot_attn,
        pilot_ctc,
        ppl,
        row.decision.offload as u8,
        row.local_wer.wer(),
        row.local_wer.substitutions,
        row.local_wer.deletions,
        row.local_wer.insertions,
        row.local_nfe.attn_evals,
        row.local_nfe.ctc_frames_scored,
        row.rounds,
        row.collapse_hits,
        row.collapse_divergences,
        row.early_terminated as u8,
        row.local_latency.ingest_drain_s,
        row.local_latency.context_s,
        row.local_latency.decode_s,
        row.local_latency.total_s,
        row.offload_latency_s,
        row.user_latency_s,
        row.rtf,
        row.pilot_infeasible as u8,
        flops.streaming,
        flops.contextual,
    )
}

fn write_run_log(
    path: &Path,
    cfg: &RunConfig,
    corpus: &Path,
    rows: &[RunLogRow],
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Head<'a> {
        config: &'a RunConfig,
        corpus: String,
    }
    let mut text = serde_json::to_string(&Head { config: cfg, corpus: corpus.display().to_string() })
        .map_err(|e| CliError::Runtime(format!("cannot encode run log head: {e}")))?;
    text.push('\n');
    for row in rows {
        text.push_str(
            &serde_json::to_string(row)
                .map_err(|e| CliError::Runtime(format!("cannot encode run log row: {e}")))?,
        );
        text.push('\n');
    }
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn default_config_round_trips_with_infinite_threshold() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"inf\""), "non-finite thresholds must serialize as strings");
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.sweep.thetas, cfg.sweep.thetas);
        assert_eq!(back.sweep.thetas.last(), Some(&f64::INFINITY));
        back.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let top = serde_json::from_str::<RunConfig>(r#"{"seeed": 1}"#).unwrap_err();
        assert!(top.to_string().contains("seeed"));
        let nested =
            serde_json::from_str::<RunConfig>(r#"{"sim": {"beam": {"beam_widht": 3}}}"#)
                .unwrap_err();
        assert!(nested.to_string().contains("beam_widht"));
    }

    #[test]
    fn threshold_strings_parse_as_numbers() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"sweep": {"thetas": [1.5, "inf", "2.25"]}}"#).unwrap();
        assert_eq!(cfg.sweep.thetas, vec![1.5, f64::INFINITY, 2.25]);
        let bad = serde_json::from_str::<RunConfig>(r#"{"sweep": {"thetas": ["huge"]}}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn toggles_apply_blanket_then_per_flag() {
        let args = DecodeArgs {
            config: None,
            corpus: PathBuf::from("corpus.json"),
            seed: None,
            out_dir: PathBuf::from("."),
            collapse: Some(true),
            early_term: None,
            leap: None,
            all_opts: false,
            no_opts: true,
        };
        let mut beam = BeamConfig::default();
        apply_toggles(&mut beam, &args);
        assert!(beam.collapse_enabled, "per-flag override beats the blanket switch");
        assert!(!beam.early_term_enabled);
        assert!(!beam.leap_enabled);
    }

    #[test]
    fn config_errors_exit_2_runtime_errors_exit_3() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 3);
        let e: CliError = SimError::Config("bad".into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = SimError::Metrics(crate::metrics::MetricsError::InvalidReference).into();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn seed_precedence_is_flag_config_corpus() {
        let cfg = RunConfig { seed: 11, ..RunConfig::default() };
        let corpus = CorpusFile {
            vocab: VocabSpec::from_vocab(&Vocab::with_regular_tokens(4).unwrap()),
            frame_rate_hz: 25.0,
            seed: 7,
            utterances: Vec::new(),
            lattices: None,
        };
        assert_eq!(resolve_seed(Some(3), true, &cfg, &corpus), 3);
        assert_eq!(resolve_seed(None, true, &cfg, &corpus), 11);
        assert_eq!(resolve_seed(None, false, &cfg, &corpus), 7);
    }
}
