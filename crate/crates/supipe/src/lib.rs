//! Streaming speech-understanding decoding engine and pipeline simulator.
//!
//! The pipeline ingests an utterance frame by frame, runs the streaming
//! (causal convolution) part of a toy encoder during ingestion, and
//! periodically decodes the partial input with a cheap "pilot" beam search.
//! The last pilot's hypothesis serves two purposes once ingestion ends:
//!
//! 1. its perplexity drives the offramp, which routes low-confidence inputs
//!    to a simulated cloud instead of decoding locally, and
//! 2. it is the reference that accelerates the local full decode via beam
//!    collapse, early termination, and CTC leap.
//!
//! Decoding is hybrid CTC/attention beam search: candidates are ranked by a
//! weighted sum of an autoregressive scorer's log-probability and the CTC
//! prefix score computed by an exact forward recursion over the emission
//! lattice. Everything is deterministic given a seed, and a simulated clock
//! accounts for latency on the local and offload paths.
//!
//! Module map:
//! - [`lattice`]: vocabularies, emission lattices, synthetic corpus generator
//! - [`encoder`]: streaming conv + full-context attention toy encoder, FLOPs split
//! - [`ctc`]: CTC prefix scoring, leap resumption, brute-force oracle
//! - [`scorer`]: autoregressive next-token scorers (n-gram, teacher)
//! - [`beam`]: hybrid beam search with the three pilot-aided optimizations
//! - [`pilot`]: pilot scheduling and incremental pilot decoding
//! - [`offramp`]: perplexity confidence and the offload decision
//! - [`sim`]: deterministic latency simulation and sweep experiments
//! - [`metrics`]: token error rate
//! - [`cli`]: config schema and the gen/decode/sweep subcommands

pub mod beam;
pub mod cli;
pub mod ctc;
pub mod encoder;
pub mod lattice;
pub mod metrics;
pub mod offramp;
pub mod pilot;
pub mod scorer;
pub mod sim;

pub use beam::{beam_search, BeamConfig, DecodeResult, Hypothesis};
pub use ctc::{ctc_brute_force, ctc_extend, ctc_extend_leap, ctc_init, CtcPrefixState, CtcScore};
pub use encoder::{Encoder, EncoderConfig, LatentSequence, SegmentCache};
pub use lattice::{
    gen_corpus, make_lattice, EmissionLattice, SyntheticUtterance, TokenId, Vocab, LOG_ZERO,
};
pub use metrics::{edit_distance, WerBreakdown};
pub use offramp::{decide, perplexity, OffloadDecision, OfframpConfig};
pub use pilot::{run_pilot, schedule_pilots, PilotConfig, PilotReference};
pub use scorer::{AttnScorer, NfeReport, NgramScorer, TeacherScorer};
pub use sim::{run_experiment, simulate_utterance, CostModel, LatencyReport, NetworkModel};
