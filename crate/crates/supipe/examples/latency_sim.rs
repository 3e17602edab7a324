//! Walks one utterance through the simulated clock and prints the latency
//! ledger: what the pilots cost during ingestion, what drains after the
//! audio ends, and how the local path compares with shipping the audio to
//! the cloud. Ends with the offramp's routing call.
//!
//! Run with: cargo run --example latency_sim

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use supipe::lattice::{SyntheticUtterance, Vocab};
use supipe::offramp::{decide_from_ppl, OfframpConfig};
use supipe::sim::{simulate_utterance, SimParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocab::with_regular_tokens(8)?;
    let utt = SyntheticUtterance {
        truth: vec![3, 5, 4, 6, 3, 7],
        alignment: vec![8, 25, 43, 61, 80, 95],
        noise_level: 0.3,
        duration_s: 4.2,
    };
    let params = SimParams::default();
    let out = simulate_utterance(&utt, &vocab, &params, 31, 0)?;

    println!("utterance: {:.1} s, {} frames, noise {}", out.duration_s, out.num_frames, out.noise_level);
    println!("\npilots during ingestion:");
    for (i, p) in out.pilot_summaries.iter().enumerate() {
        println!(
            "  #{i} at t={:.1}s over {:>3} frames: {} tokens{}  [{} scorer calls]",
            p.decoded_at_s,
            p.partial_frames,
            p.tokens.len(),
            if p.ended { " (ended)" } else { "" },
            p.attn_evals
        );
    }
    if out.pilot_infeasible {
        println!("  warning: some pilot overran its trigger period");
    }

    let l = &out.local_latency;
    println!("\nlocal path after the audio ends:");
    println!("  ingest drain     {:>8.4} s (queued streaming work)", l.ingest_drain_s);
    println!("  contextual pass  {:>8.4} s", l.context_s);
    println!("  final decode     {:>8.4} s ({} rounds)", l.decode_s, out.rounds);
    println!("  total            {:>8.4} s -> RTF {:.3}", l.total_s, l.total_s / out.duration_s);
    println!("cloud path: {:>8.4} s (upload + cloud compute + return)", out.offload_latency_s);

    let cfg = OfframpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let decision = decide_from_ppl(
        &cfg,
        out.ppl(cfg.prob_basis),
        out.decision_pilot,
        out.duration_s,
        &mut rng,
    )?;
    match decision.perplexity {
        Some(p) => println!("\nconfidence: perplexity {p:.3} vs threshold {}", cfg.theta),
        None => println!("\nconfidence: no usable pilot, defaulting"),
    }
    let user_latency = if decision.offload { out.offload_latency_s } else { l.total_s };
    println!(
        "routing: {} -> user sees {:.3} s (RTF {:.3})",
        if decision.offload { "offload" } else { "decode locally" },
        user_latency,
        user_latency / out.duration_s
    );
    Ok(())
}
