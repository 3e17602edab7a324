//! Sweeps the confidence threshold and the coin-flip baseline over a
//! two-difficulty corpus and prints the offload/WER frontier. The
//! perplexity policy should hug the corner: it sends the hard half to the
//! cloud and keeps the easy half local.
//!
//! Run with: cargo run --example offramp_sweep

use supipe::lattice::{gen_corpus, Vocab};
use supipe::offramp::OfframpConfig;
use supipe::scorer::{FidelityMode, ScorerSpec};
use supipe::sim::{run_experiment, SimParams, SweepGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocab::with_regular_tokens(8)?;
    let corpus = gen_corpus(&vocab, 120, &[(0.1, 0.5), (0.7, 0.5)], 19)?;

    // Couple the scorer's quality to the noise so the hard class is hard
    // for the decoder too, not just for the lattice.
    let mut params = SimParams::default();
    params.scorer = ScorerSpec { fidelity_mode: FidelityMode::NoiseCoupled, ..params.scorer };

    let grid = SweepGrid {
        thetas: vec![1.0, 1.5, 2.0, 3.0, 4.0, f64::INFINITY],
        alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        offramp: OfframpConfig::default(),
    };
    let report = run_experiment(&corpus, &vocab, &params, &grid, 19)?;

    println!(
        "{:<15} {:>7} {:>9} {:>7} {:>9} {:>9}",
        "policy", "param", "offload", "WER", "mean lat", "p90 lat"
    );
    for p in &report.points {
        println!(
            "{:<15} {:>7} {:>8.0}% {:>7.3} {:>8.2}s {:>8.2}s",
            p.policy,
            p.param,
            100.0 * p.offload_fraction,
            p.wer,
            p.mean_latency_s,
            p.p90_latency_s
        );
    }

    // Pick the naive point nearest 50% offload and the cheapest threshold
    // that still matches its accuracy.
    let naive = report
        .points
        .iter()
        .filter(|p| p.policy == "naive")
        .min_by(|a, b| {
            (a.offload_fraction - 0.5).abs().total_cmp(&(b.offload_fraction - 0.5).abs())
        })
        .expect("grid has naive points");
    if let Some(ppl) = report
        .points
        .iter()
        .filter(|p| p.policy == "perplexity" && p.wer <= naive.wer)
        .min_by(|a, b| a.offload_fraction.total_cmp(&b.offload_fraction))
    {
        println!(
            "\nto match the coin flip's WER of {:.3} (at {:.0}% offloaded), \
             threshold {} needs only {:.0}% offloaded",
            naive.wer,
            100.0 * naive.offload_fraction,
            ppl.param,
            100.0 * ppl.offload_fraction
        );
    }
    Ok(())
}
