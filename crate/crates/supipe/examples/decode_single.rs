//! Decodes one synthetic utterance with the hybrid beam search and prints
//! the per-token score breakdown: the autoregressive scorer's contribution,
//! the CTC prefix score's movement, and their weighted combination.
//!
//! Run with: cargo run --example decode_single

use supipe::beam::{beam_search, BeamConfig};
use supipe::lattice::{make_lattice, SyntheticUtterance, Vocab};
use supipe::metrics::edit_distance;
use supipe::scorer::TeacherScorer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocab::with_regular_tokens(8)?;
    let utt = SyntheticUtterance {
        truth: vec![3, 5, 4, 6, 3, 7],
        alignment: vec![8, 25, 43, 61, 80, 95],
        noise_level: 0.2,
        duration_s: 4.2,
    };
    let lattice = make_lattice(&utt, &vocab, 11)?;
    let scorer = TeacherScorer::new(&utt, 0.9, &vocab, 3);

    let cfg = BeamConfig::default();
    let out = beam_search(&lattice, &scorer, &vocab, &cfg, None)?;
    let best = &out.best;

    let render = |ids: &[usize]| {
        ids.iter().map(|&t| vocab.token(t)).collect::<Vec<_>>().join(" ")
    };
    println!("truth:      {}", render(&utt.truth));
    println!("hypothesis: {}{}", render(&best.tokens), if best.ended { " <eos>" } else { "" });

    println!("\n{:>5}  {:>6}  {:>9}  {:>9}  {:>9}", "round", "token", "attn", "ctc", "combined");
    for (i, s) in best.token_scores.iter().enumerate() {
        let name = if i < best.tokens.len() { vocab.token(best.tokens[i]) } else { "<eos>" };
        println!("{:>5}  {:>6}  {:>9.3}  {:>9.3}  {:>9.3}", i + 1, name, s.attn, s.ctc, s.combined);
    }

    let w = cfg.ctc_weight;
    println!(
        "\nscore {:.3} = {:.1} * attn {:.3} + {:.1} * ctc {:.3}",
        best.score,
        1.0 - w,
        best.attn_logp,
        w,
        best.ctc_psi
    );

    let wer = edit_distance(&utt.truth, &best.tokens)?;
    println!(
        "WER {:.3} ({} subs, {} dels, {} ins over {} reference tokens)",
        wer.wer(),
        wer.substitutions,
        wer.deletions,
        wer.insertions,
        wer.ref_len
    );
    println!(
        "cost: {} scorer calls, {} CTC frames, {} rounds",
        out.nfe.attn_evals, out.nfe.ctc_frames_scored, out.rounds
    );
    Ok(())
}
