//! Replays ingestion for one utterance: cheap pilot decodes fire on the
//! trigger schedule, each continuing from the previous pilot's hypothesis,
//! and the final decode then runs with the last pilot as its reference.
//! Ends by comparing the aided decode's cost against a vanilla decode of
//! the same lattice.
//!
//! Run with: cargo run --example pilot_streaming

use supipe::beam::{beam_search, BeamConfig};
use supipe::lattice::{make_lattice, SyntheticUtterance, Vocab};
use supipe::pilot::{partial_frames, run_pilot, schedule_pilots, PilotConfig, PilotReference};
use supipe::scorer::TeacherScorer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocab::with_regular_tokens(8)?;
    let utt = SyntheticUtterance {
        truth: vec![3, 5, 4, 6, 3, 7, 5, 4],
        alignment: vec![6, 20, 34, 48, 62, 76, 90, 104],
        noise_level: 0.2,
        duration_s: 4.8,
    };
    let frame_rate = 25.0;
    let lattice = make_lattice(&utt, &vocab, 23)?;
    let scorer = TeacherScorer::new(&utt, 0.9, &vocab, 5);

    let base = BeamConfig::default();
    let pilot_cfg = PilotConfig::default();
    let render = |ids: &[usize]| {
        ids.iter().map(|&t| vocab.token(t)).collect::<Vec<_>>().join(" ")
    };

    // === Ingestion: one pilot per trigger ===
    let mut previous: Option<PilotReference> = None;
    println!("pilot schedule over {:.1} s of audio:", utt.duration_s);
    for trigger_s in schedule_pilots(utt.duration_s, &pilot_cfg) {
        let frames = partial_frames(trigger_s, frame_rate);
        let partial = lattice.prefix(frames)?;
        let pilot = run_pilot(&partial, &scorer, &vocab, &base, &pilot_cfg, previous.as_ref(), trigger_s)?;
        println!(
            "  t={:.1}s ({:>3} frames): \"{}\"{}  [{} scorer calls]",
            trigger_s,
            frames,
            render(&pilot.tokens),
            if pilot.ended { " <eos>" } else { "" },
            pilot.nfe.attn_evals
        );
        previous = Some(pilot);
    }
    let reference = previous.expect("utterance is long enough for one pilot");

    // === The full decode, with and without the reference ===
    let aided = beam_search(&lattice, &scorer, &vocab, &base, Some(&reference))?;
    let plain = beam_search(
        &lattice,
        &scorer,
        &vocab,
        &BeamConfig {
            collapse_enabled: false,
            early_term_enabled: false,
            leap_enabled: false,
            ..base
        },
        None,
    )?;

    println!("\nfinal decode: \"{}\"", render(&aided.best.tokens));
    println!(
        "transcripts agree with vanilla: {}",
        if aided.best.tokens == plain.best.tokens { "yes" } else { "no" }
    );
    println!(
        "vanilla: {:>3} scorer calls, {:>5} CTC frames, {} rounds",
        plain.nfe.attn_evals, plain.nfe.ctc_frames_scored, plain.rounds
    );
    println!(
        "aided:   {:>3} scorer calls, {:>5} CTC frames, {} rounds ({} collapse hits{})",
        aided.nfe.attn_evals,
        aided.nfe.ctc_frames_scored,
        aided.rounds,
        aided.collapse_hits,
        if aided.early_terminated { ", terminated early" } else { "" }
    );
    println!(
        "saved {:.0}% of scorer calls",
        100.0 * (1.0 - aided.nfe.attn_evals as f64 / plain.nfe.attn_evals as f64)
    );
    Ok(())
}
