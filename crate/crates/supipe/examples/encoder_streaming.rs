//! Streams an utterance's features through the causal conv stack in
//! arbitrary chunks during "ingestion", runs the full-context attention
//! pass once at the end, and reads the greedy transcript off the projected
//! emission lattice. Prints the FLOPs split that makes this layout cheap
//! on-device: the expensive quadratic work happens once, the streaming
//! work amortizes per frame.
//!
//! Run with: cargo run --example encoder_streaming

use supipe::encoder::{flops_report, utterance_features, Encoder, EncoderConfig, LatentSequence};
use supipe::lattice::{SyntheticUtterance, Vocab};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocab::with_regular_tokens(8)?;
    let utt = SyntheticUtterance {
        truth: vec![3, 5, 4, 6, 3, 7],
        alignment: vec![8, 25, 43, 61, 80, 95],
        noise_level: 0.1,
        duration_s: 4.2,
    };
    let cfg = EncoderConfig::default();
    let encoder = Encoder::new(cfg.clone());
    let features = utterance_features(&utt, &vocab, &cfg, 25.0, 13);
    let frames = features.num_frames();

    // === Ingestion: conv over chunks as they arrive ===
    let chunk = 7;
    let mut cache = encoder.new_cache();
    let mut conv_out = LatentSequence::empty(cfg.dim, features.frame_duration());
    let mut start = 0;
    while start < frames {
        let end = (start + chunk).min(frames);
        conv_out.append(&encoder.encode_segment(&mut cache, &features.slice(start, end))?);
        start = end;
    }
    println!("streamed {frames} frames through the conv stack in chunks of {chunk}");

    // The chunking is a scheduling choice, not an approximation.
    let mut whole_cache = encoder.new_cache();
    let whole = encoder.encode_segment(&mut whole_cache, &features)?;
    let identical = (0..frames).all(|t| {
        conv_out.frame(t).iter().zip(whole.frame(t)).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    println!("chunked output identical to single-shot: {}", if identical { "yes" } else { "no" });

    // === After ingestion: one contextual pass, then the CTC head ===
    // The weights are random, so the emissions carry no signal; what the
    // head guarantees is the interface: one normalized row per frame, with
    // sos/eos held at zero mass. Decoding-quality experiments use the
    // teacher source instead.
    let contextualized = encoder.contextualize(&conv_out);
    let lattice = encoder.project_ctc(&contextualized, &vocab);
    println!(
        "projected a {} x {} emission lattice covering {:.1} s",
        lattice.num_frames(),
        lattice.vocab_size(),
        lattice.duration_s()
    );
    let greedy = lattice.greedy_collapse(vocab.blank_id());
    println!("greedy path length through the untrained head: {} tokens", greedy.len());

    let flops = flops_report(&cfg, frames);
    println!(
        "\nFLOPs: streaming {:.2e} ({:.0}%), contextual {:.2e} ({:.0}%)",
        flops.streaming,
        100.0 * flops.streaming_fraction(),
        flops.contextual,
        100.0 * (1.0 - flops.streaming_fraction())
    );
    println!(
        "the streaming share runs during ingestion; only {:.2e} FLOPs wait for the utterance to end",
        flops.contextual
    );
    Ok(())
}
