//! Randomized invariants for the numeric core: statements that must hold
//! for every input, not just the seeded fixtures the unit tests pin down.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use supipe::ctc::{ctc_extend, ctc_init, log_add, log_mul, CtcPrefixState};
use supipe::encoder::{Encoder, EncoderConfig, LatentSequence};
use supipe::lattice::{
    gen_corpus, log_sum_exp, make_lattice, EmissionLattice, TokenId, Vocab, LOG_ZERO,
};
use supipe::metrics::edit_distance;

fn random_lattice(frames: usize, vocab: &Vocab, seed: u64) -> EmissionLattice {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = vocab.size();
    let mut rows = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut row = vec![LOG_ZERO; v];
        let mut weights = vec![0.0; v];
        let mut total = 0.0;
        for c in 0..v {
            if c == vocab.sos_id() || c == vocab.eos_id() {
                continue;
            }
            let w = -(1.0 - rng.gen::<f64>()).ln();
            weights[c] = w;
            total += w;
        }
        for c in 0..v {
            if weights[c] > 0.0 {
                row[c] = (weights[c] / total).ln();
            }
        }
        rows.push(row);
    }
    EmissionLattice::from_rows(rows, 0.04).unwrap()
}

proptest! {
    /// Every synthesized lattice row is a normalized distribution, and the
    /// generator's utterances stay internally consistent.
    #[test]
    fn synthetic_lattices_are_normalized(
        noise in 0.0f64..0.9,
        regular in 1usize..12,
        seed in 0u64..5000,
    ) {
        let vocab = Vocab::with_regular_tokens(regular).unwrap();
        let corpus = gen_corpus(&vocab, 2, &[(noise, 1.0)], seed).unwrap();
        for utt in &corpus {
            prop_assert!((utt.noise_level - noise).abs() < 1e-12);
            let frames = utt.num_frames(25.0);
            prop_assert!(utt.alignment.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(utt.alignment.iter().all(|&f| f < frames));

            let lattice = make_lattice(utt, &vocab, seed ^ 0x5eed).unwrap();
            prop_assert_eq!(lattice.num_frames(), frames);
            for t in 0..frames {
                let lse = log_sum_exp(lattice.row(t));
                prop_assert!(lse.abs() < 1e-9, "row {} off by {}", t, lse);
            }
        }
    }

    /// Prefix scores are log probabilities: never NaN, never positive, and
    /// a parent's mass equals the sum over its extensions (eos included).
    #[test]
    fn ctc_prefix_mass_decomposes_over_extensions(
        frames in 1usize..10,
        regular in 1usize..4,
        len in 0usize..4,
        seed in 0u64..5000,
    ) {
        let vocab = Vocab::with_regular_tokens(regular).unwrap();
        let lattice = random_lattice(frames, &vocab, seed);
        let tokens: Vec<TokenId> = vocab.regular_tokens().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);

        let mut state: CtcPrefixState = ctc_init(&lattice, &vocab);
        let mut parent_psi = 0.0;
        for _ in 0..len {
            let c = tokens[rng.gen::<u64>() as usize % tokens.len()];
            let score = ctc_extend(&state, c, &lattice, &vocab).unwrap();
            prop_assert!(!score.psi.is_nan());
            prop_assert!(score.psi <= 1e-9, "psi {} is not a log probability", score.psi);
            state = score.state;
            parent_psi = score.psi;
        }

        let mut mass = LOG_ZERO;
        for &c in vocab.candidates() {
            let child = ctc_extend(&state, c, &lattice, &vocab).unwrap();
            prop_assert!(!child.psi.is_nan());
            mass = log_add(mass, child.psi);
        }
        if parent_psi > LOG_ZERO / 2.0 {
            prop_assert!(
                (mass - parent_psi).abs() < 1e-9,
                "children sum to {} but the parent holds {}",
                mass,
                parent_psi
            );
        } else {
            prop_assert!(mass <= LOG_ZERO / 2.0);
        }
    }

    /// The saturating log-space primitives behave like arithmetic on
    /// probabilities, with LOG_ZERO as the absorbing/neutral element.
    #[test]
    fn log_space_arithmetic_saturates_cleanly(a in -500.0f64..0.0, b in -500.0f64..0.0) {
        prop_assert_eq!(log_add(a, b), log_add(b, a));
        prop_assert!(log_add(a, b) >= a.max(b));
        prop_assert!((log_add(a, b) - (a.exp() + b.exp()).ln()).abs() < 1e-9);
        prop_assert_eq!(log_add(LOG_ZERO, a), a);
        prop_assert!(log_add(LOG_ZERO, LOG_ZERO) <= LOG_ZERO);
        prop_assert!((log_mul(a, b) - (a + b)).abs() < 1e-12);
        prop_assert!(log_mul(LOG_ZERO, a) <= LOG_ZERO, "multiplying by zero stays zero");
        prop_assert!(log_mul(a, LOG_ZERO) <= LOG_ZERO);
    }

    /// Chunked streaming through the causal conv stack is exact for any
    /// layer count, kernel width, and split point, not just the defaults.
    #[test]
    fn conv_streaming_is_exact_for_any_shape(
        dim in 1usize..5,
        kernel in 1usize..4,
        conv_layers in 1usize..4,
        frames in 1usize..20,
        split_seed in 0u64..1000,
    ) {
        let cfg = EncoderConfig { dim, kernel, conv_layers, attn_layers: 1, seed: split_seed };
        let encoder = Encoder::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed ^ 0x77);
        let rows: Vec<Vec<f64>> = (0..frames)
            .map(|_| (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let input = LatentSequence::from_rows(rows, 0.04);
        let split = rng.gen::<u64>() as usize % (frames + 1);

        let mut whole_cache = encoder.new_cache();
        let whole = encoder.encode_segment(&mut whole_cache, &input).unwrap();

        let mut cache = encoder.new_cache();
        let mut out = encoder.encode_segment(&mut cache, &input.slice(0, split)).unwrap();
        out.append(&encoder.encode_segment(&mut cache, &input.slice(split, frames)).unwrap());

        prop_assert_eq!(out.num_frames(), whole.num_frames());
        for t in 0..frames {
            for (x, y) in out.frame(t).iter().zip(whole.frame(t)) {
                prop_assert_eq!(x.to_bits(), y.to_bits(), "frame {} diverged", t);
            }
        }
    }

    /// Unit-cost edit distance is a metric on nonempty sequences, and the
    /// breakdown always accounts for the whole distance.
    #[test]
    fn edit_distance_behaves_like_a_metric(
        a in prop::collection::vec(3usize..6, 1..8),
        b in prop::collection::vec(3usize..6, 1..8),
    ) {
        let aa = edit_distance(&a, &a).unwrap();
        prop_assert_eq!(aa.distance(), 0);

        let ab = edit_distance(&a, &b).unwrap();
        let ba = edit_distance(&b, &a).unwrap();
        prop_assert_eq!(ab.distance(), ba.distance());
        prop_assert!(ab.distance() <= a.len().max(b.len()));
        prop_assert!(ab.distance() >= a.len().abs_diff(b.len()));
        prop_assert_eq!(ab.substitutions + ab.deletions + ab.insertions, ab.distance());
        prop_assert_eq!(ab.ref_len, a.len());
        prop_assert!(ab.substitutions <= a.len().min(b.len()));
    }
}
