//! Release gate for the decoding engine and simulator.
//!
//! One test per shipping criterion, so the harness prints one pass/fail
//! line for each. The numeric tolerances and corpus parameters here are
//! part of the contract: loosening one is an engine change, not a test
//! fix. Everything is seeded, so a failure reproduces exactly.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use supipe::beam::{beam_search, early_terminate, predict_length, BeamConfig};
use supipe::ctc::{
    ctc_brute_force, ctc_brute_force_exact, ctc_extend, ctc_extend_leap, ctc_init,
    CtcPrefixState,
};
use supipe::encoder::{Encoder, EncoderConfig, LatentSequence};
use supipe::lattice::{gen_corpus, make_lattice, EmissionLattice, TokenId, Vocab, LOG_ZERO};
use supipe::metrics::edit_distance;
use supipe::offramp::{perplexity, OfframpConfig};
use supipe::pilot::PilotReference;
use supipe::scorer::{FidelityMode, NfeReport, ScorerSpec, TeacherScorer};
use supipe::sim::{simulate_utterance, sweep_points, tau_sweep, SimParams, SweepGrid};

// === Shared fixtures ===

/// Random emission lattice with mass on blank and the regular tokens only,
/// normalized per frame. sos/eos get zero probability, as a CTC head that
/// never emits them would produce.
fn random_lattice(frames: usize, vocab: &Vocab, rng: &mut ChaCha8Rng) -> EmissionLattice {
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

/// Chains `ctc_extend` over `prefix` and returns the state after each
/// extension, starting from the init state.
fn chain_states(
    prefix: &[TokenId],
    lattice: &EmissionLattice,
    vocab: &Vocab,
) -> Vec<CtcPrefixState> {
    let mut states = vec![ctc_init(lattice, vocab)];
    for &c in prefix {
        let score = ctc_extend(states.last().unwrap(), c, lattice, vocab).unwrap();
        states.push(score.state);
    }
    states
}

fn vanilla(cfg: &BeamConfig) -> BeamConfig {
    BeamConfig {
        collapse_enabled: false,
        early_term_enabled: false,
        leap_enabled: false,
        ..cfg.clone()
    }
}

fn pooled_wer(edits: usize, ref_len: usize) -> f64 {
    edits as f64 / ref_len as f64
}

// === 1. CTC forward recursion against path enumeration ===

#[test]
fn a01_ctc_forward_matches_path_enumeration() {
    let started = Instant::now();
    let vocab = Vocab::with_regular_tokens(1).unwrap();
    let tok = 3; // the single regular token
    let mut instances = 0usize;

    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = 2 + (rng.gen::<u64>() % 7) as usize; // 2..=8
        let lattice = random_lattice(frames, &vocab, &mut rng);

        // Chain extensions one token at a time and check every intermediate
        // prefix, plus the eos close at each depth (exact-match probability).
        let mut state = ctc_init(&lattice, &vocab);
        let mut prefix: Vec<TokenId> = Vec::new();
        for depth in 0..=3usize {
            let closed = ctc_extend(&state, vocab.eos_id(), &lattice, &vocab).unwrap();
            let want_exact = ctc_brute_force_exact(&prefix, &lattice, &vocab).unwrap();
            assert!(
                (closed.psi - want_exact).abs() < 1e-9
                    || (closed.psi <= LOG_ZERO && want_exact <= LOG_ZERO),
                "seed {seed} eos after {prefix:?}: recursion {} vs enumeration {want_exact}",
                closed.psi
            );
            instances += 1;
            if depth == 3 {
                break;
            }
            let score = ctc_extend(&state, tok, &lattice, &vocab).unwrap();
            state = score.state;
            prefix.push(tok);
            let want = ctc_brute_force(&prefix, &lattice, &vocab).unwrap();
            assert!(
                (score.psi - want).abs() < 1e-9
                    || (score.psi <= LOG_ZERO && want <= LOG_ZERO),
                "seed {seed} prefix {prefix:?}: recursion {} vs enumeration {want}",
                score.psi
            );
            instances += 1;
        }
    }

    assert!(instances >= 100, "only {instances} comparisons ran");
    assert!(started.elapsed().as_secs() < 60, "oracle check too slow");
}

// === 2. Leap resumption against from-scratch extension ===

#[test]
fn a02_ctc_leap_matches_from_scratch_extension() {
    let vocab = Vocab::with_regular_tokens(3).unwrap();
    let regular: Vec<TokenId> = vocab.regular_tokens().collect();
    let mut instances = 0usize;

    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let frames = 6 + (rng.gen::<u64>() % 9) as usize; // 6..=14
        let full = random_lattice(frames, &vocab, &mut rng);
        let pilot_frames = 2 + (rng.gen::<u64>() as usize % (frames - 2)); // 2..frames
        let pilot = full.prefix(pilot_frames).unwrap();

        let plen = (rng.gen::<u64>() % 3) as usize;
        let parent_prefix: Vec<TokenId> =
            (0..plen).map(|_| regular[rng.gen::<u64>() as usize % regular.len()]).collect();
        let c = regular[rng.gen::<u64>() as usize % regular.len()];
        let q = if seed % 4 == 0 { 1.0 } else { 0.5 + 0.5 * rng.gen::<f64>() };

        // Cached rows come from decoding exactly this child prefix on the
        // pilot's shorter lattice; the parent state spans the full lattice.
        let cached = {
            let states = chain_states(&parent_prefix, &pilot, &vocab);
            ctc_extend(states.last().unwrap(), c, &pilot, &vocab).unwrap().state
        };
        let parent = chain_states(&parent_prefix, &full, &vocab).pop().unwrap();

        let leap = ctc_extend_leap(&cached, c, &parent, &full, q, &vocab).unwrap();
        let scratch = ctc_extend(&parent, c, &full, &vocab).unwrap();

        assert!(
            (leap.psi - scratch.psi).abs() < 1e-12
                || (leap.psi <= LOG_ZERO && scratch.psi <= LOG_ZERO),
            "seed {seed}: leap {} vs scratch {} (q={q}, pilot {pilot_frames}/{frames})",
            leap.psi,
            scratch.psi
        );
        let boundary = (pilot_frames as f64 * q).floor() as usize;
        assert_eq!(
            leap.frames_computed,
            frames - boundary,
            "seed {seed}: leap recomputed the wrong frame range"
        );
        instances += 1;
    }

    assert!(instances >= 100);
}

// === 3. Chunked streaming conv against single-shot ===

#[test]
fn a03_chunked_conv_is_bitwise_identical_to_single_shot() {
    let encoder = Encoder::new(EncoderConfig::default());
    let dim = encoder.config().dim;

    for input_seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + input_seed);
        let frames = 10 + (rng.gen::<u64>() % 25) as usize;
        let rows: Vec<Vec<f64>> = (0..frames)
            .map(|_| (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let input = LatentSequence::from_rows(rows, 0.04);

        let mut whole_cache = encoder.new_cache();
        let whole = encoder.encode_segment(&mut whole_cache, &input).unwrap();

        for _ in 0..20 {
            let mut cache = encoder.new_cache();
            let mut out = LatentSequence::empty(dim, input.frame_duration());
            let mut start = 0;
            while start < frames {
                // chunk lengths 0..=5; empty segments must be no-ops
                let len = (rng.gen::<u64>() % 6) as usize;
                let end = (start + len).min(frames);
                let piece = encoder
                    .encode_segment(&mut cache, &input.slice(start, end))
                    .unwrap();
                out.append(&piece);
                start = end;
            }
            assert_eq!(out.num_frames(), whole.num_frames());
            for t in 0..frames {
                for (a, b) in out.frame(t).iter().zip(whole.frame(t)) {
                    assert_eq!(a.to_bits(), b.to_bits(), "input {input_seed}, frame {t}");
                }
            }
        }
    }
}

// === 4. Aided decode is lossless when the reference is the answer ===

#[test]
fn a04_pilot_aided_greedy_decode_is_lossless() {
    let vocab = Vocab::with_regular_tokens(8).unwrap();
    let corpus = gen_corpus(&vocab, 100, &[(0.2, 1.0)], 9).unwrap();
    let base = BeamConfig { beam_width: 1, ..BeamConfig::default() };

    for (i, utt) in corpus.iter().enumerate() {
        let lattice = make_lattice(utt, &vocab, 900 + i as u64).unwrap();
        let scorer = TeacherScorer::new(utt, 0.9, &vocab, 77 + i as u64);

        let plain = beam_search(&lattice, &scorer, &vocab, &vanilla(&base), None).unwrap();
        // Hand the full decode its own output as the reference: every
        // optimization may fire, and none is allowed to change anything.
        let reference = PilotReference::from_hypothesis(
            &plain.best,
            lattice.duration_s(),
            lattice.num_frames(),
            0.0,
            plain.nfe.clone(),
        );
        let aided = beam_search(&lattice, &scorer, &vocab, &base, Some(&reference)).unwrap();

        assert_eq!(aided.best.tokens, plain.best.tokens, "utterance {i} changed output");
        assert_eq!(aided.best.ended, plain.best.ended, "utterance {i} changed ending");
        assert!(
            aided.nfe.attn_evals <= plain.nfe.attn_evals,
            "utterance {i}: aided used {} attention evals, vanilla {}",
            aided.nfe.attn_evals,
            plain.nfe.attn_evals
        );
    }
}

// === 5. The optimizations pay for themselves on the reference corpus ===

#[test]
fn a05_optimizations_cut_attention_nfes_without_accuracy_loss() {
    let vocab = Vocab::with_regular_tokens(8).unwrap();
    let corpus = gen_corpus(&vocab, 200, &[(0.2, 1.0)], 1).unwrap();

    let with_opts = SimParams::default(); // collapse + early termination + leap
    let mut without = SimParams::default();
    without.beam = vanilla(&without.beam);

    let mut nfe_opts = 0u64;
    let mut nfe_vanilla = 0u64;
    let mut edits_opts = 0usize;
    let mut edits_vanilla = 0usize;
    let mut ref_len = 0usize;
    for (i, utt) in corpus.iter().enumerate() {
        let a = simulate_utterance(utt, &vocab, &with_opts, 1, i).unwrap();
        let b = simulate_utterance(utt, &vocab, &without, 1, i).unwrap();
        nfe_opts += a.local_nfe.attn_evals;
        nfe_vanilla += b.local_nfe.attn_evals;
        edits_opts += a.local_wer.distance();
        edits_vanilla += b.local_wer.distance();
        ref_len += utt.truth.len();
    }

    let reduction = 1.0 - nfe_opts as f64 / nfe_vanilla as f64;
    let degradation = pooled_wer(edits_opts, ref_len) - pooled_wer(edits_vanilla, ref_len);
    assert!(
        reduction >= 0.30,
        "attention NFEs only fell {:.1}% ({nfe_vanilla} -> {nfe_opts})",
        reduction * 100.0
    );
    assert!(
        degradation <= 0.01 + 1e-12,
        "WER degraded by {degradation:.4}, more than the 0.01 budget"
    );
}

// === 6. Early termination stops at the predicted round ===

#[test]
fn a06_early_termination_saves_predicted_rounds() {
    // The predicted-length formula itself, on paper-and-pencil numbers: an
    // 8-token hypothesis over the first 2 s of a 3 s utterance predicts
    // round(3/2 * 8) + 5 = 17 rounds, and the trigger fires exactly there.
    assert_eq!(predict_length(3.0, 2.0, 8, 5).unwrap(), 17);
    assert!(early_terminate(true, 17, 17));
    assert!(early_terminate(true, 18, 17));
    assert!(!early_terminate(true, 16, 17));
    assert!(!early_terminate(false, 99, 17));

    let vocab = Vocab::with_regular_tokens(8).unwrap();

    // Scripted full-decode case. A huge end-detect margin keeps the search
    // from declaring the ended hypothesis the winner, so the vanilla arm
    // grinds on until the whole beam has ended; the aided arm must instead
    // stop at exactly the predicted round n and bank the difference. The
    // noise level is picked so ended hypotheses appear in the beam a little
    // before round n: the trigger has to wait for n, not fire on sight.
    let utt = supipe::lattice::SyntheticUtterance {
        truth: vec![3, 5, 4, 6, 3, 7, 4, 5],
        alignment: vec![6, 18, 30, 42, 54, 66, 78, 90],
        noise_level: 0.5,
        duration_s: 4.0,
    };
    let lattice = make_lattice(&utt, &vocab, 40).unwrap();
    let scorer = TeacherScorer::new(&utt, 0.9, &vocab, 7);
    // Collapse and leap stay off, so only the reference's token count and
    // coverage matter: 7 tokens over the first 2 of 4 seconds predict
    // n = round(4/2 * 7) + 5 = 19 rounds.
    let reference = PilotReference {
        tokens: utt.truth[..7].to_vec(),
        token_scores: Vec::new(),
        ctc_states: Vec::new(),
        partial_duration_s: 2.0,
        partial_frames: 50,
        decoded_at_s: 2.0,
        nfe: NfeReport::default(),
        ended: false,
    };

    let stubborn = BeamConfig { end_detect_margin: 1e9, ..BeamConfig::default() };
    let base = beam_search(&lattice, &scorer, &vocab, &vanilla(&stubborn), None).unwrap();
    assert!(!base.early_terminated);

    let et_only = BeamConfig { collapse_enabled: false, leap_enabled: false, ..stubborn.clone() };
    let cut = beam_search(&lattice, &scorer, &vocab, &et_only, Some(&reference)).unwrap();
    let n = predict_length(
        lattice.duration_s(),
        reference.partial_duration_s,
        reference.tokens.len(),
        et_only.early_term_constant,
    )
    .unwrap();
    assert_eq!(n, 19);
    assert!(cut.early_terminated, "termination never fired");
    assert_eq!(cut.rounds, n, "termination fired away from the predicted round");
    assert!(base.rounds > n, "vanilla arm stopped before the prediction could save anything");
    // Identical trajectories up to the cut, so the saving is exactly the
    // vanilla round count minus n.
    assert_eq!(base.rounds - cut.rounds, base.rounds - n);

    // And on a corpus with everything else at defaults, turning early
    // termination on never increases the average number of decode rounds.
    let corpus = gen_corpus(&vocab, 60, &[(0.2, 1.0)], 13).unwrap();
    let mut et_on = SimParams::default();
    et_on.beam = BeamConfig { collapse_enabled: false, leap_enabled: false, ..et_on.beam };
    let mut et_off = SimParams::default();
    et_off.beam = vanilla(&et_off.beam);

    let mut rounds_on = 0usize;
    let mut rounds_off = 0usize;
    for (i, utt) in corpus.iter().enumerate() {
        rounds_on += simulate_utterance(utt, &vocab, &et_on, 13, i).unwrap().rounds;
        rounds_off += simulate_utterance(utt, &vocab, &et_off, 13, i).unwrap().rounds;
    }
    assert!(
        rounds_on <= rounds_off,
        "early termination increased total rounds: {rounds_on} vs {rounds_off}"
    );
}

// === 7. Confidence routing beats coin-flip routing ===

#[test]
fn a07_perplexity_routing_dominates_random_offloading() {
    let vocab = Vocab::with_regular_tokens(8).unwrap();
    // Two difficulty classes: half easy, half genuinely hard for a scorer
    // whose fidelity tracks the noise.
    let corpus = gen_corpus(&vocab, 400, &[(0.1, 0.5), (0.7, 0.5)], 5).unwrap();
    let mut params = SimParams::default();
    params.scorer = ScorerSpec { fidelity_mode: FidelityMode::NoiseCoupled, ..params.scorer };

    let grid = SweepGrid::default();
    let report = supipe::sim::run_experiment(&corpus, &vocab, &params, &grid, 5).unwrap();
    let n = report.outcomes.len();

    let ppls: Vec<f64> = report
        .outcomes
        .iter()
        .map(|o| o.ppl(grid.offramp.prob_basis).expect("every utterance ran a pilot"))
        .collect();

    // The offload set must shrink as the threshold rises: raising theta can
    // only keep utterances local, never push new ones to the cloud.
    let mut thetas = grid.thetas.clone();
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for pair in thetas.windows(2) {
        for p in &ppls {
            assert!(
                !(*p > pair[1]) || *p > pair[0],
                "offload sets not nested between thresholds {} and {}",
                pair[0],
                pair[1]
            );
        }
    }

    // The confidence signal has to order utterances by how badly the local
    // decode goes, else thresholding it could not beat a coin flip.
    let wers: Vec<f64> = report.outcomes.iter().map(|o| o.local_wer.wer()).collect();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dp = ppls[i] - ppls[j];
            let dw = wers[i] - wers[j];
            if dp * dw > 0.0 {
                concordant += 1;
            } else if dp * dw < 0.0 {
                discordant += 1;
            }
        }
    }
    assert!(
        concordant > discordant,
        "perplexity does not track decode difficulty ({concordant} vs {discordant})"
    );

    // Matched-accuracy comparison: against each random policy, pick the
    // threshold that offloads only 80% as many utterances (the order
    // statistic of the perplexities) and demand no worse corpus WER.
    let mut sorted = ppls.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut matched = Vec::new();
    for naive in report.points.iter().filter(|p| p.policy == "naive") {
        let budget = (0.8 * naive.offload_fraction * n as f64).floor() as usize;
        if budget == 0 {
            continue;
        }
        let theta = sorted[budget]; // offloads exactly the `budget` noisiest
        let fit = SweepGrid { thetas: vec![theta], alphas: vec![], offramp: OfframpConfig::default() };
        let point = sweep_points(&report.outcomes, &fit, 5)
            .into_iter()
            .find(|p| p.policy == "perplexity")
            .unwrap();
        assert!(
            point.offload_fraction <= 0.8 * naive.offload_fraction + 1e-12,
            "threshold {theta} offloads {} vs random {}",
            point.offload_fraction,
            naive.offload_fraction
        );
        if point.wer <= naive.wer + 1e-12 {
            matched.push(naive.param);
        }
    }
    assert!(
        matched.len() >= 3,
        "confidence routing only matched random routing at {matched:?}"
    );
}

// === 8. Finer pilot periods cut the final decode's cost ===

#[test]
fn a08_finer_pilot_periods_cut_decode_cost_and_flag_infeasible_budgets() {
    let vocab = Vocab::with_regular_tokens(8).unwrap();
    let corpus = gen_corpus(&vocab, 60, &[(0.2, 1.0)], 7).unwrap();
    let params = SimParams::default();

    let points = tau_sweep(&corpus, &vocab, &params, &[2.0, 1.0, 0.5], 7).unwrap();
    for pair in points.windows(2) {
        assert!(
            pair[1].mean_decode_s <= pair[0].mean_decode_s + 1e-12,
            "shrinking the period from {} s to {} s raised mean decode cost ({} -> {})",
            pair[0].tau_s,
            pair[1].tau_s,
            pair[0].mean_decode_s,
            pair[1].mean_decode_s
        );
    }
    assert!(
        points.last().unwrap().mean_decode_s < points[0].mean_decode_s,
        "fresher references never got cheaper"
    );

    // With the streaming-attention cost inflated, even the first pilot
    // overruns a 0.5 s period and every utterance must be flagged.
    let mut tight = params.clone();
    tight.cost.attn_frame_sq_s = 5e-4;
    let flagged = tau_sweep(&corpus[..20], &vocab, &tight, &[0.5], 7).unwrap();
    assert!(
        flagged[0].infeasible_fraction > 0.99,
        "pilot budgets that cannot be met were not flagged"
    );
    assert!(
        points.iter().all(|p| p.infeasible_fraction < 1.0),
        "default costs should not overrun every budget"
    );
}

// === 9. The binary is deterministic end to end ===

#[test]
fn a09_cli_runs_are_byte_identical_across_reruns() {
    let bin = env!("CARGO_BIN_EXE_supipe");
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let run = |args: &[&str]| {
        let out = std::process::Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let read = |name: &str| std::fs::read(path(name)).unwrap();

    let corpus = path("corpus.json");
    let corpus = corpus.to_str().unwrap();
    for tag in ["1", "2"] {
        run(&["gen", "--n", "8", "--seed", "3", "--out", corpus]);
        std::fs::rename(path("corpus.json"), path(&format!("corpus{tag}.json"))).unwrap();
    }
    assert_eq!(read("corpus1.json"), read("corpus2.json"), "gen is not deterministic");
    std::fs::copy(path("corpus1.json"), path("corpus.json")).unwrap();

    for tag in ["d1", "d2"] {
        run(&["decode", "--corpus", corpus, "--out-dir", path(tag).to_str().unwrap()]);
    }
    for file in ["per_utterance.csv", "run_log.jsonl"] {
        assert_eq!(
            read(&format!("d1/{file}")),
            read(&format!("d2/{file}")),
            "decode {file} is not deterministic"
        );
    }

    for tag in ["s1", "s2"] {
        run(&[
            "sweep", "--corpus", corpus, "--theta", "1.5,inf", "--alpha", "0.0,1.0",
            "--out-dir", path(tag).to_str().unwrap(),
        ]);
    }
    for file in ["frontier.csv", "run_log.jsonl"] {
        assert_eq!(
            read(&format!("s1/{file}")),
            read(&format!("s2/{file}")),
            "sweep {file} is not deterministic"
        );
    }

    for tag in ["t1", "t2"] {
        run(&[
            "sweep", "--kind", "tau", "--corpus", corpus, "--tau", "1.0,0.5",
            "--out-dir", path(tag).to_str().unwrap(),
        ]);
    }
    assert_eq!(
        read("t1/tau_frontier.csv"),
        read("t2/tau_frontier.csv"),
        "tau sweep is not deterministic"
    );
}

// === 10. Perplexity closed forms ===

#[test]
fn a10_perplexity_matches_closed_forms() {
    let certain = perplexity(&[0.0, 0.0, 0.0]).unwrap();
    assert!((certain - 1.0).abs() < 1e-12, "all-certain tokens: ppl {certain}");

    let seventh = (1.0f64 / 7.0).ln();
    let uniform = perplexity(&[seventh; 4]).unwrap();
    assert!((uniform - 7.0).abs() < 1e-12, "uniform over 7: ppl {uniform}");

    let mixed = perplexity(&[0.5f64.ln(), 0.25f64.ln()]).unwrap();
    let want = 2.0f64.powf(1.5);
    assert!((mixed - want).abs() < 1e-12, "probs 1/2 and 1/4: ppl {mixed} vs {want}");
}

// === 11. Edit distance against exhaustive recursion ===

/// Textbook recursion over suffixes, memoized but structured nothing like
/// the table the library builds: an independent second opinion.
fn oracle_distance(r: &[TokenId], h: &[TokenId], memo: &mut [Option<usize>], width: usize) -> usize {
    if r.is_empty() {
        return h.len();
    }
    if h.is_empty() {
        return r.len();
    }
    let key = r.len() * width + h.len();
    if let Some(d) = memo[key] {
        return d;
    }
    let sub_cost = usize::from(r[0] != h[0]);
    let via_sub = oracle_distance(&r[1..], &h[1..], memo, width) + sub_cost;
    let via_del = oracle_distance(&r[1..], h, memo, width) + 1;
    let via_ins = oracle_distance(r, &h[1..], memo, width) + 1;
    let d = via_sub.min(via_del).min(via_ins);
    memo[key] = Some(d);
    d
}

#[test]
fn a11_edit_distance_matches_exhaustive_recursion() {
    let tokens: [TokenId; 3] = [3, 4, 5];
    let sequences_of = |len: usize| -> Vec<Vec<TokenId>> {
        let mut all = Vec::new();
        for mut code in 0..3usize.pow(len as u32) {
            let mut seq = Vec::with_capacity(len);
            for _ in 0..len {
                seq.push(tokens[code % 3]);
                code /= 3;
            }
            all.push(seq);
        }
        all
    };
    let refs: Vec<Vec<TokenId>> = (1..=6).flat_map(&sequences_of).collect();
    let hyps: Vec<Vec<TokenId>> = (0..=6).flat_map(&sequences_of).collect();

    let width = 7;
    for r in &refs {
        for h in &hyps {
            let got = edit_distance(r, h).unwrap();
            let mut memo = vec![None; width * width];
            let want = oracle_distance(r, h, &mut memo, width);
            assert_eq!(got.distance(), want, "distance({r:?}, {h:?})");
            assert_eq!(
                got.substitutions + got.deletions + got.insertions,
                want,
                "breakdown of ({r:?}, {h:?}) does not sum to its distance"
            );
            assert_eq!(got.ref_len, r.len());
        }
    }
}
