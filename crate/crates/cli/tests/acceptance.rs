//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (visible with `--nocapture`).
//!
//! Criteria 5 and 6 share one set of trained models (five trainings at
//! d=64, 2+2 layers on the 10k-pair constrained-copy task); the first test
//! to need them trains them, the other waits.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use lenctl::data::{
    constrained_copy_target, exclude_lengths, generate_synthetic, SyntheticTaskSpec, Task,
    Transform,
};
use lenctl::decode::{beam_search, rerank_index, DecodeRequest, SequenceScorer};
use lenctl::encoding::{ldpe_table, pe_table, Family, DEFAULT_BASE};
use lenctl::eval::{length_variance, rouge_l_recall, rouge_n_recall, Unit};
use lenctl::graph::{cast, finite_difference_gradient, vector_rel_error, Graph, NodeId, Scalar};
use lenctl::model::{init_model, ModelConfig};
use lenctl::rng::SplitMix64;
use lenctl::trainer::{train, TrainOutcome, TrainSettings};
use lenctl::vocab::{char_len, TargetVocab};

// ════════════════════════════════════════════════════════════════════════
// Criterion 1 — encoding identities, zero tolerance
// ════════════════════════════════════════════════════════════════════════

#[test]
fn criterion_1_encoding_identities() {
    let start = std::time::Instant::now();
    let mut rows_checked = 0u64;
    for d in [2usize, 8, 64] {
        for len in 1u32..=64 {
            let ld = ldpe_table(d, DEFAULT_BASE, len, len as usize).unwrap();
            let pe = pe_table(d, DEFAULT_BASE, len as usize).unwrap();
            for pos in 0..=len as usize {
                assert_eq!(
                    ld.row(pos),
                    pe.row(len as usize - pos),
                    "d={d} len={len} pos={pos}: ldpe row must equal pe at the remaining length"
                );
                rows_checked += 1;
            }
        }
        // equal remaining length ⇒ bitwise-equal rows across different lens
        for (len_a, len_b) in [(5u32, 29u32), (12, 64), (1, 48), (20, 21)] {
            let a = ldpe_table(d, DEFAULT_BASE, len_a, len_a as usize).unwrap();
            let b = ldpe_table(d, DEFAULT_BASE, len_b, len_b as usize).unwrap();
            for rem in 0..=len_a.min(len_b) {
                assert_eq!(
                    a.row((len_a - rem) as usize),
                    b.row((len_b - rem) as usize),
                    "d={d}: rows with remaining length {rem} must match bitwise"
                );
            }
        }
    }
    let dt = start.elapsed();
    assert!(
        dt.as_secs_f64() < 1.0,
        "criterion 1 must finish under 1 s, took {dt:?}"
    );
    println!("acceptance criterion 1: PASS ({rows_checked} rows bitwise-checked in {dt:?})");
}

// ════════════════════════════════════════════════════════════════════════
// Criterion 2 — gradient check on 100 random small networks
// ════════════════════════════════════════════════════════════════════════

/// Draws are rounded through f32 so the f32 network and the f64 oracle see
/// exactly the same parameter values.
fn rand_tensor<T: Scalar>(rng: &mut SplitMix64, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| {
            let mag = 0.15 + rng.next_f64();
            let sign = if rng.next_below(2) == 0 { 1.0 } else { -1.0 };
            cast::<T>((mag * sign) as f32 as f64)
        })
        .collect()
}

type Net<T> = (
    Vec<Vec<usize>>,
    Vec<Vec<T>>,
    Box<dyn Fn(&mut Graph<T>, &[NodeId]) -> NodeId>,
);

/// Small random networks; every third one runs a full attention + layer-norm
/// sublayer, the rest mix projections, softmax and cross-entropy. Everything
/// here is smooth, so central differences are trustworthy at f32; the relu
/// kink is gradient-checked in the numeric core's own suite.
fn random_network<T: Scalar>(i: usize, rng: &mut SplitMix64) -> Net<T> {
    match i % 3 {
        0 => {
            // single-head attention with residual + layer norm, weighted read-out
            let shapes = vec![
                vec![3, 4], // x
                vec![4, 4], // wq
                vec![4, 4], // wk
                vec![4, 4], // wv
                vec![4],    // ln gain
                vec![4],    // ln bias
                vec![3, 4], // readout
            ];
            let data = shapes
                .iter()
                .map(|s| rand_tensor(rng, s.iter().product()))
                .collect();
            let build = Box::new(|g: &mut Graph<T>, ids: &[NodeId]| {
                let x = ids[0];
                let q = g.matmul(x, ids[1]).unwrap();
                let k = g.matmul(x, ids[2]).unwrap();
                let v = g.matmul(x, ids[3]).unwrap();
                let scores = g.matmul_nt(q, k).unwrap();
                let scores = g.scale(scores, cast::<T>(0.35));
                let attn = g.softmax(scores, 1).unwrap();
                let ctx = g.matmul(attn, v).unwrap();
                let res = g.add(x, ctx).unwrap();
                let normed = g.layer_norm(res, ids[4], ids[5], cast::<T>(1e-5)).unwrap();
                let w = g.mul(normed, ids[6]).unwrap();
                g.sum(w)
            });
            (shapes, data, build)
        }
        1 => {
            // affine projection into cross-entropy
            let shapes = vec![vec![3, 4], vec![4, 5], vec![5]];
            let data = shapes
                .iter()
                .map(|s| rand_tensor(rng, s.iter().product()))
                .collect();
            let build = Box::new(|g: &mut Graph<T>, ids: &[NodeId]| {
                let logits = g.matmul(ids[0], ids[1]).unwrap();
                let logits = g.add_row(logits, ids[2]).unwrap();
                g.cross_entropy(logits, &[2, 0, 4], 99).unwrap()
            });
            (shapes, data, build)
        }
        _ => {
            // layer norm into softmax, weighted read-out
            let shapes = vec![vec![3, 6], vec![6], vec![6], vec![3, 6], vec![3, 6]];
            let data = shapes
                .iter()
                .map(|s| rand_tensor(rng, s.iter().product()))
                .collect();
            let build = Box::new(|g: &mut Graph<T>, ids: &[NodeId]| {
                let n1 = g
                    .layer_norm(ids[0], ids[1], ids[2], cast::<T>(1e-5))
                    .unwrap();
                let m = g.mul(n1, ids[3]).unwrap();
                let s = g.softmax(m, 1).unwrap();
                let w = g.mul(s, ids[4]).unwrap();
                g.sum(w)
            });
            (shapes, data, build)
        }
    }
}

fn gradient_check_all<T: Scalar>(h: T, tol: f64) -> f64 {
    let mut rng = SplitMix64::new(0x5EED_0002);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (shapes, data, build) = random_network::<T>(i, &mut rng);
        let mut g = Graph::<T>::new();
        let ids: Vec<NodeId> = shapes
            .iter()
            .zip(&data)
            .map(|(s, d)| g.leaf(d.clone(), s.clone(), true))
            .collect();
        let loss = build(&mut g, &ids);
        g.backward(loss).unwrap();
        let fd = finite_difference_gradient(&shapes, &data, &build, h);
        for (t, &id) in ids.iter().enumerate() {
            let rel = vector_rel_error(g.grad(id).unwrap(), &fd[t], 1e-8);
            assert!(
                rel < tol,
                "network {i} tensor {t}: relative error {rel:.3e} >= {tol}"
            );
            worst = worst.max(rel);
        }
    }
    worst
}

/// Same networks at f64: separates backward-pass bugs from f32 noise.
#[test]
fn gradient_check_f64_shadow() {
    let worst = gradient_check_all::<f64>(1e-5, 1e-6);
    println!("  f64 shadow worst relative error {worst:.3e}");
}

/// The f32 autodiff gradients are compared against central finite
/// differences computed in f64 at identical parameter values: test oracles
/// run at f64, which keeps the comparison tight enough that the 1e-3 bound
/// measures the backward pass rather than oracle noise.
#[test]
fn criterion_2_gradient_check() {
    let start = std::time::Instant::now();
    let mut rng32 = SplitMix64::new(0x5EED_0002);
    let mut rng64 = SplitMix64::new(0x5EED_0002);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (shapes, data, build) = random_network::<f32>(i, &mut rng32);
        let (shapes64, data64, build64) = random_network::<f64>(i, &mut rng64);
        assert_eq!(shapes, shapes64);
        let mut g = Graph::<f32>::new();
        let ids: Vec<NodeId> = shapes
            .iter()
            .zip(&data)
            .map(|(s, d)| g.leaf(d.clone(), s.clone(), true))
            .collect();
        let loss = build(&mut g, &ids);
        g.backward(loss).unwrap();
        let fd = finite_difference_gradient(&shapes64, &data64, &build64, 1e-5f64);
        for (t, &id) in ids.iter().enumerate() {
            let ad64: Vec<f64> = g.grad(id).unwrap().iter().map(|&x| x as f64).collect();
            let rel = vector_rel_error(&ad64, &fd[t], 1e-8);
            assert!(
                rel < 1e-3,
                "network {i} tensor {t}: relative error {rel:.3e} >= 1e-3"
            );
            worst = worst.max(rel);
        }
    }
    let dt = start.elapsed();
    assert!(
        dt.as_secs() < 30,
        "criterion 2 must finish under 30 s, took {dt:?}"
    );
    println!(
        "acceptance criterion 2: PASS (100 networks, worst relative error {worst:.3e}, {dt:?})"
    );
}

// ════════════════════════════════════════════════════════════════════════
// Criterion 3 — metric oracle equivalence, exact at f64
// ════════════════════════════════════════════════════════════════════════

fn brute_ngram_recall(cand: &[char], refr: &[char], n: usize) -> f64 {
    if refr.len() < n {
        return 0.0;
    }
    let grams = |x: &[char]| -> Vec<Vec<char>> { x.windows(n).map(|w| w.to_vec()).collect() };
    let (cg, rg) = (grams(cand), grams(refr));
    let mut done: Vec<&Vec<char>> = Vec::new();
    let mut matched = 0usize;
    for g in &rg {
        if done.contains(&g) {
            continue;
        }
        done.push(g);
        let r_count = rg.iter().filter(|x| *x == g).count();
        let c_count = cg.iter().filter(|x| *x == g).count();
        matched += r_count.min(c_count);
    }
    matched as f64 / rg.len() as f64
}

/// Full-matrix DP LCS, written independently of the library's rolling rows.
fn dp_lcs(a: &[char], b: &[char]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..a.len() {
        for j in 0..b.len() {
            dp[i + 1][j + 1] = if a[i] == b[j] {
                dp[i][j] + 1
            } else {
                dp[i][j + 1].max(dp[i + 1][j])
            };
        }
    }
    dp[a.len()][b.len()]
}

fn random_string(rng: &mut SplitMix64, max_len: usize, alphabet: u64) -> String {
    let len = rng.next_below(max_len as u64 + 1) as usize;
    (0..len)
        .map(|_| (b'a' + rng.next_below(alphabet) as u8) as char)
        .collect()
}

#[test]
fn criterion_3_metric_oracles() {
    let start = std::time::Instant::now();
    let mut rng = SplitMix64::new(0x5EED_0003);
    for case in 0..100 {
        let cand = random_string(&mut rng, 30, 4);
        let mut refr = random_string(&mut rng, 30, 4);
        if refr.is_empty() {
            refr.push('a');
        }
        let (cc, rc): (Vec<char>, Vec<char>) = (cand.chars().collect(), refr.chars().collect());
        for n in [1usize, 2] {
            let got = rouge_n_recall(&cand, &refr, n, Unit::Character).unwrap();
            let expect = brute_ngram_recall(&cc, &rc, n);
            assert!(
                got.score == expect,
                "case {case} n={n}: {} vs {expect}",
                got.score
            );
        }
        let got_l = rouge_l_recall(&cand, &refr, Unit::Character).unwrap();
        let expect_l = dp_lcs(&cc, &rc) as f64 / rc.len() as f64;
        assert!(
            got_l == expect_l,
            "case {case} rouge-L: {got_l} vs {expect_l}"
        );
    }
    // length variance against direct summation, exact
    for case in 0..100 {
        let n = 1 + rng.next_below(40) as usize;
        let lengths: Vec<usize> = (0..n).map(|_| rng.next_below(80) as usize).collect();
        let desired = rng.next_below(80) as usize;
        let got = length_variance(&lengths, desired).unwrap();
        let direct: f64 = lengths
            .iter()
            .map(|&l| (l as f64 - desired as f64).abs().powi(2))
            .sum::<f64>()
            / n as f64;
        assert!(got == direct, "case {case}: variance {got} vs {direct}");
    }
    let dt = start.elapsed();
    assert!(
        dt.as_secs() < 5,
        "criterion 3 must finish under 5 s, took {dt:?}"
    );
    println!("acceptance criterion 3: PASS (100 ROUGE pairs + 100 variance cases exact, {dt:?})");
}

// ════════════════════════════════════════════════════════════════════════
// Criterion 4 — beam search equals exhaustive search
// ════════════════════════════════════════════════════════════════════════

/// Exhaustive enumeration over everything the search can emit within the
/// safety cap: any 0..=cap-1 characters followed by EOS, or cap characters
/// with no EOS (an unterminated sequence).
fn exhaustive_best<S: SequenceScorer>(scorer: &S, cap: usize) -> (Vec<u32>, f32) {
    let chars = scorer.candidate_ids().to_vec();
    let eos = scorer.eos_id();
    let mut best: Option<(Vec<u32>, f32)> = None;
    let mut consider = |ids: Vec<u32>, logprob: f32| {
        if best.as_ref().is_none_or(|(_, b)| logprob > *b) {
            best = Some((ids, logprob));
        }
    };
    let mut stack: Vec<(Vec<u32>, f32)> = vec![(Vec::new(), 0.0)];
    while let Some((prefix, logprob)) = stack.pop() {
        if prefix.len() == cap {
            consider(prefix, logprob);
            continue;
        }
        let lp = scorer.step_log_probs(&prefix).unwrap();
        let mut terminated = prefix.clone();
        terminated.push(eos);
        consider(terminated, logprob + lp[eos as usize]);
        for &c in &chars {
            let mut next = prefix.clone();
            next.push(c);
            stack.push((next, logprob + lp[c as usize]));
        }
    }
    best.unwrap()
}

#[test]
fn criterion_4_beam_search_oracle() {
    let start = std::time::Instant::now();
    for seed in 0..20u64 {
        let config = ModelConfig {
            d: 8,
            heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            ffn: 16,
            dropout: 0.0,
            src_vocab: 6,
            tgt_vocab: 7, // 4 specials + a 3-symbol character inventory
            family: Family::Ldpe,
            base: 10000.0,
            seed: 0xBEA0 + seed,
        };
        let model = init_model(config).unwrap();
        let tgt_vocab = TargetVocab::from_chars(vec!['a', 'b', 'c']);
        assert_eq!(tgt_vocab.size(), 7);
        let request = DecodeRequest {
            source_ids: vec![3, 4, 5],
            len: 2,
            beam: 81,
            nbest: 1,
            safety_cap: 4,
        };
        let got = beam_search(&model, &tgt_vocab, &request).unwrap();
        let scorer =
            lenctl::decode::ModelScorer::new(&model, &tgt_vocab, &request.source_ids, request.len)
                .unwrap();
        let (best_ids, best_lp) = exhaustive_best(&scorer, request.safety_cap);
        assert_eq!(
            got[0].ids, best_ids,
            "model {seed}: beam result differs from exhaustive search"
        );
        assert_eq!(got[0].logprob, best_lp, "model {seed}: logprob mismatch");
        assert_eq!(
            got[0].terminated,
            *best_ids.last().unwrap() == TargetVocab::EOS
        );
    }
    let dt = start.elapsed();
    assert!(
        dt.as_secs() < 30,
        "criterion 4 must finish under 30 s, took {dt:?}"
    );
    println!("acceptance criterion 4: PASS (20 random models match exhaustive search, {dt:?})");
}

// ════════════════════════════════════════════════════════════════════════
// Criteria 5 & 6 — desk-scale length control and unseen-length analog
// ════════════════════════════════════════════════════════════════════════

const TRAIN_STEPS: u64 = 3000;
const EVAL_INPUTS: usize = 200;
const EVAL_BEAM: usize = 2;

struct DeskLab {
    ldpe: TrainOutcome,
    baseline: TrainOutcome,
    lrpe: TrainOutcome,
    ldpe_x12: TrainOutcome,
    lrpe_x12: TrainOutcome,
    held_out: Vec<String>,
    /// Wall time for the two criterion-5 trainings (LDPE + baseline).
    c5_train_secs: f64,
    /// Wall time for all five trainings.
    total_train_secs: f64,
}

fn desk_spec() -> SyntheticTaskSpec {
    SyntheticTaskSpec {
        task: Task::ConstrainedCopy,
        transform: Transform::Identity,
        alphabet: 26,
        source_len: (20, 24),
        target_len: (5, 20),
        size: 10_000,
        seed: 1001,
    }
}

fn desk_train(family: Family, exclude: &[usize]) -> TrainOutcome {
    let pairs = exclude_lengths(generate_synthetic(&desk_spec()).unwrap(), exclude);
    let config = ModelConfig {
        d: 64,
        heads: 4,
        enc_layers: 2,
        dec_layers: 2,
        ffn: 256,
        dropout: 0.1,
        src_vocab: 1, // resolved by the trainer
        tgt_vocab: 1,
        family,
        base: 10000.0,
        seed: 7,
    };
    let settings = TrainSettings {
        batch_size: 16,
        steps: TRAIN_STEPS,
        lr: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        bpe_vocab_size: 100,
    };
    train(&pairs, config, &settings).unwrap()
}

fn lab() -> &'static DeskLab {
    static LAB: OnceLock<DeskLab> = OnceLock::new();
    LAB.get_or_init(|| {
        let t0 = std::time::Instant::now();
        let ldpe = desk_train(Family::Ldpe, &[]);
        let baseline = desk_train(Family::Pe, &[]);
        let c5_train_secs = t0.elapsed().as_secs_f64();
        let lrpe = desk_train(Family::Lrpe, &[]);
        let ldpe_x12 = desk_train(Family::Ldpe, &[12]);
        let lrpe_x12 = desk_train(Family::Lrpe, &[12]);
        let total_train_secs = t0.elapsed().as_secs_f64();

        let mut rng = SplitMix64::new(424242); // disjoint from the training seed
        let held_out = (0..EVAL_INPUTS)
            .map(|_| {
                let len = rng.next_range(20, 24) as usize;
                (0..len)
                    .map(|_| (b'a' + rng.next_below(26) as u8) as char)
                    .collect()
            })
            .collect();
        DeskLab {
            ldpe,
            baseline,
            lrpe,
            ldpe_x12,
            lrpe_x12,
            held_out,
            c5_train_secs,
            total_train_secs,
        }
    })
}

/// Decodes every held-out source at the requested length; returns the length
/// variance and exact-match rate against the constrained-copy gold target.
fn measure(outcome: &TrainOutcome, sources: &[String], len: u32) -> (f64, f64) {
    let mut lengths = Vec::with_capacity(sources.len());
    let mut exact = 0usize;
    for src in sources {
        let ids = outcome.src_vocab.encode(src);
        let request = DecodeRequest::new(ids, len, EVAL_BEAM, 1);
        let hyps = beam_search(&outcome.model, &outcome.tgt_vocab, &request).unwrap();
        let text = outcome.tgt_vocab.decode(&hyps[0].ids);
        lengths.push(char_len(&text));
        if text == constrained_copy_target(src, Transform::Identity, len as usize) {
            exact += 1;
        }
    }
    (
        length_variance(&lengths, len as usize).unwrap(),
        exact as f64 / sources.len() as f64,
    )
}

#[test]
fn criterion_5_length_control_analog() {
    let lab = lab();
    assert!(
        lab.c5_train_secs < 20.0 * 60.0,
        "criterion-5 training budget exceeded: {:.0} s",
        lab.c5_train_secs
    );
    for len in [6u32, 10, 16] {
        let (ldpe_var, ldpe_acc) = measure(&lab.ldpe, &lab.held_out, len);
        let (base_var, base_acc) = measure(&lab.baseline, &lab.held_out, len);
        println!(
            "  len={len}: LDPE var={ldpe_var:.4} exact={ldpe_acc:.3} | baseline var={base_var:.4} exact={base_acc:.3}"
        );
        assert!(
            ldpe_var <= 0.05,
            "len={len}: LDPE variance {ldpe_var} exceeds 0.05"
        );
        assert!(
            base_var >= 10.0 * ldpe_var,
            "len={len}: baseline variance {base_var} not ≥ 10× LDPE variance {ldpe_var}"
        );
    }
    println!(
        "acceptance criterion 5: PASS (criterion trainings {:.0} s; all five {:.0} s)",
        lab.c5_train_secs, lab.total_train_secs
    );
}

#[test]
fn criterion_6_unseen_length_generalization() {
    let lab = lab();
    let len = 12u32;
    let (full_ldpe_var, full_ldpe_acc) = measure(&lab.ldpe, &lab.held_out, len);
    let (full_lrpe_var, full_lrpe_acc) = measure(&lab.lrpe, &lab.held_out, len);
    let (x_ldpe_var, x_ldpe_acc) = measure(&lab.ldpe_x12, &lab.held_out, len);
    let (x_lrpe_var, x_lrpe_acc) = measure(&lab.lrpe_x12, &lab.held_out, len);
    println!(
        "  len=12 LDPE: full var={full_ldpe_var:.4} acc={full_ldpe_acc:.3} | excluded var={x_ldpe_var:.4} acc={x_ldpe_acc:.3}"
    );
    println!(
        "  len=12 LRPE: full var={full_lrpe_var:.4} acc={full_lrpe_acc:.3} | excluded var={x_lrpe_var:.4} acc={x_lrpe_acc:.3}"
    );
    assert!(
        x_ldpe_var <= 0.5,
        "LDPE-without-12 variance {x_ldpe_var} exceeds 0.5"
    );
    assert!(
        x_lrpe_var <= 0.5,
        "LRPE-without-12 variance {x_lrpe_var} exceeds 0.5"
    );
    assert!(
        (x_ldpe_acc - full_ldpe_acc).abs() <= 0.05,
        "LDPE exact-match gap {:.3} exceeds 5 points",
        (x_ldpe_acc - full_ldpe_acc).abs()
    );
    assert!(
        (x_lrpe_acc - full_lrpe_acc).abs() <= 0.05,
        "LRPE exact-match gap {:.3} exceeds 5 points",
        (x_lrpe_acc - full_lrpe_acc).abs()
    );
    println!("acceptance criterion 6: PASS");
}

// ════════════════════════════════════════════════════════════════════════
// Criterion 7 — re-ranking contract vs brute-force scorer
// ════════════════════════════════════════════════════════════════════════

/// Independent scorer: counts source words appearing in the text, then
/// applies the documented tie rules by explicit comparison.
fn brute_force_pick(texts: &[String], logprobs: &[f32], source: &str) -> usize {
    let mut words: Vec<String> = source
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect();
    words.sort();
    words.dedup();
    let score = |t: &str| -> usize {
        let lower = t.to_lowercase();
        words.iter().filter(|w| lower.contains(w.as_str())).count()
    };
    let mut best = 0usize;
    for i in 1..texts.len() {
        let (si, sb) = (score(&texts[i]), score(&texts[best]));
        if si > sb || (si == sb && logprobs[i] > logprobs[best]) {
            best = i;
        }
    }
    best
}

#[test]
fn criterion_7_rerank_contract() {
    let start = std::time::Instant::now();
    let mut rng = SplitMix64::new(0x5EED_0007);
    for case in 0..1000 {
        let n_hyp = 20;
        let word_count = 1 + rng.next_below(6) as usize;
        let source: String = (0..word_count)
            .map(|_| random_string(&mut rng, 4, 3))
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        let texts: Vec<String> = (0..n_hyp)
            .map(|_| {
                (0..1 + rng.next_below(4))
                    .map(|_| random_string(&mut rng, 5, 3))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        // quantized logprobs so ties actually occur
        let logprobs: Vec<f32> = (0..n_hyp)
            .map(|_| -(rng.next_below(4) as f32) / 2.0)
            .collect();
        let got = rerank_index(&texts, &logprobs, &source);
        let expect = brute_force_pick(&texts, &logprobs, &source);
        assert_eq!(
            got, expect,
            "case {case}: rerank disagrees with brute force"
        );
    }
    let dt = start.elapsed();
    assert!(
        dt.as_secs() < 5,
        "criterion 7 must finish under 5 s, took {dt:?}"
    );
    println!("acceptance criterion 7: PASS (1000 cases exact, {dt:?})");
}

// ════════════════════════════════════════════════════════════════════════
// Criterion 8 — byte-identical end-to-end reproducibility
// ════════════════════════════════════════════════════════════════════════

fn run_pipeline(bin: &str, work: &Path, tag: &str) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let out_dir = work.join(format!("run-{tag}"));
    let cfg = serde_json::json!({
        "seed": 99,
        "output_dir": out_dir,
        "model": {
            "d": 16, "heads": 2, "enc_layers": 1, "dec_layers": 1,
            "ffn": 32, "dropout": 0.1, "family": "ldpe"
        },
        "train": { "batch_size": 8, "steps": 40, "lr": 0.002, "bpe_vocab_size": 60 },
        "data": { "synthetic": {
            "task": "constrained-copy", "alphabet": 10,
            "source_len": [10, 14], "target_len": [3, 8], "size": 400, "seed": 77
        }},
        "exclude_lengths": []
    });
    let cfg_path = work.join(format!("cfg-{tag}.json"));
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let ok = Command::new(bin)
        .args(["train", "--config"])
        .arg(&cfg_path)
        .status()
        .unwrap();
    assert!(ok.success(), "train failed");

    let outputs = out_dir.join("outputs.jsonl");
    let ok = Command::new(bin)
        .args(["generate", "--checkpoint"])
        .arg(out_dir.join("checkpoint.json"))
        .arg("--input")
        .arg(out_dir.join("test.jsonl"))
        .arg("--output")
        .arg(&outputs)
        .args(["--len", "5", "--beam", "4", "--nbest", "4", "--rerank"])
        .status()
        .unwrap();
    assert!(ok.success(), "generate failed");

    let report = out_dir.join("report.json");
    let ok = Command::new(bin)
        .args(["evaluate", "--outputs"])
        .arg(&outputs)
        .arg("--references")
        .arg(out_dir.join("test.jsonl"))
        .args(["--unit", "char", "--report"])
        .arg(&report)
        .arg("--histogram")
        .arg(out_dir.join("hist.csv"))
        .status()
        .unwrap();
    assert!(ok.success(), "evaluate failed");

    (
        std::fs::read(out_dir.join("checkpoint.json")).unwrap(),
        std::fs::read(&outputs).unwrap(),
        std::fs::read(&report).unwrap(),
    )
}

#[test]
fn criterion_8_reproducibility() {
    let bin = env!("CARGO_BIN_EXE_lenctl");
    let work = tempfile::tempdir().unwrap();
    let (ckpt_a, out_a, rep_a) = run_pipeline(bin, work.path(), "a");
    let (ckpt_b, out_b, rep_b) = run_pipeline(bin, work.path(), "b");
    assert_eq!(ckpt_a, ckpt_b, "checkpoints must be byte-identical");
    assert_eq!(out_a, out_b, "generated outputs must be byte-identical");
    assert_eq!(rep_a, rep_b, "evaluation reports must be byte-identical");
    println!(
        "acceptance criterion 8: PASS (checkpoint {} B, outputs {} B, report {} B identical)",
        ckpt_a.len(),
        out_a.len(),
        rep_a.len()
    );
}
