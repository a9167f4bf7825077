//! Length-conditioned beam search and n-best re-ranking.
//!
//! Beam scores are raw summed log-probabilities with no length
//! normalization: output length is supposed to be governed by the encoding
//! under test, and a length penalty would contaminate the variance
//! measurements. Generation is never hard-truncated at the requested length;
//! emitting EOS is the model's decision and overrun is part of what gets
//! measured. A safety cap bounds runaway generation.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;
use crate::vocab::TargetVocab;

/// A candidate output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated target ids; ends with EOS iff naturally terminated.
    pub ids: Vec<u32>,
    /// Sum of step log-probabilities.
    pub logprob: f32,
    pub terminated: bool,
}

#[derive(Debug, Clone)]
pub struct DecodeRequest {
    pub source_ids: Vec<u32>,
    /// Desired output length in characters.
    pub len: u32,
    pub beam: usize,
    /// Number of hypotheses to return.
    pub nbest: usize,
    /// Hard bound on generated positions.
    pub safety_cap: usize,
}

impl DecodeRequest {
    pub fn new(source_ids: Vec<u32>, len: u32, beam: usize, nbest: usize) -> Self {
        Self {
            source_ids,
            len,
            beam,
            nbest,
            safety_cap: default_safety_cap(len),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        if self.nbest == 0 || self.nbest > self.beam {
            return Err(Error::Config(format!(
                "nbest must satisfy 1 <= nbest <= beam, got nbest={} beam={}",
                self.nbest, self.beam
            )));
        }
        if self.safety_cap < self.len as usize {
            return Err(Error::Config(format!(
                "safety cap {} below requested length {}",
                self.safety_cap, self.len
            )));
        }
        Ok(())
    }
}

pub fn default_safety_cap(len: u32) -> usize {
    2 * len as usize + 10
}

/// Anything that can score the next emission given a prefix of emitted ids.
/// The model implements this; tests rig small scorers directly.
pub trait SequenceScorer {
    /// Log-probabilities over the full target vocabulary for the next
    /// emission after `prefix` (prefix excludes BOS, includes no EOS).
    fn step_log_probs(&self, prefix: &[u32]) -> Result<Vec<f32>>;
    /// Ids beam search may emit: the character inventory.
    fn candidate_ids(&self) -> &[u32];
    fn eos_id(&self) -> u32;
}

/// Scorer over a frozen model: the encoder runs once, each step re-runs the
/// decoder on the whole prefix and reads the last row.
pub struct ModelScorer<'a> {
    model: &'a Model,
    enc_out: Tensor,
    len: u32,
    candidates: Vec<u32>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(
        model: &'a Model,
        tgt_vocab: &TargetVocab,
        source_ids: &[u32],
        len: u32,
    ) -> Result<Self> {
        Ok(Self {
            model,
            enc_out: model.encode(source_ids)?,
            len,
            candidates: tgt_vocab.char_ids(),
        })
    }
}

impl SequenceScorer for ModelScorer<'_> {
    fn step_log_probs(&self, prefix: &[u32]) -> Result<Vec<f32>> {
        let mut tgt_in = Vec::with_capacity(prefix.len() + 1);
        tgt_in.push(TargetVocab::BOS);
        tgt_in.extend_from_slice(prefix);
        let logits = self
            .model
            .decoder_logits(&self.enc_out, &tgt_in, self.len)?;
        let (rows, vocab) = logits.dims2()?;
        Ok(log_softmax(&logits.data[(rows - 1) * vocab..rows * vocab]))
    }

    fn candidate_ids(&self) -> &[u32] {
        &self.candidates
    }

    fn eos_id(&self) -> u32 {
        TargetVocab::EOS
    }
}

pub fn log_softmax(x: &[f32]) -> Vec<f32> {
    let mx = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f32 = x.iter().map(|&v| (v - mx).exp()).sum();
    let lse = mx + sum.ln();
    x.iter().map(|&v| v - lse).collect()
}

/// Standard beam search over the character vocabulary plus EOS.
///
/// All naturally terminated hypotheses are collected; search stops when the
/// best live score can no longer beat the nbest-th finished score (step
/// log-probs are never positive, so live scores only decrease) or at the
/// safety cap. Results are sorted by log-probability, descending; ties keep
/// expansion order, so identical inputs give identical output.
pub fn beam_search(
    model: &Model,
    tgt_vocab: &TargetVocab,
    request: &DecodeRequest,
) -> Result<Vec<Hypothesis>> {
    let scorer = ModelScorer::new(model, tgt_vocab, &request.source_ids, request.len)?;
    beam_search_with(&scorer, request)
}

pub fn beam_search_with<S: SequenceScorer>(
    scorer: &S,
    request: &DecodeRequest,
) -> Result<Vec<Hypothesis>> {
    request.validate()?;
    let eos = scorer.eos_id();
    let mut live: Vec<Hypothesis> = vec![Hypothesis {
        ids: Vec::new(),
        logprob: 0.0,
        terminated: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..request.safety_cap {
        let mut candidates: Vec<Hypothesis> = Vec::new();
        for hyp in &live {
            let lp = scorer.step_log_probs(&hyp.ids)?;
            let extend = |id: u32, terminated: bool| {
                let mut ids = hyp.ids.clone();
                ids.push(id);
                Hypothesis {
                    ids,
                    logprob: hyp.logprob + lp[id as usize],
                    terminated,
                }
            };
            for &id in scorer.candidate_ids() {
                candidates.push(extend(id, false));
            }
            candidates.push(extend(eos, true));
        }
        // Stable by construction: sort_by is stable and candidates were
        // pushed in (parent, token) order.
        candidates.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        live.clear();
        for c in candidates {
            if c.terminated {
                finished.push(c);
            } else if live.len() < request.beam {
                live.push(c);
            }
        }
        if live.is_empty() {
            break;
        }
        // nbest-th best finished score, if we already have that many.
        if finished.len() >= request.nbest {
            let mut scores: Vec<f32> = finished.iter().map(|h| h.logprob).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            let bar = scores[request.nbest - 1];
            let best_live = live
                .iter()
                .map(|h| h.logprob)
                .fold(f32::NEG_INFINITY, f32::max);
            if best_live <= bar {
                break;
            }
        }
    }

    // Hypotheses still alive at the cap are returned unterminated.
    finished.extend(live);
    finished.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
    finished.truncate(request.nbest);
    Ok(finished)
}

/// Distinct whitespace words of the detokenized source, lowercased.
pub fn source_words(source_text: &str) -> HashSet<String> {
    source_text
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect()
}

/// Number of distinct source words occurring as contiguous substrings of a
/// candidate text (both lowercased).
pub fn overlap_score(candidate_text: &str, words: &HashSet<String>) -> usize {
    let lowered = candidate_text.to_lowercase();
    words
        .iter()
        .filter(|w| lowered.contains(w.as_str()))
        .count()
}

/// Picks the hypothesis containing the most distinct source words; ties go
/// to the higher log-probability, then to the lower index. Returns the index
/// into `hypotheses`.
pub fn rerank_index(hypothesis_texts: &[String], logprobs: &[f32], source_text: &str) -> usize {
    assert_eq!(hypothesis_texts.len(), logprobs.len());
    assert!(
        !hypothesis_texts.is_empty(),
        "rerank needs at least one hypothesis"
    );
    let words = source_words(source_text);
    let mut best = 0usize;
    let mut best_score = overlap_score(&hypothesis_texts[0], &words);
    for (i, text) in hypothesis_texts.iter().enumerate().skip(1) {
        let score = overlap_score(text, &words);
        if score > best_score || (score == best_score && logprobs[i] > logprobs[best]) {
            best = i;
            best_score = score;
        }
    }
    best
}

/// Re-ranks decoded hypotheses against the raw source text.
pub fn rerank(hypotheses: &[Hypothesis], tgt_vocab: &TargetVocab, source_text: &str) -> Hypothesis {
    let texts: Vec<String> = hypotheses
        .iter()
        .map(|h| tgt_vocab.decode(&h.ids))
        .collect();
    let logprobs: Vec<f32> = hypotheses.iter().map(|h| h.logprob).collect();
    hypotheses[rerank_index(&texts, &logprobs, source_text)].clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Forces a fixed character until `eos_at` characters are emitted, then
    /// forces EOS.
    struct Rigged {
        candidates: Vec<u32>,
        eos_at: usize,
    }

    impl SequenceScorer for Rigged {
        fn step_log_probs(&self, prefix: &[u32]) -> Result<Vec<f32>> {
            let vocab = 4 + self.candidates.len();
            let mut lp = vec![-50.0f32; vocab];
            if prefix.len() >= self.eos_at {
                lp[TargetVocab::EOS as usize] = -0.01;
            } else {
                lp[self.candidates[0] as usize] = -0.01;
            }
            Ok(lp)
        }

        fn candidate_ids(&self) -> &[u32] {
            &self.candidates
        }

        fn eos_id(&self) -> u32 {
            TargetVocab::EOS
        }
    }

    fn request(len: u32, beam: usize, nbest: usize) -> DecodeRequest {
        DecodeRequest::new(vec![], len, beam, nbest)
    }

    #[test]
    fn rigged_model_terminates_at_forced_position() {
        let scorer = Rigged {
            candidates: vec![4, 5, 6],
            eos_at: 4,
        };
        let out = beam_search_with(&scorer, &request(4, 1, 1)).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].terminated);
        assert_eq!(out[0].ids.len(), 5); // four characters then EOS
        assert_eq!(*out[0].ids.last().unwrap(), TargetVocab::EOS);
    }

    #[test]
    fn beam_zero_is_rejected() {
        let scorer = Rigged {
            candidates: vec![4],
            eos_at: 1,
        };
        assert!(beam_search_with(&scorer, &request(1, 0, 1)).is_err());
    }

    #[test]
    fn nbest_must_fit_beam() {
        let scorer = Rigged {
            candidates: vec![4],
            eos_at: 1,
        };
        assert!(beam_search_with(&scorer, &request(1, 2, 3)).is_err());
    }

    /// Uniform scorer that never favors EOS: everything hits the cap.
    struct NeverEnds {
        candidates: Vec<u32>,
    }

    impl SequenceScorer for NeverEnds {
        fn step_log_probs(&self, _prefix: &[u32]) -> Result<Vec<f32>> {
            let vocab = 4 + self.candidates.len();
            let mut lp = vec![-30.0f32; vocab];
            for &c in &self.candidates {
                lp[c as usize] = -0.5;
            }
            Ok(lp)
        }

        fn candidate_ids(&self) -> &[u32] {
            &self.candidates
        }

        fn eos_id(&self) -> u32 {
            TargetVocab::EOS
        }
    }

    #[test]
    fn cap_returns_unterminated_hypotheses() {
        let scorer = NeverEnds {
            candidates: vec![4, 5],
        };
        let mut req = request(3, 2, 2);
        req.safety_cap = 3;
        let out = beam_search_with(&scorer, &req).unwrap();
        assert_eq!(out.len(), 2);
        // EOS at -30 per step beats... no: a terminated hyp has logprob
        // ≤ -30, an unterminated one -1.5; the unterminated ones win.
        assert!(out.iter().all(|h| !h.terminated));
        assert!(out.iter().all(|h| h.ids.len() == 3));
    }

    #[test]
    fn results_sorted_distinct_and_full() {
        let scorer = NeverEnds {
            candidates: vec![4, 5, 6],
        };
        let mut req = request(2, 4, 4);
        req.safety_cap = 2;
        let out = beam_search_with(&scorer, &req).unwrap();
        assert_eq!(out.len(), 4);
        for w in out.windows(2) {
            assert!(w[0].logprob >= w[1].logprob);
        }
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                assert_ne!(out[i].ids, out[j].ids, "hypotheses must be distinct");
            }
        }
    }

    #[test]
    fn determinism() {
        let scorer = NeverEnds {
            candidates: vec![4, 5, 6],
        };
        let mut req = request(2, 3, 3);
        req.safety_cap = 4;
        let a = beam_search_with(&scorer, &req).unwrap();
        let b = beam_search_with(&scorer, &req).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wider_beam_never_scores_worse() {
        use crate::encoding::Family;
        use crate::model::{init_model, ModelConfig};

        for seed in 0..6u64 {
            let model = init_model(ModelConfig {
                d: 8,
                heads: 2,
                enc_layers: 1,
                dec_layers: 1,
                ffn: 16,
                dropout: 0.0,
                src_vocab: 6,
                tgt_vocab: 8,
                family: Family::Ldpe,
                base: 10000.0,
                seed: 0x40 + seed,
            })
            .unwrap();
            let vocab = TargetVocab::from_chars(vec!['a', 'b', 'c', 'd']);
            let mut best_prev = f32::NEG_INFINITY;
            for beam in [1usize, 2, 4, 8] {
                let request = DecodeRequest {
                    source_ids: vec![2, 3, 4],
                    len: 3,
                    beam,
                    nbest: 1,
                    safety_cap: 5,
                };
                let out = beam_search(&model, &vocab, &request).unwrap();
                assert!(
                    out[0].logprob >= best_prev,
                    "seed {seed}: beam {beam} top-1 {} below narrower beam's {}",
                    out[0].logprob,
                    best_prev
                );
                best_prev = out[0].logprob;
            }
        }
    }

    #[test]
    fn rerank_prefers_most_source_words() {
        // source words {a, c, d}; "a c d" covers 3, "a b" covers 1.
        let texts = vec!["a b".to_string(), "a c d".to_string()];
        let lps = vec![-1.0, -2.0];
        assert_eq!(rerank_index(&texts, &lps, "a c d"), 1);
    }

    #[test]
    fn rerank_tie_breaks_on_logprob_then_index() {
        let texts = vec!["a x".to_string(), "a y".to_string()];
        assert_eq!(rerank_index(&texts, &[-2.0, -1.0], "a"), 1);
        assert_eq!(rerank_index(&texts, &[-1.0, -2.0], "a"), 0);
        assert_eq!(rerank_index(&texts, &[-1.0, -1.0], "a"), 0);
    }

    #[test]
    fn rerank_single_hypothesis_returned() {
        let texts = vec!["anything".to_string()];
        assert_eq!(rerank_index(&texts, &[-3.0], "some source"), 0);
    }

    #[test]
    fn overlap_counts_distinct_substring_words() {
        let words = source_words("the cat the hat");
        assert_eq!(words.len(), 3); // "the" deduplicated
        assert_eq!(overlap_score("the cat sat", &words), 2);
        assert_eq!(overlap_score("THE CAT", &words), 2); // case-insensitive
        assert_eq!(overlap_score("xyz", &words), 0);
        // contiguous-substring matching: "that" contains "hat" but not "the"
        assert_eq!(overlap_score("that", &words), 1);
    }
}
