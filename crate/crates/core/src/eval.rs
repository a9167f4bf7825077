//! Recall-oriented ROUGE, length variance, length-difference histograms, and
//! byte truncation.
//!
//! All scores are computed in f64 so test oracles can demand exact equality.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::char_len;

/// Token unit for ROUGE computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    /// One token per Unicode scalar (Japanese-style evaluation).
    Character,
    /// Whitespace-separated words (English-style evaluation).
    Word,
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "char" | "character" => Ok(Unit::Character),
            "word" => Ok(Unit::Word),
            other => Err(Error::Config(format!(
                "unknown unit `{other}` (expected char or word)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub unit: Unit,
    /// Optional DUC-style byte limit applied to candidates before scoring.
    pub byte_truncate: Option<usize>,
}

pub fn tokens(text: &str, unit: Unit) -> Vec<String> {
    match unit {
        Unit::Character => text.chars().map(|c| c.to_string()).collect(),
        Unit::Word => text.split_whitespace().map(|w| w.to_string()).collect(),
    }
}

/// ROUGE-N recall with a degenerate-reference flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramRecall {
    pub score: f64,
    /// Set when the reference holds fewer than n tokens; the score is then 0.
    pub reference_too_short: bool,
}

/// Clipped candidate n-gram matches divided by the reference n-gram count.
pub fn rouge_n_recall(
    candidate: &str,
    reference: &str,
    n: usize,
    unit: Unit,
) -> Result<NgramRecall> {
    if n == 0 {
        return Err(Error::Config("ROUGE-N needs n >= 1".into()));
    }
    let cand = tokens(candidate, unit);
    let refr = tokens(reference, unit);
    if refr.len() < n {
        return Ok(NgramRecall {
            score: 0.0,
            reference_too_short: true,
        });
    }
    let mut ref_counts: HashMap<&[String], u64> = HashMap::new();
    for gram in refr.windows(n) {
        *ref_counts.entry(gram).or_insert(0) += 1;
    }
    let total_ref = (refr.len() - n + 1) as f64;
    let mut matched = 0u64;
    if cand.len() >= n {
        let mut cand_counts: HashMap<&[String], u64> = HashMap::new();
        for gram in cand.windows(n) {
            *cand_counts.entry(gram).or_insert(0) += 1;
        }
        for (gram, &c) in &cand_counts {
            if let Some(&r) = ref_counts.get(gram) {
                matched += c.min(r);
            }
        }
    }
    Ok(NgramRecall {
        score: matched as f64 / total_ref,
        reference_too_short: false,
    })
}

/// LCS length divided by reference token count.
pub fn rouge_l_recall(candidate: &str, reference: &str, unit: Unit) -> Result<f64> {
    let refr = tokens(reference, unit);
    if refr.is_empty() {
        return Err(Error::Config(
            "ROUGE-L is undefined for an empty reference".into(),
        ));
    }
    let cand = tokens(candidate, unit);
    Ok(lcs_len(&cand, &refr) as f64 / refr.len() as f64)
}

/// Standard O(|a|·|b|) dynamic program, two rolling rows.
fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean squared deviation of generated lengths from the desired length.
/// Reported unscaled.
pub fn length_variance(generated_lengths: &[usize], desired: usize) -> Result<f64> {
    if generated_lengths.is_empty() {
        return Err(Error::Config(
            "length variance needs at least one generated length".into(),
        ));
    }
    let n = generated_lengths.len() as f64;
    let sum: f64 = generated_lengths
        .iter()
        .map(|&l| {
            let d = l as f64 - desired as f64;
            d * d
        })
        .sum();
    Ok(sum / n)
}

/// Counts of (generated length − desired length), exact integer bins.
pub fn length_histogram(pairs: &[(usize, usize)]) -> BTreeMap<i64, u64> {
    let mut hist = BTreeMap::new();
    for &(generated, desired) in pairs {
        *hist.entry(generated as i64 - desired as i64).or_insert(0) += 1;
    }
    hist
}

/// Longest prefix whose UTF-8 encoding fits in `limit` bytes; never splits a
/// character.
pub fn truncate_bytes(text: &str, limit: usize) -> &str {
    if text.len() <= limit {
        return text;
    }
    let mut end = 0;
    for (idx, c) in text.char_indices() {
        if idx + c.len_utf8() > limit {
            break;
        }
        end = idx + c.len_utf8();
    }
    &text[..end]
}

/// Aggregate report over a decoded set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub r1: f64,
    pub r2: f64,
    #[serde(rename = "rL")]
    pub rl: f64,
    pub variance: f64,
    pub histogram: BTreeMap<i64, u64>,
    pub n: usize,
    pub config: EvalConfig,
}

/// Scores candidates against references, macro-averaging per-example scores.
///
/// `desired` supplies the requested length per example; variance and the
/// histogram measure the raw (untruncated) candidate length against it. Byte
/// truncation, when configured, applies to the candidate text before ROUGE
/// only.
pub fn evaluate(
    candidates: &[String],
    references: &[String],
    desired: &[usize],
    config: &EvalConfig,
) -> Result<EvalReport> {
    if candidates.len() != references.len() {
        return Err(Error::LineCountMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::Config("cannot evaluate zero examples".into()));
    }
    assert_eq!(candidates.len(), desired.len());
    let n = candidates.len();
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    let mut rl = 0.0;
    let mut pairs = Vec::with_capacity(n);
    let mut sq = 0.0;
    for i in 0..n {
        let cand_full = candidates[i].as_str();
        let cand = match config.byte_truncate {
            Some(limit) => truncate_bytes(cand_full, limit),
            None => cand_full,
        };
        let reference = references[i].as_str();
        r1 += rouge_n_recall(cand, reference, 1, config.unit)?.score;
        r2 += rouge_n_recall(cand, reference, 2, config.unit)?.score;
        rl += rouge_l_recall(cand, reference, config.unit)?;
        let gen_len = char_len(cand_full);
        pairs.push((gen_len, desired[i]));
        let d = gen_len as f64 - desired[i] as f64;
        sq += d * d;
    }
    Ok(EvalReport {
        r1: r1 / n as f64,
        r2: r2 / n as f64,
        rl: rl / n as f64,
        variance: sq / n as f64,
        histogram: length_histogram(&pairs),
        n,
        config: config.clone(),
    })
}

/// Histogram as CSV with a `diff,count` header, rows in ascending diff order.
pub fn histogram_csv(hist: &BTreeMap<i64, u64>) -> String {
    let mut out = String::from("diff,count\n");
    for (diff, count) in hist {
        out.push_str(&format!("{diff},{count}\n"));
    }
    out
}
