//! Datasets: synthetic length-constrained tasks, JSONL corpora, and the
//! leave-one-length-out filter.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::vocab::char_len;

/// One source/target pair. The length constraint is always derived from the
/// target text, never stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub source: String,
    pub target: String,
}

impl ExamplePair {
    /// Target length in Unicode scalars; this is the `len` the decoder is
    /// conditioned on. Not a container length, so there is no `is_empty`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        char_len(&self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Target is the first L characters of a transform of the source.
    ConstrainedCopy,
    /// Target concatenates marked keywords from the source up to ≈ L chars.
    KeywordExtract,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    Identity,
    Reverse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub task: Task,
    #[serde(default)]
    pub transform: Transform,
    /// Number of distinct lowercase letters to draw from (1..=26).
    pub alphabet: usize,
    pub source_len: (usize, usize),
    pub target_len: (usize, usize),
    pub size: usize,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    fn validate(&self) -> Result<()> {
        if self.alphabet == 0 || self.alphabet > 26 {
            return Err(Error::Config(format!(
                "alphabet size must be in 1..=26, got {}",
                self.alphabet
            )));
        }
        if self.source_len.0 > self.source_len.1 || self.target_len.0 > self.target_len.1 {
            return Err(Error::Config(
                "length ranges must be (min, max) with min <= max".into(),
            ));
        }
        if self.source_len.0 == 0 {
            return Err(Error::Config("source length must be at least 1".into()));
        }
        if matches!(self.task, Task::ConstrainedCopy) && self.target_len.1 > self.source_len.0 {
            return Err(Error::Config(format!(
                "constrained-copy needs every target length to be feasible: target max {} \
                 exceeds source min {}",
                self.target_len.1, self.source_len.0
            )));
        }
        Ok(())
    }
}

fn random_word(rng: &mut SplitMix64, alphabet: usize, len: usize) -> String {
    (0..len)
        .map(|_| (b'a' + rng.next_below(alphabet as u64) as u8) as char)
        .collect()
}

/// Deterministic synthetic data. The same spec yields the same pairs on any
/// platform.
pub fn generate_synthetic(spec: &SyntheticTaskSpec) -> Result<Vec<ExamplePair>> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut pairs = Vec::with_capacity(spec.size);
    for _ in 0..spec.size {
        let pair = match spec.task {
            Task::ConstrainedCopy => constrained_copy_pair(spec, &mut rng)?,
            Task::KeywordExtract => keyword_extract_pair(spec, &mut rng)?,
        };
        pairs.push(pair);
    }
    Ok(pairs)
}

fn constrained_copy_pair(spec: &SyntheticTaskSpec, rng: &mut SplitMix64) -> Result<ExamplePair> {
    let slen = rng.next_range(spec.source_len.0 as u64, spec.source_len.1 as u64) as usize;
    let tlen = rng.next_range(spec.target_len.0 as u64, spec.target_len.1 as u64) as usize;
    let source = random_word(rng, spec.alphabet, slen);
    let target = constrained_copy_target(&source, spec.transform, tlen);
    Ok(ExamplePair { source, target })
}

/// First `len` characters of the transformed source.
pub fn constrained_copy_target(source: &str, transform: Transform, len: usize) -> String {
    let transformed: String = match transform {
        Transform::Identity => source.to_string(),
        Transform::Reverse => source.chars().rev().collect(),
    };
    transformed.chars().take(len).collect()
}

fn keyword_extract_pair(spec: &SyntheticTaskSpec, rng: &mut SplitMix64) -> Result<ExamplePair> {
    const RETRIES: usize = 64;
    for _ in 0..RETRIES {
        let tlen = rng.next_range(spec.target_len.0 as u64, spec.target_len.1 as u64) as usize;
        // Keywords are uppercase words, fillers lowercase; the case marks them.
        let word_count = rng.next_range(6, 12) as usize;
        let mut words = Vec::with_capacity(word_count);
        let mut keywords: Vec<String> = Vec::new();
        for _ in 0..word_count {
            let wlen = rng.next_range(3, 6) as usize;
            let w = random_word(rng, spec.alphabet, wlen);
            if rng.next_below(2) == 0 {
                let kw = w.to_uppercase();
                keywords.push(kw.clone());
                words.push(kw);
            } else {
                words.push(w);
            }
        }
        // Take keywords until the target reaches the drawn length.
        let mut target = String::new();
        for kw in &keywords {
            if !target.is_empty() {
                target.push(' ');
            }
            target.push_str(kw);
            if char_len(&target) >= tlen {
                break;
            }
        }
        if char_len(&target) >= tlen {
            let source = words.join(" ");
            if char_len(&source) <= spec.source_len.1 {
                return Ok(ExamplePair { source, target });
            }
        }
    }
    Err(Error::Data(
        "keyword-extract could not draw a feasible example; widen the ranges".into(),
    ))
}

/// Reads one JSON object per line with `source` and `target` fields.
/// CRLF endings are normalized; blank lines are skipped.
pub fn load_jsonl(path: &Path) -> Result<Vec<ExamplePair>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let pair: ExamplePair =
            serde_json::from_str(line).map_err(|source| Error::MalformedLine {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn save_jsonl(path: &Path, pairs: &[ExamplePair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Drops every pair whose target length is in `excluded`, preserving order.
pub fn exclude_lengths(pairs: Vec<ExamplePair>, excluded: &[usize]) -> Vec<ExamplePair> {
    pairs
        .into_iter()
        .filter(|p| !excluded.contains(&p.len()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// FNV-1a over the source text; stable across platforms and file order.
fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xCBF29CE484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001B3);
    }
    h
}

/// Deterministic 90/5/5 split keyed on the source text.
pub fn split_of(pair: &ExamplePair) -> Split {
    match fnv1a(&pair.source) % 100 {
        0..=89 => Split::Train,
        90..=94 => Split::Valid,
        _ => Split::Test,
    }
}

pub fn split(pairs: Vec<ExamplePair>) -> (Vec<ExamplePair>, Vec<ExamplePair>, Vec<ExamplePair>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for p in pairs {
        match split_of(&p) {
            Split::Train => train.push(p),
            Split::Valid => valid.push(p),
            Split::Test => test.push(p),
        }
    }
    (train, valid, test)
}
