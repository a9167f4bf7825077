//! Vocabularies: subword (BPE) on the source side, characters on the target
//! side.
//!
//! The source vocabulary is trained with frequency-greedy byte-pair merging
//! over whitespace-split words. Ties are broken by the lexicographically
//! smallest pair so training is deterministic. Words are separated by an
//! explicit space token in the encoded stream, which makes decoding trivial
//! and keeps the token count at or below the character count.
//!
//! The target vocabulary maps one Unicode scalar to one id. The declared
//! length of an example is the character count of its target text, excluding
//! the end-of-sequence symbol; the model is expected to emit EOS exactly at
//! that position.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;

/// Subword vocabulary for the encoder side.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceVocab {
    /// Merge rules in training order.
    pub merges: Vec<(String, String)>,
    /// Base symbols (single characters) in id order.
    base: Vec<String>,
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl SourceVocab {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const SPACE: u32 = 2;
    const SPECIALS: usize = 3;

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    fn assemble(base: Vec<String>, merges: Vec<(String, String)>) -> Self {
        let mut id_to_token: Vec<String> = vec!["<pad>".into(), "<unk>".into(), " ".into()];
        id_to_token.extend(base.iter().cloned());
        for (l, r) in &merges {
            id_to_token.push(format!("{l}{r}"));
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            merges,
            base,
            token_to_id,
            id_to_token,
        }
    }

    /// Trains merges on `corpus` until the vocabulary (specials + base
    /// characters + merges) reaches `target_size` or no pair occurs at least
    /// twice.
    pub fn train<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Self> {
        if corpus.is_empty() || corpus.iter().all(|l| l.as_ref().trim().is_empty()) {
            return Err(Error::Config("cannot train BPE on an empty corpus".into()));
        }
        // Word frequencies; each word is a sequence of single-char symbols.
        let mut word_freq: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        let mut base_set: BTreeMap<String, ()> = BTreeMap::new();
        for line in corpus {
            for word in line.as_ref().split_whitespace() {
                let symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
                for s in &symbols {
                    base_set.entry(s.clone()).or_insert(());
                }
                *word_freq.entry(symbols).or_insert(0) += 1;
            }
        }
        let base: Vec<String> = base_set.into_keys().collect();
        let floor = Self::SPECIALS + base.len();
        if target_size < floor {
            return Err(Error::Config(format!(
                "target vocabulary size {target_size} is below the base inventory of {floor} \
                 (specials + distinct characters)"
            )));
        }

        let mut merges: Vec<(String, String)> = Vec::new();
        while floor + merges.len() < target_size {
            // Count adjacent symbol pairs across all words.
            let mut pair_freq: HashMap<(String, String), u64> = HashMap::new();
            for (word, &freq) in &word_freq {
                for pair in word.windows(2) {
                    *pair_freq
                        .entry((pair[0].clone(), pair[1].clone()))
                        .or_insert(0) += freq;
                }
            }
            // Highest frequency, ties to the lexicographically smallest pair.
            let best = pair_freq
                .into_iter()
                .filter(|&(_, f)| f >= 2)
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
            let Some(((left, right), _)) = best else {
                break;
            };

            let merged = format!("{left}{right}");
            let mut next: BTreeMap<Vec<String>, u64> = BTreeMap::new();
            for (word, freq) in word_freq {
                let mut out = Vec::with_capacity(word.len());
                let mut i = 0;
                while i < word.len() {
                    if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
                        out.push(merged.clone());
                        i += 2;
                    } else {
                        out.push(word[i].clone());
                        i += 1;
                    }
                }
                *next.entry(out).or_insert(0) += freq;
            }
            word_freq = next;
            merges.push((left, right));
        }
        Ok(Self::assemble(base, merges))
    }

    /// Applies the learned merges to one whitespace-split word.
    fn segment(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        for (left, right) in &self.merges {
            if symbols.len() < 2 {
                break;
            }
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    out.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = out;
        }
        symbols
    }

    /// Whitespace pre-split, merges applied in order, unknown symbols → UNK.
    /// Words are joined by the space token.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for (w, word) in text.split_whitespace().enumerate() {
            if w > 0 {
                ids.push(Self::SPACE);
            }
            for sym in self.segment(word) {
                ids.push(*self.token_to_id.get(&sym).unwrap_or(&Self::UNK));
            }
        }
        ids
    }

    /// Inverse of `encode` up to UNK substitution and whitespace
    /// normalization.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                Self::PAD => {}
                Self::UNK => out.push('\u{FFFD}'),
                _ => out.push_str(&self.id_to_token[id as usize]),
            }
        }
        out
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    /// Serializes as line-oriented text: a `bpe v1` header, one base symbol
    /// per single-field line, then one merge per `left<TAB>right` line.
    pub fn to_text(&self) -> String {
        let mut s = String::from("bpe v1\n");
        for b in &self.base {
            let _ = writeln!(s, "{b}");
        }
        for (l, r) in &self.merges {
            let _ = writeln!(s, "{l}\t{r}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("bpe v1") => {}
            other => {
                return Err(Error::Data(format!(
                    "bad source vocabulary header: {other:?} (expected `bpe v1`)"
                )))
            }
        }
        let mut base = Vec::new();
        let mut merges = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            match line.split_once('\t') {
                Some((l, r)) => merges.push((l.to_string(), r.to_string())),
                None => base.push(line.to_string()),
            }
        }
        Ok(Self::assemble(base, merges))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Character vocabulary for the decoder side.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVocab {
    chars: Vec<char>,
    char_to_id: HashMap<char, u32>,
}

impl TargetVocab {
    pub const PAD: u32 = 0;
    pub const BOS: u32 = 1;
    pub const EOS: u32 = 2;
    pub const UNK: u32 = 3;
    const SPECIALS: u32 = 4;

    /// Builds the inventory from every character that appears in `texts`.
    pub fn build<S: AsRef<str>>(texts: &[S]) -> Self {
        let mut set: BTreeMap<char, ()> = BTreeMap::new();
        for t in texts {
            for c in t.as_ref().chars() {
                set.entry(c).or_insert(());
            }
        }
        Self::from_chars(set.into_keys().collect())
    }

    pub fn from_chars(chars: Vec<char>) -> Self {
        let char_to_id = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32 + Self::SPECIALS))
            .collect();
        Self { chars, char_to_id }
    }

    pub fn size(&self) -> usize {
        self.chars.len() + Self::SPECIALS as usize
    }

    /// Ids of all plain characters, the candidate set for decoding.
    pub fn char_ids(&self) -> Vec<u32> {
        (0..self.chars.len() as u32)
            .map(|i| i + Self::SPECIALS)
            .collect()
    }

    /// One id per Unicode scalar plus a trailing EOS. The declared length of
    /// the text is its character count, excluding EOS.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = text
            .chars()
            .map(|c| *self.char_to_id.get(&c).unwrap_or(&Self::UNK))
            .collect();
        ids.push(Self::EOS);
        ids
    }

    /// Concatenates characters, stopping at the first EOS; other specials are
    /// dropped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == Self::EOS {
                break;
            }
            if id < Self::SPECIALS {
                continue;
            }
            if let Some(&c) = self.chars.get((id - Self::SPECIALS) as usize) {
                out.push(c);
            }
        }
        out
    }

    /// One character per line, UTF-8, LF endings.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for &c in &self.chars {
            s.push(c);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut chars = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let mut it = line.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                _ => {
                    return Err(Error::Data(format!(
                        "target vocabulary line {} must hold exactly one character, got {line:?}",
                        i + 1
                    )))
                }
            }
        }
        Ok(Self::from_chars(chars))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Character count of a target text: the unit in which lengths are declared,
/// requested, and measured.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}
