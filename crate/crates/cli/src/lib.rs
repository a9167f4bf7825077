//! Command implementations behind the `lenctl` binary: train, generate,
//! evaluate, pe-dump. Each command reads and writes plain files (JSON, JSONL,
//! CSV) with no timestamps, so identical inputs and seeds reproduce identical
//! artifacts byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lenctl::data::{self, SyntheticTaskSpec};
use lenctl::decode::{beam_search, default_safety_cap, rerank_index, DecodeRequest};
use lenctl::encoding::{family_table, Family, DEFAULT_BASE};
use lenctl::error::{Error, Result};
use lenctl::eval::{evaluate, histogram_csv, EvalConfig, Unit};
use lenctl::model::{load_checkpoint, save_checkpoint, ModelConfig};
use lenctl::trainer::{length_counts_csv, train_with, TrainSettings};
use lenctl::vocab::{char_len, SourceVocab, TargetVocab};

pub const SOURCE_VOCAB_FILE: &str = "source_vocab.txt";
pub const TARGET_VOCAB_FILE: &str = "target_vocab.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Model block of a run configuration; vocabulary sizes are resolved from
/// the training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSettings {
    pub d: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub ffn: usize,
    pub dropout: f32,
    pub family: Family,
    #[serde(default = "default_base")]
    pub base: f64,
}

fn default_base() -> f64 {
    DEFAULT_BASE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticTaskSpec),
    Jsonl { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelSettings,
    pub train: TrainSettings,
    pub data: DataSource,
    #[serde(default)]
    pub exclude_lengths: Vec<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }
}

/// Trains a model and writes checkpoint, vocabularies, logs, data splits and
/// the resolved configuration into the output directory.
pub fn cmd_train(
    config_path: &Path,
    seed_override: Option<u64>,
    exclude_override: Option<Vec<usize>>,
) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if let Some(excl) = exclude_override {
        cfg.exclude_lengths = excl;
    }

    let pairs = match &cfg.data {
        DataSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = spec.seed.wrapping_add(cfg.seed);
            data::generate_synthetic(&spec)?
        }
        DataSource::Jsonl { path } => data::load_jsonl(path)?,
    };
    let (train_pairs, valid_pairs, test_pairs) = data::split(pairs);
    // Exclusion applies to the training data only; held-out sets keep every
    // length so unseen lengths can still be evaluated.
    let train_pairs = data::exclude_lengths(train_pairs, &cfg.exclude_lengths);

    let model_config = ModelConfig {
        d: cfg.model.d,
        heads: cfg.model.heads,
        enc_layers: cfg.model.enc_layers,
        dec_layers: cfg.model.dec_layers,
        ffn: cfg.model.ffn,
        dropout: cfg.model.dropout,
        src_vocab: 1, // resolved by the trainer
        tgt_vocab: 1,
        family: cfg.model.family,
        base: cfg.model.base,
        seed: cfg.seed,
    };

    // The epoch log streams to disk as training runs, so an abort (say, a
    // non-finite loss) still leaves the partial log behind.
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let mut log_file = std::fs::File::create(dir.join("training_log.csv"))?;
    {
        use std::io::Write;
        writeln!(log_file, "epoch,steps,train_loss")?;
    }
    let outcome = train_with(&train_pairs, model_config, &cfg.train, |e| {
        use std::io::Write;
        let _ = writeln!(log_file, "{},{},{}", e.epoch, e.steps, e.train_loss);
        let _ = log_file.flush();
    })?;
    drop(log_file);

    save_checkpoint(&outcome.model, &dir.join(CHECKPOINT_FILE))?;
    outcome.src_vocab.save(&dir.join(SOURCE_VOCAB_FILE))?;
    outcome.tgt_vocab.save(&dir.join(TARGET_VOCAB_FILE))?;
    // excluded lengths show up as explicit zero rows
    let mut length_counts = outcome.length_counts.clone();
    for &len in &cfg.exclude_lengths {
        length_counts.entry(len).or_insert(0);
    }
    std::fs::write(
        dir.join("length_counts.csv"),
        length_counts_csv(&length_counts),
    )?;
    data::save_jsonl(&dir.join("train.jsonl"), &train_pairs)?;
    data::save_jsonl(&dir.join("valid.jsonl"), &valid_pairs)?;
    data::save_jsonl(&dir.join("test.jsonl"), &test_pairs)?;
    std::fs::write(
        dir.join("resolved_config.json"),
        serde_json::to_string_pretty(&cfg)?,
    )?;
    Ok(dir)
}

/// One line of a generation input file; `target` is optional at generation
/// time.
#[derive(Debug, Clone, Deserialize)]
struct GenInput {
    source: String,
    #[allow(dead_code)]
    #[serde(default)]
    target: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenOutput {
    pub output: String,
    pub len_requested: Option<u32>,
    pub len_generated: usize,
    pub logprob: f32,
    pub terminated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbest: Option<Vec<NbestEntry>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NbestEntry {
    pub output: String,
    pub logprob: f32,
    pub terminated: bool,
}

fn load_gen_inputs(path: &Path) -> Result<Vec<GenInput>> {
    let text = std::fs::read_to_string(path)?;
    let mut inputs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let input: GenInput =
            serde_json::from_str(line).map_err(|source| Error::MalformedLine {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?;
        inputs.push(input);
    }
    Ok(inputs)
}

pub struct GenerateArgs {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    pub len: Option<u32>,
    pub beam: usize,
    pub nbest: usize,
    pub rerank: bool,
}

/// Decodes every input line at the requested length and writes one JSON
/// object per line.
pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let dir = args.checkpoint.parent().unwrap_or_else(|| Path::new("."));
    let src_vocab = SourceVocab::load(&dir.join(SOURCE_VOCAB_FILE))?;
    let tgt_vocab = TargetVocab::load(&dir.join(TARGET_VOCAB_FILE))?;

    if model.config.family.needs_len() && args.len.is_none() {
        return Err(Error::Config(format!(
            "family {} requires --len",
            model.config.family.name()
        )));
    }
    let inputs = load_gen_inputs(&args.input)?;

    use rayon::prelude::*;
    let results: Vec<Result<GenOutput>> = inputs
        .par_iter()
        .map(|input| {
            let source_ids = src_vocab.encode(&input.source);
            let len = args.len.unwrap_or(0);
            let request = DecodeRequest {
                source_ids,
                len,
                beam: args.beam,
                nbest: args.nbest,
                safety_cap: if args.len.is_some() {
                    default_safety_cap(len)
                } else {
                    64
                },
            };
            let hyps = beam_search(&model, &tgt_vocab, &request)?;
            let texts: Vec<String> = hyps.iter().map(|h| tgt_vocab.decode(&h.ids)).collect();
            let chosen = if args.rerank {
                let lps: Vec<f32> = hyps.iter().map(|h| h.logprob).collect();
                rerank_index(&texts, &lps, &input.source)
            } else {
                0
            };
            let nbest = if args.nbest > 1 {
                Some(
                    hyps.iter()
                        .zip(&texts)
                        .map(|(h, t)| NbestEntry {
                            output: t.clone(),
                            logprob: h.logprob,
                            terminated: h.terminated,
                        })
                        .collect(),
                )
            } else {
                None
            };
            Ok(GenOutput {
                output: texts[chosen].clone(),
                len_requested: args.len,
                len_generated: char_len(&texts[chosen]),
                logprob: hyps[chosen].logprob,
                terminated: hyps[chosen].terminated,
                nbest,
            })
        })
        .collect();

    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(&r?)?);
        out.push('\n');
    }
    std::fs::write(&args.output, out)?;
    Ok(())
}

pub struct EvaluateArgs {
    pub outputs: PathBuf,
    pub references: PathBuf,
    pub unit: Unit,
    pub truncate_bytes: Option<usize>,
    pub report: PathBuf,
    pub histogram: Option<PathBuf>,
}

/// Scores generated outputs against references and writes the report JSON
/// (plus an optional histogram CSV).
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.outputs)?;
    let mut outputs: Vec<GenOutput> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let o: GenOutput = serde_json::from_str(line).map_err(|source| Error::MalformedLine {
            path: args.outputs.display().to_string(),
            line: i + 1,
            source,
        })?;
        outputs.push(o);
    }
    let references = data::load_jsonl(&args.references)?;
    if outputs.len() != references.len() {
        return Err(Error::LineCountMismatch {
            left: outputs.len(),
            right: references.len(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::Config("cannot evaluate empty files".into()));
    }

    let candidates: Vec<String> = outputs.iter().map(|o| o.output.clone()).collect();
    let ref_texts: Vec<String> = references.iter().map(|r| r.target.clone()).collect();
    // Desired length: the recorded request, else the reference length.
    let desired: Vec<usize> = outputs
        .iter()
        .zip(&references)
        .map(|(o, r)| {
            o.len_requested
                .map(|l| l as usize)
                .unwrap_or_else(|| r.len())
        })
        .collect();

    let config = EvalConfig {
        unit: args.unit,
        byte_truncate: args.truncate_bytes,
    };
    let report = evaluate(&candidates, &ref_texts, &desired, &config)?;
    std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)?;
    if let Some(hist_path) = &args.histogram {
        std::fs::write(hist_path, histogram_csv(&report.histogram))?;
    }
    Ok(())
}

pub struct PeDumpArgs {
    pub family: Family,
    pub dim: usize,
    pub base: f64,
    pub len: Option<u32>,
    pub max_pos: usize,
    pub out: Option<PathBuf>,
}

/// Writes an encoding table as CSV: header `pos,dim0,...`, one row per
/// position, 9 significant digits.
pub fn cmd_pe_dump(args: &PeDumpArgs) -> Result<String> {
    if args.family.needs_len() && args.len.is_none() {
        return Err(Error::Config(format!(
            "family {} requires --len",
            args.family.name()
        )));
    }
    let table = family_table(args.family, args.dim, args.base, args.len, args.max_pos)?;
    let mut csv = String::from("pos");
    for i in 0..args.dim {
        csv.push_str(&format!(",dim{i}"));
    }
    csv.push('\n');
    for pos in 0..=args.max_pos {
        csv.push_str(&pos.to_string());
        for &v in table.row(pos) {
            csv.push_str(&format!(",{:.8e}", v));
        }
        csv.push('\n');
    }
    if let Some(path) = &args.out {
        std::fs::write(path, &csv)?;
    }
    Ok(csv)
}

/// Exit code mapping: configuration/usage problems are 2, runtime failures 1.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// Helper for tests and callers that need a quick length histogram of a
/// JSONL dataset.
pub fn length_counts_of(path: &Path) -> Result<BTreeMap<usize, u64>> {
    let pairs = data::load_jsonl(path)?;
    let mut counts = BTreeMap::new();
    for p in &pairs {
        *counts.entry(p.len()).or_insert(0u64) += 1;
    }
    Ok(counts)
}

/// Re-export for integration tests.
pub use lenctl as core;
