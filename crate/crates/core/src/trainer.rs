//! Training loop: seeded shuffling, batching, epoch logging.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::ExamplePair;
use crate::error::{Error, Result};
use crate::model::{init_model, train_step, Batch, Model, ModelConfig};
use crate::optim::{Adam, AdamConfig};
use crate::rng::SplitMix64;
use crate::vocab::{SourceVocab, TargetVocab};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSettings {
    pub batch_size: usize,
    /// Total optimization steps; an epoch may end early when this runs out.
    pub steps: u64,
    pub lr: f32,
    #[serde(default = "default_beta1")]
    pub beta1: f32,
    #[serde(default = "default_beta2")]
    pub beta2: f32,
    #[serde(default = "default_adam_eps")]
    pub eps: f32,
    /// Subword vocabulary budget for the source side.
    pub bpe_vocab_size: usize,
}

fn default_beta1() -> f32 {
    0.9
}
fn default_beta2() -> f32 {
    0.999
}
fn default_adam_eps() -> f32 {
    1e-8
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub steps: u64,
    pub train_loss: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub src_vocab: SourceVocab,
    pub tgt_vocab: TargetVocab,
    pub epochs: Vec<EpochLog>,
    /// Training-set example counts per target length.
    pub length_counts: BTreeMap<usize, u64>,
}

/// Trains a fresh model on `pairs`. Vocabularies are built from the training
/// pairs themselves; the declared length of each pair conditions its decoder
/// rows.
pub fn train(
    pairs: &[ExamplePair],
    model_config: ModelConfig,
    settings: &TrainSettings,
) -> Result<TrainOutcome> {
    train_with(pairs, model_config, settings, |_| {})
}

/// `train`, reporting each finished epoch as it happens so callers can keep
/// a partial log when training aborts (for example on a non-finite loss).
pub fn train_with(
    pairs: &[ExamplePair],
    model_config: ModelConfig,
    settings: &TrainSettings,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if settings.batch_size == 0 || settings.steps == 0 {
        return Err(Error::Config(
            "batch size and steps must be positive".into(),
        ));
    }

    let sources: Vec<&str> = pairs.iter().map(|p| p.source.as_str()).collect();
    let targets: Vec<&str> = pairs.iter().map(|p| p.target.as_str()).collect();
    let src_vocab = SourceVocab::train(&sources, settings.bpe_vocab_size)?;
    let tgt_vocab = TargetVocab::build(&targets);

    let mut config = model_config;
    config.src_vocab = src_vocab.size();
    config.tgt_vocab = tgt_vocab.size();
    let mut model = init_model(config)?;

    let mut length_counts: BTreeMap<usize, u64> = BTreeMap::new();
    for p in pairs {
        *length_counts.entry(p.len()).or_insert(0) += 1;
    }

    let adam = AdamConfig {
        lr: settings.lr,
        beta1: settings.beta1,
        beta2: settings.beta2,
        eps: settings.eps,
    };
    let mut opt = Adam::new(adam, &model.params.sizes());

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epochs = Vec::new();
    let mut step: u64 = 0;
    let mut epoch: u64 = 0;
    'outer: loop {
        let mut shuffle_rng = SplitMix64::derive(model.config.seed ^ 0x73687566, epoch);
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut epoch_steps = 0u64;
        for chunk in order.chunks(settings.batch_size) {
            let batch_pairs: Vec<ExamplePair> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let batch = Batch::from_pairs(&batch_pairs, &src_vocab, &tgt_vocab);
            let loss = train_step(&mut model, &batch, &mut opt, step)?;
            epoch_loss += loss as f64;
            epoch_steps += 1;
            step += 1;
            if step >= settings.steps {
                let log = EpochLog {
                    epoch,
                    steps: epoch_steps,
                    train_loss: epoch_loss / epoch_steps as f64,
                };
                on_epoch(&log);
                epochs.push(log);
                break 'outer;
            }
        }
        let log = EpochLog {
            epoch,
            steps: epoch_steps,
            train_loss: epoch_loss / epoch_steps as f64,
        };
        on_epoch(&log);
        epochs.push(log);
        epoch += 1;
    }

    Ok(TrainOutcome {
        model,
        src_vocab,
        tgt_vocab,
        epochs,
        length_counts,
    })
}

/// CSV with one row per epoch: `epoch,steps,train_loss`.
pub fn epochs_csv(epochs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,steps,train_loss\n");
    for e in epochs {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.steps, e.train_loss));
    }
    out
}

/// CSV with one row per target length seen in training: `len,count`.
pub fn length_counts_csv(counts: &BTreeMap<usize, u64>) -> String {
    let mut out = String::from("len,count\n");
    for (len, count) in counts {
        out.push_str(&format!("{len},{count}\n"));
    }
    out
}
