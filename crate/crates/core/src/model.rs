//! Transformer encoder-decoder with a length-conditioned decoder input layer.
//!
//! The encoder always adds the absolute sinusoidal encoding to its token
//! embeddings. The decoder adds whichever [`Family`] the model was configured
//! with; for the length-aware families the rows are built from each example's
//! declared length, so the same position carries a different signal under a
//! different length constraint.
//!
//! Examples are processed one at a time at their true lengths (no padding
//! inside the computation), which makes pad masking hold by construction.
//! A training step runs the per-example forward/backward passes in parallel
//! and then accumulates gradients in example order, so results do not depend
//! on thread scheduling.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{family_table, pe_table, Family};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::optim::Adam;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;
use crate::vocab::{SourceVocab, TargetVocab};

const LN_EPS: f32 = 1e-5;
const MASK_NEG: f32 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Model width; must be even and divisible by `heads`.
    pub d: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    /// Feed-forward inner width.
    pub ffn: usize,
    pub dropout: f32,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Decoder positional encoding family.
    pub family: Family,
    /// Sinusoid base shared by the encoder table and the LDPE rows.
    pub base: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % 2 != 0 {
            return Err(Error::Config(format!(
                "model width must be even, got {}",
                self.d
            )));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "model width {} must be divisible by heads {}",
                self.d, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if self.src_vocab == 0 || self.tgt_vocab == 0 {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        Ok(())
    }
}

/// One training/evaluation batch, stored unpadded per example.
#[derive(Debug, Clone)]
pub struct Batch {
    pub src: Vec<Vec<u32>>,
    /// BOS-shifted decoder inputs: BOS + target characters.
    pub tgt_in: Vec<Vec<u32>>,
    /// Decoder outputs: target characters + EOS.
    pub tgt_out: Vec<Vec<u32>>,
    /// Declared length per example (characters, excluding EOS).
    pub lens: Vec<u32>,
}

impl Batch {
    pub fn from_pairs(
        pairs: &[crate::data::ExamplePair],
        src_vocab: &SourceVocab,
        tgt_vocab: &TargetVocab,
    ) -> Self {
        let mut batch = Batch {
            src: Vec::with_capacity(pairs.len()),
            tgt_in: Vec::with_capacity(pairs.len()),
            tgt_out: Vec::with_capacity(pairs.len()),
            lens: Vec::with_capacity(pairs.len()),
        };
        for p in pairs {
            let src = src_vocab.encode(&p.source);
            let tgt_out = tgt_vocab.encode(&p.target); // chars + EOS
            let mut tgt_in = Vec::with_capacity(tgt_out.len());
            tgt_in.push(TargetVocab::BOS);
            tgt_in.extend_from_slice(&tgt_out[..tgt_out.len() - 1]);
            batch.lens.push((tgt_out.len() - 1) as u32);
            batch.src.push(src);
            batch.tgt_in.push(tgt_in);
            batch.tgt_out.push(tgt_out);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Padded source id matrix plus its pad mask (true = real token), the
    /// conventional batched view of this data.
    pub fn padded_source(&self, pad: u32) -> (Vec<Vec<u32>>, Vec<Vec<bool>>) {
        let width = self.src.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(self.len());
        let mut mask = Vec::with_capacity(self.len());
        for s in &self.src {
            let mut row = s.clone();
            let mut m = vec![true; s.len()];
            row.resize(width, pad);
            m.resize(width, false);
            ids.push(row);
            mask.push(m);
        }
        (ids, mask)
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone)]
pub struct Parameters {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl Parameters {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    fn push(&mut self, name: String, t: Tensor) {
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t.with_grad());
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(Tensor::numel).collect()
    }
}

pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
    /// Cached decoder encoding tables keyed by length constraint.
    dec_table_cache: Mutex<BTreeMap<u32, Vec<f32>>>,
    /// Cached encoder PE table.
    enc_table_cache: Mutex<Vec<f32>>,
}

/// Builds all parameter tensors with a seeded scheme: Xavier-uniform
/// matrices, normal embeddings scaled to unit variance after the sqrt(d)
/// lookup scale, ones/zeros for layer norms and biases.
pub fn init_model(config: ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let mut params = Parameters::new();
    let d = config.d;

    let embed = |params: &mut Parameters, name: &str, rows: usize, rng: &mut SplitMix64| {
        let std = 1.0 / (d as f64).sqrt();
        let data: Vec<f32> = (0..rows * d)
            .map(|_| (rng.next_normal() * std) as f32)
            .collect();
        params.push(name.into(), Tensor::new(vec![rows, d], data).unwrap());
    };
    embed(&mut params, "src_embed", config.src_vocab, &mut rng);
    embed(&mut params, "tgt_embed", config.tgt_vocab, &mut rng);

    let xavier = |rng: &mut SplitMix64, rows: usize, cols: usize| -> Tensor {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| rng.next_uniform_sym(a) as f32)
            .collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    };
    let linear =
        |params: &mut Parameters, prefix: &str, rows: usize, cols: usize, rng: &mut SplitMix64| {
            params.push(format!("{prefix}.w"), xavier(rng, rows, cols));
            params.push(format!("{prefix}.b"), Tensor::zeros(vec![cols]));
        };
    let norm = |params: &mut Parameters, prefix: &str| {
        params.push(
            format!("{prefix}.g"),
            Tensor::new(vec![d], vec![1.0; d]).unwrap(),
        );
        params.push(format!("{prefix}.b"), Tensor::zeros(vec![d]));
    };
    let attn = |params: &mut Parameters, prefix: &str, rng: &mut SplitMix64| {
        for part in ["q", "k", "v", "o"] {
            params.push(format!("{prefix}.w{part}"), xavier(rng, d, d));
            params.push(format!("{prefix}.b{part}"), Tensor::zeros(vec![d]));
        }
    };

    for i in 0..config.enc_layers {
        attn(&mut params, &format!("enc{i}.attn"), &mut rng);
        norm(&mut params, &format!("enc{i}.ln1"));
        linear(
            &mut params,
            &format!("enc{i}.ffn1"),
            d,
            config.ffn,
            &mut rng,
        );
        linear(
            &mut params,
            &format!("enc{i}.ffn2"),
            config.ffn,
            d,
            &mut rng,
        );
        norm(&mut params, &format!("enc{i}.ln2"));
    }
    for i in 0..config.dec_layers {
        attn(&mut params, &format!("dec{i}.self"), &mut rng);
        norm(&mut params, &format!("dec{i}.ln1"));
        attn(&mut params, &format!("dec{i}.cross"), &mut rng);
        norm(&mut params, &format!("dec{i}.ln2"));
        linear(
            &mut params,
            &format!("dec{i}.ffn1"),
            d,
            config.ffn,
            &mut rng,
        );
        linear(
            &mut params,
            &format!("dec{i}.ffn2"),
            config.ffn,
            d,
            &mut rng,
        );
        norm(&mut params, &format!("dec{i}.ln3"));
    }
    linear(&mut params, "out", d, config.tgt_vocab, &mut rng);

    Ok(Model {
        config,
        params,
        dec_table_cache: Mutex::new(BTreeMap::new()),
        enc_table_cache: Mutex::new(Vec::new()),
    })
}

/// Handles to every parameter leaf inside one example graph.
struct GraphParams {
    ids: Vec<NodeId>,
    by_index: BTreeMap<String, usize>,
}

impl GraphParams {
    fn id(&self, name: &str) -> NodeId {
        self.ids[*self
            .by_index
            .get(name)
            .unwrap_or_else(|| panic!("no parameter {name}"))]
    }
}

enum Mode {
    Train { dropout_rng: SplitMix64 },
    Eval,
}

impl Model {
    pub fn head_dim(&self) -> usize {
        self.config.d / self.config.heads
    }

    /// Rows 0..=max_pos of the encoder's absolute encoding, f32.
    fn encoder_rows(&self, max_pos: usize) -> Vec<f32> {
        let d = self.config.d;
        let mut cache = self.enc_table_cache.lock().unwrap();
        if cache.len() < (max_pos + 1) * d {
            *cache = pe_table(d, self.config.base, max_pos.max(63))
                .expect("config validated")
                .values;
        }
        cache[..(max_pos + 1) * d].to_vec()
    }

    /// Rows 0..=max_pos of the decoder's family encoding for one length
    /// constraint. Tables are cached per distinct length.
    fn decoder_rows(&self, len: u32, max_pos: usize) -> Vec<f32> {
        let d = self.config.d;
        let mut cache = self.dec_table_cache.lock().unwrap();
        let entry = cache.entry(len).or_default();
        if entry.len() < (max_pos + 1) * d {
            *entry = family_table(
                self.config.family,
                d,
                self.config.base,
                Some(len),
                max_pos.max(2 * len as usize + 15),
            )
            .expect("config validated")
            .values;
        }
        entry[..(max_pos + 1) * d].to_vec()
    }

    fn insert_params(&self, g: &mut Graph<f32>, trainable: bool) -> GraphParams {
        self.insert_params_where(g, trainable, |_| true)
    }

    /// Inserts only the parameters `keep` accepts; decoder-only graphs skip
    /// the encoder-side tensors entirely.
    fn insert_params_where(
        &self,
        g: &mut Graph<f32>,
        trainable: bool,
        keep: impl Fn(&str) -> bool,
    ) -> GraphParams {
        let mut ids = Vec::new();
        let mut by_index = BTreeMap::new();
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            if !keep(name) {
                continue;
            }
            let id = g.leaf(t.data.clone(), t.shape.clone(), trainable);
            by_index.insert(name.clone(), ids.len());
            ids.push(id);
        }
        GraphParams { ids, by_index }
    }

    fn dropout(&self, g: &mut Graph<f32>, x: NodeId, mode: &mut Mode) -> NodeId {
        let p = self.config.dropout;
        match mode {
            Mode::Train { dropout_rng } if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f32> = (0..g.value(x).len())
                    .map(|_| {
                        if dropout_rng.next_f64() < p as f64 {
                            0.0
                        } else {
                            keep
                        }
                    })
                    .collect();
                let shape = g.shape(x).to_vec();
                let m = g.leaf(mask, shape, false);
                g.mul(x, m).expect("mask shape matches")
            }
            _ => x,
        }
    }

    /// Multi-head attention: queries from `x`, keys/values from `kv`.
    fn attention(
        &self,
        g: &mut Graph<f32>,
        p: &GraphParams,
        prefix: &str,
        x: NodeId,
        kv: NodeId,
        causal: bool,
    ) -> Result<NodeId> {
        let heads = self.config.heads;
        let dh = self.head_dim();
        let q = g.matmul(x, p.id(&format!("{prefix}.wq")))?;
        let q = g.add_row(q, p.id(&format!("{prefix}.bq")))?;
        let k = g.matmul(kv, p.id(&format!("{prefix}.wk")))?;
        let k = g.add_row(k, p.id(&format!("{prefix}.bk")))?;
        let v = g.matmul(kv, p.id(&format!("{prefix}.wv")))?;
        let v = g.add_row(v, p.id(&format!("{prefix}.bv")))?;

        let t_rows = g.shape(q)[0];
        let s_rows = g.shape(k)[0];
        let mask = if causal {
            let mut m = vec![0.0f32; t_rows * s_rows];
            for t in 0..t_rows {
                for s in 0..s_rows {
                    if s > t {
                        m[t * s_rows + s] = MASK_NEG;
                    }
                }
            }
            Some(g.leaf(m, vec![t_rows, s_rows], false))
        } else {
            None
        };

        let scale = 1.0 / (dh as f32).sqrt();
        let mut ctx = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.scale(scores, scale);
            let scores = match mask {
                Some(m) => g.add(scores, m)?,
                None => scores,
            };
            let attn = g.softmax(scores, 1)?;
            ctx.push(g.matmul(attn, vh)?);
        }
        let merged = g.concat_cols(&ctx)?;
        let out = g.matmul(merged, p.id(&format!("{prefix}.wo")))?;
        g.add_row(out, p.id(&format!("{prefix}.bo")))
    }

    /// Post-norm residual wrapper: LN(x + dropout(sub)).
    fn residual(
        &self,
        g: &mut Graph<f32>,
        p: &GraphParams,
        ln_prefix: &str,
        x: NodeId,
        sub: NodeId,
        mode: &mut Mode,
    ) -> Result<NodeId> {
        let sub = self.dropout(g, sub, mode);
        let added = g.add(x, sub)?;
        g.layer_norm(
            added,
            p.id(&format!("{ln_prefix}.g")),
            p.id(&format!("{ln_prefix}.b")),
            LN_EPS,
        )
    }

    fn feed_forward(
        &self,
        g: &mut Graph<f32>,
        p: &GraphParams,
        prefix: &str,
        x: NodeId,
    ) -> Result<NodeId> {
        let h = g.matmul(x, p.id(&format!("{prefix}1.w")))?;
        let h = g.add_row(h, p.id(&format!("{prefix}1.b")))?;
        let h = g.relu(h);
        let h = g.matmul(h, p.id(&format!("{prefix}2.w")))?;
        g.add_row(h, p.id(&format!("{prefix}2.b")))
    }

    fn embed_with_rows(
        &self,
        g: &mut Graph<f32>,
        table: NodeId,
        ids: &[u32],
        rows: Vec<f32>,
        mode: &mut Mode,
    ) -> Result<NodeId> {
        let d = self.config.d;
        let x = g.embedding(table, ids)?;
        let x = g.scale(x, (d as f32).sqrt());
        let enc = g.leaf(rows, vec![ids.len(), d], false);
        let x = g.add(x, enc)?;
        Ok(self.dropout(g, x, mode))
    }

    fn encoder_stack(
        &self,
        g: &mut Graph<f32>,
        p: &GraphParams,
        src: &[u32],
        mode: &mut Mode,
    ) -> Result<NodeId> {
        let rows = {
            let all = self.encoder_rows(src.len().saturating_sub(1));
            all[..src.len() * self.config.d].to_vec()
        };
        let mut x = self.embed_with_rows(g, p.id("src_embed"), src, rows, mode)?;
        for i in 0..self.config.enc_layers {
            let attn = self.attention(g, p, &format!("enc{i}.attn"), x, x, false)?;
            x = self.residual(g, p, &format!("enc{i}.ln1"), x, attn, mode)?;
            let ff = self.feed_forward(g, p, &format!("enc{i}.ffn"), x)?;
            x = self.residual(g, p, &format!("enc{i}.ln2"), x, ff, mode)?;
        }
        Ok(x)
    }

    fn decoder_stack(
        &self,
        g: &mut Graph<f32>,
        p: &GraphParams,
        enc_out: NodeId,
        tgt_in: &[u32],
        len: u32,
        mode: &mut Mode,
    ) -> Result<NodeId> {
        let rows = {
            let all = self.decoder_rows(len, tgt_in.len().saturating_sub(1));
            all[..tgt_in.len() * self.config.d].to_vec()
        };
        let mut x = self.embed_with_rows(g, p.id("tgt_embed"), tgt_in, rows, mode)?;
        for i in 0..self.config.dec_layers {
            let self_attn = self.attention(g, p, &format!("dec{i}.self"), x, x, true)?;
            x = self.residual(g, p, &format!("dec{i}.ln1"), x, self_attn, mode)?;
            let cross = self.attention(g, p, &format!("dec{i}.cross"), x, enc_out, false)?;
            x = self.residual(g, p, &format!("dec{i}.ln2"), x, cross, mode)?;
            let ff = self.feed_forward(g, p, &format!("dec{i}.ffn"), x)?;
            x = self.residual(g, p, &format!("dec{i}.ln3"), x, ff, mode)?;
        }
        let logits = g.matmul(x, p.id("out.w"))?;
        g.add_row(logits, p.id("out.b"))
    }

    fn example_logits(
        &self,
        g: &mut Graph<f32>,
        p: &GraphParams,
        src: &[u32],
        tgt_in: &[u32],
        len: u32,
        mode: &mut Mode,
    ) -> Result<NodeId> {
        let enc = self.encoder_stack(g, p, src, mode)?;
        self.decoder_stack(g, p, enc, tgt_in, len, mode)
    }

    /// Encoder output for one source, as a value tensor. Used by decoding,
    /// where the encoder runs once per request.
    pub fn encode(&self, src: &[u32]) -> Result<Tensor> {
        let mut g = Graph::<f32>::new();
        let p =
            self.insert_params_where(&mut g, false, |n| n == "src_embed" || n.starts_with("enc"));
        let mut mode = Mode::Eval;
        let enc = self.encoder_stack(&mut g, &p, src, &mut mode)?;
        Ok(g.to_tensor(enc))
    }

    /// Full decoder logits (one row per target input position) against a
    /// precomputed encoder output.
    pub fn decoder_logits(&self, enc_out: &Tensor, tgt_in: &[u32], len: u32) -> Result<Tensor> {
        let mut g = Graph::<f32>::new();
        let p = self.insert_params_where(&mut g, false, |n| {
            n == "tgt_embed" || n.starts_with("dec") || n.starts_with("out")
        });
        let mut mode = Mode::Eval;
        let enc = g.leaf_tensor(enc_out);
        let logits = self.decoder_stack(&mut g, &p, enc, tgt_in, len, &mut mode)?;
        Ok(g.to_tensor(logits))
    }

    /// Teacher-forced logits for a whole batch, padded to the widest target:
    /// shape [B, T_max, V], pad rows zero.
    pub fn forward(&self, batch: &Batch) -> Result<Tensor> {
        let t_max = batch.tgt_in.iter().map(Vec::len).max().unwrap_or(0);
        let v = self.config.tgt_vocab;
        let per_example: Vec<Result<Tensor>> = batch
            .src
            .par_iter()
            .zip(&batch.tgt_in)
            .zip(&batch.lens)
            .map(|((src, tgt_in), &len)| {
                let mut g = Graph::<f32>::new();
                let p = self.insert_params(&mut g, false);
                let mut mode = Mode::Eval;
                let logits = self.example_logits(&mut g, &p, src, tgt_in, len, &mut mode)?;
                Ok(g.to_tensor(logits))
            })
            .collect();
        let mut out = Tensor::zeros(vec![batch.len(), t_max, v]);
        for (e, r) in per_example.into_iter().enumerate() {
            let t = r?;
            let rows = t.shape[0];
            out.data[e * t_max * v..e * t_max * v + rows * v].copy_from_slice(&t.data);
        }
        Ok(out)
    }

    /// Teacher-forced mean NLL over all target positions of a batch, no
    /// dropout, no update.
    pub fn batch_nll(&self, batch: &Batch) -> Result<f64> {
        let losses: Vec<Result<(f64, usize)>> = batch
            .src
            .par_iter()
            .zip(&batch.tgt_in)
            .zip(&batch.tgt_out)
            .zip(&batch.lens)
            .map(|(((src, tgt_in), tgt_out), &len)| {
                let mut g = Graph::<f32>::new();
                let p = self.insert_params(&mut g, false);
                let mut mode = Mode::Eval;
                let logits = self.example_logits(&mut g, &p, src, tgt_in, len, &mut mode)?;
                let loss = g.cross_entropy(logits, tgt_out, TargetVocab::PAD)?;
                Ok((g.value(loss)[0] as f64, tgt_out.len()))
            })
            .collect();
        let mut sum = 0.0;
        let mut count = 0usize;
        for l in losses {
            let (mean, n) = l?;
            sum += mean * n as f64;
            count += n;
        }
        Ok(sum / count as f64)
    }
}

/// Per-example gradient set, keyed by parameter index.
type GradSet = Vec<Vec<f32>>;

/// One optimization step: forward + backward over every example (in
/// parallel, accumulated in example order), then one Adam update.
/// Returns the pre-update batch loss.
pub fn train_step(model: &mut Model, batch: &Batch, opt: &mut Adam, step: u64) -> Result<f32> {
    if batch.is_empty() {
        return Err(Error::Config("cannot train on an empty batch".into()));
    }
    let total_tokens: usize = batch.tgt_out.iter().map(Vec::len).sum();

    let results: Vec<Result<(f32, GradSet)>> = batch
        .src
        .par_iter()
        .zip(&batch.tgt_in)
        .zip(&batch.tgt_out)
        .zip(&batch.lens)
        .enumerate()
        .map(|(idx, (((src, tgt_in), tgt_out), &len))| {
            let mut g = Graph::<f32>::new();
            let p = model.insert_params(&mut g, true);
            let dropout_rng = SplitMix64::derive(
                model.config.seed ^ 0x64726F70, // distinct stream for dropout
                step.wrapping_mul(1_000_003).wrapping_add(idx as u64),
            );
            let mut mode = Mode::Train { dropout_rng };
            let logits = model.example_logits(&mut g, &p, src, tgt_in, len, &mut mode)?;
            let loss = g.cross_entropy(logits, tgt_out, TargetVocab::PAD)?;
            // This example's share of the batch-mean loss.
            let weight = tgt_out.len() as f32 / total_tokens as f32;
            g.backward_seeded(loss, weight)?;
            let grads: GradSet = p
                .ids
                .iter()
                .map(|&id| g.grad(id).unwrap().to_vec())
                .collect();
            Ok((g.value(loss)[0] * weight, grads))
        })
        .collect();

    let sizes = model.params.sizes();
    let mut acc: GradSet = sizes.iter().map(|&n| vec![0.0f32; n]).collect();
    let mut loss = 0.0f32;
    for r in results {
        let (l, grads) = r?;
        loss += l;
        for (a, g) in acc.iter_mut().zip(&grads) {
            for (av, gv) in a.iter_mut().zip(g) {
                *av += gv;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }

    let mut data: Vec<Vec<f32>> = model
        .params
        .tensors
        .iter()
        .map(|t| t.data.clone())
        .collect();
    opt.step(&mut data, &acc, &model.params.names)?;
    for (t, d) in model.params.tensors.iter_mut().zip(data) {
        t.data = d;
    }
    Ok(loss)
}

// ── checkpointing ────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    params: BTreeMap<String, Tensor>,
}

const CHECKPOINT_VERSION: u32 = 1;

/// Writes config + parameters as deterministic JSON. Loading reproduces
/// logits bitwise on the same platform.
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let params: BTreeMap<String, Tensor> = model
        .params
        .names
        .iter()
        .cloned()
        .zip(model.params.tensors.iter().cloned())
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        params,
    };
    let json = serde_json::to_string(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let mut model = init_model(file.config)?;
    if file.params.len() != model.params.names.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} parameter tensors, model needs {}",
            file.params.len(),
            model.params.names.len()
        )));
    }
    for (name, tensor) in file.params {
        let Some(&idx) = model.params.index.get(&name) else {
            return Err(Error::Checkpoint(format!(
                "unknown parameter `{name}` in checkpoint"
            )));
        };
        if model.params.tensors[idx].shape != tensor.shape {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` has shape {:?}, expected {:?}",
                tensor.shape, model.params.tensors[idx].shape
            )));
        }
        model.params.tensors[idx] = tensor.with_grad();
    }
    Ok(model)
}
