//! Length-controlled sequence generation on CPU.
//!
//! The crate trains a small transformer encoder-decoder whose decoder input
//! can be conditioned on a desired output length through length-aware
//! sinusoidal positional encodings, then decodes with beam search at a
//! requested length and measures how precisely that length was hit.
//!
//! Modules:
//! - [`tensor`], [`graph`], [`optim`]: dense f32 tensors, a reverse-mode
//!   autodiff tape, and Adam.
//! - [`encoding`]: absolute, length-difference, and length-ratio sinusoidal
//!   encoding tables.
//! - [`vocab`]: subword (BPE) source vocabulary and character-level target
//!   vocabulary.
//! - [`model`]: the transformer encoder-decoder and its training step.
//! - [`decode`]: length-conditioned beam search and source-overlap re-ranking.
//! - [`eval`]: recall-oriented ROUGE, length variance, histograms, byte
//!   truncation.
//! - [`data`]: synthetic length-constrained tasks, JSONL corpora, and
//!   length-exclusion filtering.

pub mod data;
pub mod decode;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
pub use tensor::Tensor;
