//! Desk-scale toolkit for continual-pretraining language adaptation.
//!
//! The pipeline has four steps, each a module of this crate:
//!
//! 1. [`corpus`] — refine a raw document collection (random selection,
//!    rule filters, MinHash near-duplicate removal, perplexity filtering).
//! 2. [`tokenizer`] — train a scored unigram subword vocabulary on the
//!    adaptation corpus, refine it, and merge it with a base tokenizer
//!    into a hybrid tokenizer; compute RIC/REC/TR quality metrics.
//! 3. [`embed_init`] — extend a pretrained model's embedding and LM-head
//!    matrices to the merged vocabulary under five initialization methods.
//! 4. [`train`] — staged freeze-schedule training of a toy decoder-only
//!    CLM ([`model`]) with hand-written gradients, AdamW, and LoRA.
//!
//! Everything is deterministic given a seed; all collections iterate in
//! a stable order so reports and artifacts are byte-reproducible.

pub mod corpus;
pub mod embed_init;
pub mod error;
pub mod model;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
