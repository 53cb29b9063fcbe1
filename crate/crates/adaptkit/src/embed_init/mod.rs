//! Extending pretrained embedding and LM-head matrices to a merged
//! vocabulary under the five initialization methods.

mod extend;
mod matrix;

pub use extend::{decompose_piece, extend_vocab, InitMethod, InitReport, InitSpec, VocabPartition};
pub use matrix::EmbeddingMatrix;
