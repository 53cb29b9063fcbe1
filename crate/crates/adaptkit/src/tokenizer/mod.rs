//! Scored subword vocabularies: unigram training, refinement, hybrid
//! merging, Viterbi segmentation, and tokenizer-quality metrics.

mod merge;
mod metrics;
mod model;
mod refine;
mod train;

pub use merge::merge;
pub use metrics::{
    complexity_ratios, token_histogram, token_ratio, vocab_sweep, ComplexityReport, SweepMode,
    SweepReport, SweepRow, TokenRatioReport,
};
pub use model::{Piece, PieceKind, SubwordModel, BOS_ID, EOS_ID, PAD_ID, SPECIAL_PIECES, UNK_ID};
pub use refine::{refine_pieces, PieceFilterRules, RefineReport};
pub use train::{train_unigram, UnigramTrainerConfig};
