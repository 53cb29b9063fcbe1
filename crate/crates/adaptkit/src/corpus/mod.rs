//! Corpus refinement: random selection, rule filters, near-duplicate
//! removal, and perplexity-based quality filtering.
//!
//! Every stage maps a [`Corpus`] to a smaller (or equal) corpus plus a
//! report. Stages preserve the relative order of surviving documents, so
//! pipelines are deterministic end to end.

mod dedup;
mod ngram;
mod rules;
mod select;
mod stats;

pub use dedup::{dedup, exact_jaccard, shingle_set, Cluster, ClusterReport, DedupConfig};
pub use ngram::{
    perplexity, ppl_filter, train_ppl_lm, FilterMode, NgramLm, PerplexityScore, PplReport,
};
pub use rules::{rule_filter, Rule, RuleReport, Script};
pub use select::random_select;
pub use stats::{corpus_stats, CorpusStats};

use serde::{Deserialize, Serialize};

/// One unit of corpus processing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// Stable unique id within a corpus.
    pub id: String,
    /// UTF-8 text, non-empty after ingestion normalization.
    pub text: String,
    /// Source label.
    pub source: String,
    /// Encoded byte length of `text`.
    pub byte_len: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: impl Into<String>) -> Self {
        let text = text.into();
        let byte_len = text.len();
        Document {
            id: id.into(),
            text,
            source: source.into(),
            byte_len,
        }
    }
}

/// An ordered document collection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub docs: Vec<Document>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Self {
        Corpus { docs }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn total_bytes(&self) -> usize {
        self.docs.iter().map(|d| d.byte_len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    /// Keep the documents whose id is in `keep`, preserving order.
    pub fn retain_ids(&self, keep: &std::collections::BTreeSet<String>) -> Corpus {
        Corpus {
            docs: self
                .docs
                .iter()
                .filter(|d| keep.contains(&d.id))
                .cloned()
                .collect(),
        }
    }
}

impl FromIterator<Document> for Corpus {
    fn from_iter<T: IntoIterator<Item = Document>>(iter: T) -> Self {
        Corpus {
            docs: iter.into_iter().collect(),
        }
    }
}
