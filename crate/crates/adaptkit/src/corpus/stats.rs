use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::tokenizer::SubwordModel;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub docs: usize,
    pub total_bytes: usize,
    /// Present when a tokenizer was supplied.
    pub total_tokens: Option<usize>,
    /// Fixed-length samples at the given context length, remainder dropped.
    pub samples: Option<usize>,
    pub context: Option<usize>,
}

/// Document/byte counts, plus token and packed-sample counts when a
/// tokenizer is given.
pub fn corpus_stats(
    corpus: &Corpus,
    tokenizer: Option<&SubwordModel>,
    context: usize,
) -> CorpusStats {
    let mut stats = CorpusStats {
        docs: corpus.len(),
        total_bytes: corpus.total_bytes(),
        ..Default::default()
    };
    if let Some(tok) = tokenizer {
        let total: usize = corpus.iter().map(|d| tok.encode(&d.text).len()).sum();
        stats.total_tokens = Some(total);
        stats.samples = Some(total.checked_div(context).unwrap_or(0));
        stats.context = Some(context);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::tokenizer::SubwordModel;

    #[test]
    fn empty_corpus_all_zero() {
        let s = corpus_stats(&Corpus::default(), None, 4096);
        assert_eq!(s, CorpusStats { docs: 0, ..Default::default() });
    }

    #[test]
    fn sample_count_is_floor_of_tokens_over_context() {
        // char-level tokenizer: every char is a token
        let model = SubwordModel::from_pieces(
            vec![("a".into(), -1.0), ("b".into(), -1.0)],
            true,
        )
        .unwrap();
        let c: Corpus = vec![
            Document::new("x", "ab".repeat(10), "t"), // 20 tokens
            Document::new("y", "a".repeat(7), "t"),   // 7 tokens
        ]
        .into_iter()
        .collect();
        let s = corpus_stats(&c, Some(&model), 8);
        assert_eq!(s.total_tokens, Some(27));
        assert_eq!(s.samples, Some(3));
    }
}
