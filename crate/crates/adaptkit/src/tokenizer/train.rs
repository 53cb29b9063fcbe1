use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SubwordModel;
use crate::corpus::Corpus;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnigramTrainerConfig {
    pub target_vocab: usize,
    /// Seed vocabulary size as a multiple of the target.
    pub seed_vocab_multiplier: f64,
    /// Fraction of prunable pieces removed per pruning round.
    pub prune_fraction_per_round: f64,
    /// Longest candidate substring, in characters.
    pub max_piece_chars: usize,
    pub byte_fallback: bool,
    /// EM sub-iterations between pruning rounds.
    pub em_iters: usize,
}

impl Default for UnigramTrainerConfig {
    fn default() -> Self {
        UnigramTrainerConfig {
            target_vocab: 1000,
            seed_vocab_multiplier: 4.0,
            prune_fraction_per_round: 0.2,
            max_piece_chars: 8,
            byte_fallback: true,
            em_iters: 2,
        }
    }
}

/// Working vocabulary during training: piece -> (score, expected count).
type WorkingVocab = BTreeMap<String, (f64, f64)>;

/// Viterbi segmentation over the working vocabulary. Single-character
/// coverage pieces guarantee a path exists.
fn segment<'a>(word: &str, vocab: &'a WorkingVocab, max_len: usize) -> Vec<&'a str> {
    let offsets: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n = offsets.len() - 1;
    let mut best = vec![f64::NEG_INFINITY; n + 1];
    let mut back: Vec<Option<(usize, &str)>> = vec![None; n + 1];
    best[0] = 0.0;
    for i in 0..n {
        if best[i] == f64::NEG_INFINITY {
            continue;
        }
        for len in 1..=max_len.min(n - i) {
            let sub = &word[offsets[i]..offsets[i + len]];
            if let Some((key, (score, _))) = vocab.get_key_value(sub) {
                let cand = best[i] + score;
                if cand > best[i + len] {
                    best[i + len] = cand;
                    back[i + len] = Some((i, key.as_str()));
                }
            }
        }
    }
    let mut rev = Vec::new();
    let mut pos = n;
    while pos > 0 {
        let (prev, piece) = back[pos].expect("coverage pieces guarantee a path");
        rev.push(piece);
        pos = prev;
    }
    rev.reverse();
    rev
}

fn em_iteration(words: &BTreeMap<String, u64>, vocab: &mut WorkingVocab, max_len: usize) {
    // E-step: Viterbi expected piece counts.
    for (_, count) in vocab.values_mut() {
        *count = 0.0;
    }
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for (word, &wc) in words {
        for piece in segment(word, vocab, max_len) {
            *counts.entry(piece.to_string()).or_insert(0.0) += wc as f64;
        }
    }
    // M-step: renormalize scores to log-probabilities. A small floor
    // keeps zero-count coverage pieces finite.
    let floor = 1e-6;
    let total: f64 = counts.values().sum::<f64>() + floor * vocab.len() as f64;
    for (piece, (score, count)) in vocab.iter_mut() {
        let c = counts.get(piece).copied().unwrap_or(0.0);
        *count = c;
        *score = ((c + floor) / total).ln();
    }
}

/// Train a scored unigram vocabulary: seed with frequent substrings,
/// iterate EM, and prune the lowest-utility pieces each round until the
/// target size is reached. Single-character coverage pieces are never
/// pruned.
pub fn train_unigram(corpus: &Corpus, cfg: &UnigramTrainerConfig) -> Result<SubwordModel> {
    if corpus.is_empty() {
        return Err(Error::data("tokenizer training corpus is empty"));
    }
    if cfg.max_piece_chars < 1 || cfg.em_iters < 1 {
        return Err(Error::config("max_piece_chars and em_iters must be >= 1"));
    }
    if !(cfg.prune_fraction_per_round > 0.0 && cfg.prune_fraction_per_round < 1.0) {
        return Err(Error::config("prune_fraction_per_round must be in (0, 1)"));
    }

    // Character coverage from the full text, word counts from
    // whitespace-separated tokens.
    let mut chars: BTreeMap<char, u64> = BTreeMap::new();
    let mut words: BTreeMap<String, u64> = BTreeMap::new();
    for doc in corpus.iter() {
        for c in doc.text.chars() {
            *chars.entry(c).or_insert(0) += 1;
        }
        for w in doc.text.split_whitespace() {
            *words.entry(w.to_string()).or_insert(0) += 1;
        }
    }

    let floor_size = 4 + if cfg.byte_fallback { 256 } else { 0 } + chars.len();
    if cfg.target_vocab < floor_size {
        return Err(Error::config(format!(
            "target_vocab {} is below the coverage floor {} (specials + bytes + {} characters)",
            cfg.target_vocab,
            floor_size,
            chars.len()
        )));
    }
    let target_regular = cfg.target_vocab - floor_size + chars.len();

    // Seed candidates: most frequent word substrings of length >= 2.
    let mut candidates: BTreeMap<String, u64> = BTreeMap::new();
    for (word, &wc) in &words {
        let cs: Vec<char> = word.chars().collect();
        for start in 0..cs.len() {
            for len in 2..=cfg.max_piece_chars.min(cs.len() - start) {
                let sub: String = cs[start..start + len].iter().collect();
                *candidates.entry(sub).or_insert(0) += wc;
            }
        }
    }
    let seed_budget = ((cfg.seed_vocab_multiplier * cfg.target_vocab as f64) as usize)
        .saturating_sub(floor_size);
    let mut ranked: Vec<(&String, &u64)> = candidates.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(seed_budget);

    let mut vocab: WorkingVocab = BTreeMap::new();
    let total_seed: f64 =
        chars.values().sum::<u64>() as f64 + ranked.iter().map(|(_, &c)| c as f64).sum::<f64>();
    for (c, &freq) in &chars {
        vocab.insert(c.to_string(), ((freq as f64 / total_seed).ln(), 0.0));
    }
    for (piece, &freq) in ranked {
        vocab.insert(piece.clone(), ((freq as f64 / total_seed).ln(), 0.0));
    }

    let protected: BTreeSet<String> = chars.keys().map(|c| c.to_string()).collect();
    loop {
        for _ in 0..cfg.em_iters {
            em_iteration(&words, &mut vocab, cfg.max_piece_chars);
        }
        if vocab.len() <= target_regular {
            break;
        }
        // Prune the lowest-expected-count multi-character pieces.
        let mut prunable: Vec<(String, f64)> = vocab
            .iter()
            .filter(|(p, _)| !protected.contains(*p))
            .map(|(p, &(_, count))| (p.clone(), count))
            .collect();
        let excess = vocab.len() - target_regular;
        let round = ((prunable.len() as f64 * cfg.prune_fraction_per_round).ceil() as usize)
            .clamp(1, excess);
        prunable.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        for (piece, _) in prunable.into_iter().take(round) {
            vocab.remove(&piece);
        }
    }

    let mut pieces: Vec<(String, f64)> = vocab
        .into_iter()
        .map(|(p, (score, _))| (p, score))
        .collect();
    pieces.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    SubwordModel::from_pieces(pieces, cfg.byte_fallback)
}
