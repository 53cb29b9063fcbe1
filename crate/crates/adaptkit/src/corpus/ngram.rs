use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, Document};
use crate::{Error, Result};

/// Unit ids: 0 is the begin-of-text sentinel, 1 the unknown bucket,
/// characters follow in sorted order.
const BOS: u32 = 0;
const UNK: u32 = 1;

/// Character-level add-k n-gram language model.
///
/// `P(u | ctx) = (count(ctx·u) + k) / (count(ctx) + k·V)`, which is a
/// proper distribution over the fixed `V`-unit alphabet (characters seen
/// in training, plus the sentinel and the unknown bucket) for any `k > 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NgramLm {
    pub order: usize,
    pub k: f64,
    pub vocab_size: usize,
    units: BTreeMap<char, u32>,
    contexts: BTreeMap<Vec<u32>, ContextCounts>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u32, u64>,
}

impl NgramLm {
    /// A uniform model over `v` units: empty counts, so every unit gets
    /// probability `k/(k·v) = 1/v`.
    pub fn uniform(v: usize) -> NgramLm {
        NgramLm {
            order: 1,
            k: 1.0,
            vocab_size: v,
            units: BTreeMap::new(),
            contexts: BTreeMap::new(),
        }
    }

    fn unit_id(&self, c: char) -> u32 {
        self.units.get(&c).copied().unwrap_or(UNK)
    }

    /// `ln P(unit | context)`.
    fn log_prob(&self, context: &[u32], unit: u32) -> f64 {
        let (count, total) = match self.contexts.get(context) {
            Some(ctx) => (ctx.next.get(&unit).copied().unwrap_or(0), ctx.total),
            None => (0, 0),
        };
        let v = self.vocab_size as f64;
        ((count as f64 + self.k) / (total as f64 + self.k * v)).ln()
    }

    /// Probability of `unit` given a character context; exposed for
    /// oracle tests.
    pub fn prob_chars(&self, context: &[char], unit: char) -> f64 {
        let ctx: Vec<u32> = context.iter().map(|&c| self.unit_id(c)).collect();
        self.log_prob(&ctx, self.unit_id(unit)).exp()
    }
}

/// Train a character-level add-k n-gram LM on a trusted corpus.
pub fn train_ppl_lm(trusted: &Corpus, order: usize, k: f64) -> Result<NgramLm> {
    if order < 1 {
        return Err(Error::config("n-gram order must be >= 1"));
    }
    if trusted.is_empty() {
        return Err(Error::data("trusted corpus for the perplexity LM is empty"));
    }
    if k < 0.0 {
        return Err(Error::config("smoothing k must be >= 0"));
    }

    let mut units: BTreeMap<char, u32> = BTreeMap::new();
    for doc in trusted.iter() {
        for c in doc.text.chars() {
            units.entry(c).or_insert(0);
        }
    }
    for (i, id) in units.values_mut().enumerate() {
        *id = 2 + i as u32;
    }
    let vocab_size = units.len() + 2;

    let mut contexts: BTreeMap<Vec<u32>, ContextCounts> = BTreeMap::new();
    for doc in trusted.iter() {
        let ids: Vec<u32> = doc.text.chars().map(|c| units[&c]).collect();
        let mut padded = vec![BOS; order - 1];
        padded.extend(ids);
        for t in order - 1..padded.len() {
            let ctx = padded[t + 1 - order..t].to_vec();
            let entry = contexts.entry(ctx).or_default();
            entry.total += 1;
            *entry.next.entry(padded[t]).or_insert(0) += 1;
        }
    }

    Ok(NgramLm {
        order,
        k,
        vocab_size,
        units,
        contexts,
    })
}

/// Perplexity of one document under the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityScore {
    pub doc_id: String,
    pub ppl: f64,
    pub unit_count: usize,
}

/// `exp(-(1/T)·Σ ln P(uₜ | context))` over the document's characters,
/// with begin-of-text sentinel padding for the first contexts.
pub fn perplexity(lm: &NgramLm, doc: &Document) -> Result<PerplexityScore> {
    if doc.text.is_empty() {
        return Err(Error::data(format!("document {} is empty", doc.id)));
    }
    let ids: Vec<u32> = doc.text.chars().map(|c| lm.unit_id(c)).collect();
    let t_count = ids.len();
    let mut padded = vec![BOS; lm.order - 1];
    padded.extend(ids);
    let mut nll = 0.0;
    for t in lm.order - 1..padded.len() {
        nll -= lm.log_prob(&padded[t + 1 - lm.order..t], padded[t]);
    }
    Ok(PerplexityScore {
        doc_id: doc.id.clone(),
        ppl: (nll / t_count as f64).exp(),
        unit_count: t_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FilterMode {
    /// Keep documents with `ppl <= cutoff`.
    Absolute(f64),
    /// Keep the lowest-perplexity `p` percent (ties broken by doc id).
    Percentile(f64),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PplReport {
    pub scores: Vec<PerplexityScore>,
    pub cutoff: f64,
    pub kept: usize,
    pub removed: usize,
    /// (bucket lower edge, count) pairs over 10 equal-width buckets.
    pub histogram: Vec<(f64, u64)>,
    pub empty_input: bool,
}

/// Perplexity filtering in absolute-threshold or percentile mode.
pub fn ppl_filter(corpus: &Corpus, lm: &NgramLm, mode: FilterMode) -> Result<(Corpus, PplReport)> {
    match mode {
        FilterMode::Absolute(v) if v <= 0.0 => {
            return Err(Error::config("absolute ppl cutoff must be > 0"));
        }
        FilterMode::Percentile(p) if !(p > 0.0 && p <= 100.0) => {
            return Err(Error::config("percentile must be in (0, 100]"));
        }
        _ => {}
    }
    if corpus.is_empty() {
        return Ok((
            Corpus::default(),
            PplReport {
                empty_input: true,
                ..Default::default()
            },
        ));
    }

    let scores: Vec<PerplexityScore> = corpus
        .iter()
        .map(|d| perplexity(lm, d))
        .collect::<Result<_>>()?;

    let keep_ids: std::collections::BTreeSet<String>;
    let cutoff;
    match mode {
        FilterMode::Absolute(v) => {
            cutoff = v;
            keep_ids = scores
                .iter()
                .filter(|s| s.ppl <= v)
                .map(|s| s.doc_id.clone())
                .collect();
        }
        FilterMode::Percentile(p) => {
            let keep_count = ((p / 100.0) * scores.len() as f64).ceil() as usize;
            let mut ranked: Vec<&PerplexityScore> = scores.iter().collect();
            ranked.sort_by(|a, b| {
                a.ppl
                    .partial_cmp(&b.ppl)
                    .unwrap()
                    .then_with(|| a.doc_id.cmp(&b.doc_id))
            });
            cutoff = ranked
                .get(keep_count.saturating_sub(1))
                .map(|s| s.ppl)
                .unwrap_or(0.0);
            keep_ids = ranked[..keep_count.min(ranked.len())]
                .iter()
                .map(|s| s.doc_id.clone())
                .collect();
        }
    }

    let lo = scores.iter().map(|s| s.ppl).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.ppl).fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / 10.0).max(f64::MIN_POSITIVE);
    let mut histogram: Vec<(f64, u64)> = (0..10).map(|i| (lo + width * i as f64, 0)).collect();
    for s in &scores {
        let bucket = (((s.ppl - lo) / width) as usize).min(9);
        histogram[bucket].1 += 1;
    }

    let kept = corpus.retain_ids(&keep_ids);
    let report = PplReport {
        kept: kept.len(),
        removed: corpus.len() - kept.len(),
        scores,
        cutoff,
        histogram,
        empty_input: false,
    };
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text, "t")
    }

    // Hand count: in "abab", unigram counts are a:2, b:2 of 4.
    #[test]
    fn unigram_counts_on_abab() {
        let c: Corpus = vec![doc("a", "abab")].into_iter().collect();
        let lm = train_ppl_lm(&c, 1, 1e-12).unwrap();
        assert!((lm.prob_chars(&[], 'a') - 0.5).abs() < 1e-9);
        assert!((lm.prob_chars(&[], 'b') - 0.5).abs() < 1e-9);
    }

    #[test]
    fn conditional_distribution_sums_to_one() {
        let c: Corpus = vec![doc("a", "abracadabra")].into_iter().collect();
        let lm = train_ppl_lm(&c, 3, 0.5).unwrap();
        // sum over the whole alphabet (BOS, UNK, every trained char)
        let mut ids: Vec<u32> = vec![BOS, UNK];
        ids.extend(lm.units.values().copied());
        let ctx = vec![lm.units[&'a'], lm.units[&'b']];
        let total: f64 = ids.iter().map(|&u| lm.log_prob(&ctx, u).exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "sum = {total}");
    }

    #[test]
    fn smoothing_floor_positive_for_unseen() {
        let c: Corpus = vec![doc("a", "aaaa")].into_iter().collect();
        let lm = train_ppl_lm(&c, 1, 0.5).unwrap();
        let p_unseen = lm.prob_chars(&[], 'z');
        // k/(C + kV) with C=4, k=0.5, V=3
        assert!((p_unseen - 0.5 / (4.0 + 0.5 * 3.0)).abs() < 1e-12);
        assert!(p_unseen > 0.0);
    }

    #[test]
    fn uniform_model_ppl_equals_v() {
        let lm = NgramLm::uniform(37);
        let s = perplexity(&lm, &doc("x", "any text at all")).unwrap();
        assert!((s.ppl - 37.0).abs() / 37.0 < 1e-9);
        assert_eq!(s.unit_count, 15);
    }

    #[test]
    fn perfect_model_ppl_is_one() {
        // Order-2 model trained on "ab" scored on "ab": P(a|BOS)=1, P(b|a)=1 as k->0.
        let c: Corpus = vec![doc("a", "ab")].into_iter().collect();
        let lm = train_ppl_lm(&c, 2, 1e-15).unwrap();
        let s = perplexity(&lm, &doc("x", "ab")).unwrap();
        assert!((s.ppl - 1.0).abs() < 1e-9, "ppl = {}", s.ppl);
    }

    // Oracle: brute-force log-prob sum for a trigram model on "ab".
    #[test]
    fn trigram_ppl_matches_hand_computation() {
        let c: Corpus = vec![doc("a", "abab")].into_iter().collect();
        let k = 0.5;
        let lm = train_ppl_lm(&c, 3, k).unwrap();
        let v = lm.vocab_size as f64; // 4: BOS, UNK, a, b
        // padded: BOS BOS a b; P(a|BOS,BOS) uses counts from training
        // "BOS BOS -> a" seen once; "BOS a -> b" seen once.
        let p1: f64 = (1.0 + k) / (1.0 + k * v);
        let p2: f64 = (1.0 + k) / (1.0 + k * v);
        let expected = (-(p1.ln() + p2.ln()) / 2.0).exp();
        let s = perplexity(&lm, &doc("x", "ab")).unwrap();
        assert!((s.ppl - expected).abs() < 1e-12);
    }

    #[test]
    fn percentile_and_absolute_filters() {
        let lm = NgramLm::uniform(10);
        // distinct texts give identical ppl under uniform; use absolute mode
        // with a crafted LM for count checks instead.
        let c: Corpus = vec![doc("a", "xx"), doc("b", "yy"), doc("c", "zz"), doc("d", "ww")]
            .into_iter()
            .collect();
        let (kept, _) = ppl_filter(&c, &lm, FilterMode::Percentile(100.0)).unwrap();
        assert_eq!(kept.len(), 4);
        // percentile 50 on ties: tie-break by id keeps the 2 smallest ids
        let (kept, report) = ppl_filter(&c, &lm, FilterMode::Percentile(50.0)).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(report.kept, 2);
        let ids: Vec<&str> = kept.docs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn absolute_cutoff_keeps_low_ppl_docs() {
        // Train on pure 'a' text; docs with more non-'a' noise score higher.
        let trusted: Corpus = vec![doc("t", &"a".repeat(50))].into_iter().collect();
        let lm = train_ppl_lm(&trusted, 3, 0.1).unwrap();
        let c: Corpus = vec![doc("lo", "aaaaaaaa"), doc("mid", "aabaabaa"), doc("hi", "zqzqzqzq")]
            .into_iter()
            .collect();
        let s_lo = perplexity(&lm, &c.docs[0]).unwrap().ppl;
        let s_hi = perplexity(&lm, &c.docs[2]).unwrap().ppl;
        assert!(s_lo < s_hi);
        let cutoff = (s_lo + s_hi) / 2.0;
        let (kept, report) = ppl_filter(&c, &lm, FilterMode::Absolute(cutoff)).unwrap();
        assert!(kept.docs.iter().any(|d| d.id == "lo"));
        assert!(!kept.docs.iter().any(|d| d.id == "hi"));
        assert_eq!(report.kept + report.removed, 3);
    }

    #[test]
    fn empty_corpus_warns() {
        let lm = NgramLm::uniform(5);
        let (kept, report) = ppl_filter(&Corpus::default(), &lm, FilterMode::Percentile(50.0)).unwrap();
        assert!(kept.is_empty());
        assert!(report.empty_input);
    }

    #[test]
    fn retraining_is_deterministic() {
        let c: Corpus = vec![doc("a", "the cat sat"), doc("b", "on the mat")]
            .into_iter()
            .collect();
        let a = train_ppl_lm(&c, 3, 0.3).unwrap();
        let b = train_ppl_lm(&c, 3, 0.3).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn order_zero_rejected() {
        let c: Corpus = vec![doc("a", "x")].into_iter().collect();
        assert!(train_ppl_lm(&c, 0, 0.1).is_err());
    }
}
