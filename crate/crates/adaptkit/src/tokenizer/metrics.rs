use serde::{Deserialize, Serialize};

use super::{merge, train_unigram, SubwordModel, UnigramTrainerConfig};
use crate::corpus::Corpus;
use crate::{Error, Result};

/// Tokenizer complexity relative to a base tokenizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub vocab_size: usize,
    /// Ratio of Input Complexity: token count under the new tokenizer
    /// divided by token count under the base, over the same corpus.
    pub ric: f64,
    /// Ratio of Embedding Complexity: embedding parameter count ratio,
    /// which reduces to the vocab-size ratio at fixed dimension.
    pub rec: f64,
}

/// `ric = Σ|encode_new(doc)| / Σ|encode_base(doc)|`;
/// `rec = (|V_new|·d) / (|V_base|·d)`.
pub fn complexity_ratios(
    new: &SubwordModel,
    base: &SubwordModel,
    corpus: &Corpus,
    embed_dim: usize,
) -> Result<ComplexityReport> {
    if corpus.is_empty() {
        return Err(Error::data("complexity_ratios requires a non-empty corpus"));
    }
    let new_tokens: usize = corpus.iter().map(|d| new.encode(&d.text).len()).sum();
    let base_tokens: usize = corpus.iter().map(|d| base.encode(&d.text).len()).sum();
    if base_tokens == 0 {
        return Err(Error::data("base tokenizer produced zero tokens"));
    }
    Ok(ComplexityReport {
        vocab_size: new.vocab_size(),
        ric: new_tokens as f64 / base_tokens as f64,
        rec: (new.vocab_size() * embed_dim) as f64 / (base.vocab_size() * embed_dim) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    /// Train one model at the largest size and prune it down to each
    /// target, producing nested vocabularies.
    Nested,
    /// Retrain from scratch at every size.
    Retrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub merged_vocab: usize,
    pub ric: f64,
    pub rec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Knee point: smallest size whose marginal RIC improvement per
    /// 1,000 added pieces falls below 10% of the sweep's initial
    /// marginal improvement.
    pub chosen_size: Option<usize>,
}

/// Derive a nested sub-vocabulary of `full` at `target` total pieces:
/// coverage (single-character) pieces always kept, multi-character
/// pieces ranked by score. Scores are carried over unchanged.
fn prune_to_size(full: &SubwordModel, target: usize) -> Result<SubwordModel> {
    let mut singles: Vec<(String, f64)> = Vec::new();
    let mut multi: Vec<(String, f64)> = Vec::new();
    for (_, p) in full.regular_pieces() {
        if p.piece.chars().count() == 1 {
            singles.push((p.piece.clone(), p.score));
        } else {
            multi.push((p.piece.clone(), p.score));
        }
    }
    let floor = full.vocab_size() - multi.len();
    if target < floor {
        return Err(Error::config(format!(
            "sweep size {target} is below the coverage floor {floor}"
        )));
    }
    multi.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    multi.truncate(target - floor);
    singles.extend(multi);
    SubwordModel::from_pieces(singles, full.byte_fallback())
}

/// Train/prune a tokenizer at each size, merge with the base, and
/// report (size, RIC, REC) rows plus the knee-point size.
pub fn vocab_sweep(
    corpus: &Corpus,
    base: &SubwordModel,
    sizes: &[usize],
    embed_dim: usize,
    trainer: &UnigramTrainerConfig,
    mode: SweepMode,
) -> Result<SweepReport> {
    if sizes.is_empty() {
        return Err(Error::config("vocab_sweep requires at least one size"));
    }
    if sizes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("sweep sizes must be ascending"));
    }

    let full = match mode {
        SweepMode::Nested => {
            let cfg = UnigramTrainerConfig {
                target_vocab: *sizes.last().unwrap(),
                ..trainer.clone()
            };
            Some(train_unigram(corpus, &cfg)?)
        }
        SweepMode::Retrain => None,
    };

    let mut rows = Vec::new();
    for &size in sizes {
        let model = match (&full, mode) {
            (Some(full), SweepMode::Nested) => prune_to_size(full, size)?,
            _ => {
                let cfg = UnigramTrainerConfig {
                    target_vocab: size,
                    ..trainer.clone()
                };
                train_unigram(corpus, &cfg)?
            }
        };
        let (merged, _) = merge(base, &model)?;
        let report = complexity_ratios(&merged, base, corpus, embed_dim)?;
        rows.push(SweepRow {
            size,
            merged_vocab: merged.vocab_size(),
            ric: report.ric,
            rec: report.rec,
        });
    }

    let chosen_size = knee_point(&rows);
    Ok(SweepReport { rows, chosen_size })
}

fn knee_point(rows: &[SweepRow]) -> Option<usize> {
    if rows.len() < 2 {
        return rows.first().map(|r| r.size);
    }
    let marginal = |a: &SweepRow, b: &SweepRow| {
        let added = (b.size - a.size) as f64 / 1000.0;
        if added <= 0.0 {
            0.0
        } else {
            (a.ric - b.ric) / added
        }
    };
    let initial = marginal(&rows[0], &rows[1]);
    for i in 1..rows.len() {
        if marginal(&rows[i - 1], &rows[i]) < 0.1 * initial {
            return Some(rows[i].size);
        }
    }
    Some(rows.last().unwrap().size)
}

/// Per-token-id frequency over `encode(corpus)`; index = token id.
pub fn token_histogram(model: &SubwordModel, corpus: &Corpus) -> Vec<u64> {
    let mut counts = vec![0u64; model.vocab_size()];
    for doc in corpus.iter() {
        for id in model.encode(&doc.text) {
            counts[id as usize] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRatioReport {
    pub per_dataset: Vec<(String, f64)>,
    pub average_tr: f64,
}

/// Token Ratio per dataset: token count under `new` / token count under
/// `base`; the average is the arithmetic mean over datasets.
pub fn token_ratio(
    new: &SubwordModel,
    base: &SubwordModel,
    datasets: &[(String, &Corpus)],
) -> Result<TokenRatioReport> {
    if datasets.is_empty() {
        return Err(Error::config("token_ratio requires at least one dataset"));
    }
    let mut per_dataset = Vec::new();
    for (name, corpus) in datasets {
        if corpus.is_empty() {
            return Err(Error::data(format!("dataset {name} is empty")));
        }
        let new_tokens: usize = corpus.iter().map(|d| new.encode(&d.text).len()).sum();
        let base_tokens: usize = corpus.iter().map(|d| base.encode(&d.text).len()).sum();
        if base_tokens == 0 {
            return Err(Error::data(format!("dataset {name}: base produced zero tokens")));
        }
        per_dataset.push((name.clone(), new_tokens as f64 / base_tokens as f64));
    }
    let average_tr = per_dataset.iter().map(|(_, tr)| tr).sum::<f64>() / per_dataset.len() as f64;
    Ok(TokenRatioReport {
        per_dataset,
        average_tr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn model(pieces: &[(&str, f64)]) -> SubwordModel {
        SubwordModel::from_pieces(
            pieces.iter().map(|(p, s)| (p.to_string(), *s)).collect(),
            false,
        )
        .unwrap()
    }

    fn corpus(text: &str) -> Corpus {
        vec![Document::new("d", text, "t")].into_iter().collect()
    }

    #[test]
    fn identity_ratios_are_exactly_one() {
        let m = model(&[("a", -1.0), ("b", -2.0)]);
        let r = complexity_ratios(&m, &m, &corpus("abab"), 64).unwrap();
        assert_eq!(r.ric, 1.0);
        assert_eq!(r.rec, 1.0);
    }

    #[test]
    fn rec_is_vocab_ratio() {
        let base = model(&[("a", -1.0)]);
        let mut pieces = vec![("a", -1.0), ("b", -1.0), ("c", -1.0)];
        pieces.resize(pieces.len(), ("x", -1.0));
        let new = model(&pieces);
        let r = complexity_ratios(&new, &base, &corpus("aa"), 7).unwrap();
        assert!((r.rec - new.vocab_size() as f64 / base.vocab_size() as f64).abs() < 1e-12);
    }

    // Oracle: token counts 3k (char-level) vs k (whole-word piece).
    #[test]
    fn ric_one_third_for_whole_word_piece() {
        let base = model(&[("가", -1.0), ("나", -1.0), ("다", -1.0)]);
        let new = model(&[("가", -1.0), ("나", -1.0), ("다", -1.0), ("가나다", -0.5)]);
        let text = "가나다".repeat(5);
        let r = complexity_ratios(&new, &base, &corpus(&text), 8).unwrap();
        assert!((r.ric - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_ids() {
        let m = model(&[("a", -1.0)]);
        let h = token_histogram(&m, &corpus("aa"));
        assert_eq!(h[m.id_of("a").unwrap() as usize], 2);
        assert_eq!(h.iter().sum::<u64>(), 2);
        let empty = token_histogram(&m, &Corpus::default());
        assert!(empty.iter().all(|&c| c == 0));
    }

    #[test]
    fn token_ratio_identity_and_construction() {
        let base = model(&[("가", -1.0), ("나", -1.0), ("다", -1.0)]);
        let new = model(&[("가", -1.0), ("나", -1.0), ("다", -1.0), ("가나다", -0.5)]);
        let text = "가나다".repeat(4);
        let c1 = corpus(&text);
        let same = token_ratio(&base, &base, &[("d1".into(), &c1)]).unwrap();
        assert_eq!(same.per_dataset[0].1, 1.0);
        let r = token_ratio(&new, &base, &[("d1".into(), &c1)]).unwrap();
        assert!((r.average_tr - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_identical_sizes_identical_rows() {
        let c: Corpus = vec![Document::new("d", "ab ab abc abc abc", "t")]
            .into_iter()
            .collect();
        let base = model(&[("z", -1.0)]);
        let trainer = UnigramTrainerConfig {
            byte_fallback: false,
            ..Default::default()
        };
        // floor: 4 specials + chars {a,b,c,space} = 8
        let report = vocab_sweep(&c, &base, &[9, 9], 4, &trainer, SweepMode::Nested).unwrap();
        assert_eq!(report.rows[0], report.rows[1]);
    }

    #[test]
    fn nested_sweep_monotonicity() {
        let c: Corpus = vec![Document::new(
            "d",
            "가나다 가나다 라마바 라마바 사아자 차카타 가나다 라마바",
            "t",
        )]
        .into_iter()
        .collect();
        let base = model(&[("x", -1.0)]);
        let trainer = UnigramTrainerConfig {
            byte_fallback: false,
            ..Default::default()
        };
        // floor: 4 + 13 chars = 17
        let report =
            vocab_sweep(&c, &base, &[17, 19, 21, 23], 4, &trainer, SweepMode::Nested).unwrap();
        for w in report.rows.windows(2) {
            assert!(w[1].ric <= w[0].ric + 1e-12, "ric not non-increasing: {w:?}");
            assert!(w[1].rec > w[0].rec, "rec not strictly increasing: {w:?}");
        }
    }

    #[test]
    fn descending_sizes_rejected() {
        let c = corpus("ab");
        let base = model(&[("a", -1.0)]);
        let trainer = UnigramTrainerConfig::default();
        assert!(vocab_sweep(&c, &base, &[10, 5], 4, &trainer, SweepMode::Nested).is_err());
    }
}
