use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{token_histogram, PieceKind, SubwordModel};
use crate::corpus::Corpus;
use crate::{Error, Result};

/// Rule-based piece filtration plus manual additions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PieceFilterRules {
    /// Inclusive Unicode codepoint ranges; when non-empty, every
    /// character of a piece must fall inside one of them.
    pub allowed_ranges: Vec<(u32, u32)>,
    /// Remove pieces occurring fewer than this many times in the corpus
    /// (token frequency under the model's own segmentation). 0 disables.
    pub min_corpus_freq: u64,
    /// Maximum piece length in characters. 0 disables.
    pub max_piece_len: usize,
    pub manual_deny: Vec<String>,
    /// Pieces appended at the score tail (min existing score − 1).
    pub manual_add: Vec<String>,
}

impl PieceFilterRules {
    pub fn validate(&self) -> Result<()> {
        let mut sorted = self.allowed_ranges.clone();
        sorted.sort();
        for pair in sorted.windows(2) {
            if pair[1].0 <= pair[0].1 {
                return Err(Error::config(format!(
                    "allowed_ranges overlap: {:?} and {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        for (lo, hi) in &sorted {
            if hi < lo {
                return Err(Error::config(format!("invalid range ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RefineReport {
    /// (piece, reason) pairs for removed pieces.
    pub removed: Vec<(String, String)>,
    /// manual_add pieces that already existed (no-op).
    pub collisions: Vec<String>,
    pub added: Vec<String>,
}

fn in_ranges(piece: &str, ranges: &[(u32, u32)]) -> bool {
    piece
        .chars()
        .all(|c| ranges.iter().any(|&(lo, hi)| (c as u32) >= lo && (c as u32) <= hi))
}

/// Remove pieces violating the rules and insert manual additions.
/// Control pieces, byte pieces, and single-character coverage pieces
/// (characters present in the corpus) are never removed.
pub fn refine_pieces(
    model: &SubwordModel,
    rules: &PieceFilterRules,
    corpus: &Corpus,
) -> Result<(SubwordModel, RefineReport)> {
    rules.validate()?;
    let mut report = RefineReport::default();

    let freq = if rules.min_corpus_freq > 0 {
        Some(token_histogram(model, corpus))
    } else {
        None
    };
    let corpus_chars: BTreeSet<char> = corpus
        .iter()
        .flat_map(|d| d.text.chars())
        .collect();
    let deny: BTreeSet<&str> = rules.manual_deny.iter().map(|s| s.as_str()).collect();

    let mut kept: Vec<(String, f64)> = Vec::new();
    for (id, p) in model.regular_pieces() {
        let mut chars = p.piece.chars();
        let first = chars.next();
        let single_char = first.is_some() && chars.next().is_none();
        let coverage = single_char && first.is_some_and(|c| corpus_chars.contains(&c));
        let reason = if coverage {
            None
        } else if deny.contains(p.piece.as_str()) {
            Some("manual_deny")
        } else if !rules.allowed_ranges.is_empty() && !in_ranges(&p.piece, &rules.allowed_ranges) {
            Some("allowed_ranges")
        } else if rules.max_piece_len > 0 && p.piece.chars().count() > rules.max_piece_len {
            Some("max_piece_len")
        } else if let Some(freq) = &freq {
            if freq[id as usize] < rules.min_corpus_freq {
                Some("min_corpus_freq")
            } else {
                None
            }
        } else {
            None
        };
        match reason {
            Some(r) => report.removed.push((p.piece.clone(), r.to_string())),
            None => kept.push((p.piece.clone(), p.score)),
        }
    }

    for add in &rules.manual_add {
        if kept.iter().any(|(p, _)| p == add) || model.id_of(add).is_some_and(|id| {
            matches!(model.kind(id), PieceKind::Special | PieceKind::Byte)
        }) {
            report.collisions.push(add.clone());
            continue;
        }
        let tail = kept
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::INFINITY, f64::min);
        let score = if tail.is_finite() { tail - 1.0 } else { -1.0 };
        kept.push((add.clone(), score));
        report.added.push(add.clone());
    }

    let refined = SubwordModel::from_pieces(kept, model.byte_fallback())?;
    Ok((refined, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(text: &str) -> Corpus {
        vec![Document::new("d", text, "t")].into_iter().collect()
    }

    fn model(pieces: &[(&str, f64)]) -> SubwordModel {
        SubwordModel::from_pieces(
            pieces.iter().map(|(p, s)| (p.to_string(), *s)).collect(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn empty_rules_keep_model_unchanged() {
        let m = model(&[("a", -1.0), ("ab", -2.0)]);
        let (out, report) = refine_pieces(&m, &PieceFilterRules::default(), &corpus("ab")).unwrap();
        assert_eq!(out.pieces(), m.pieces());
        assert!(report.removed.is_empty());
    }

    #[test]
    fn deny_list_removes_piece_keeps_order() {
        let m = model(&[("a", -1.0), ("ab", -2.0), ("b", -3.0)]);
        let rules = PieceFilterRules {
            manual_deny: vec!["ab".into()],
            ..Default::default()
        };
        let (out, report) = refine_pieces(&m, &rules, &corpus("ab")).unwrap();
        let pieces: Vec<&str> = out.regular_pieces().map(|(_, p)| p.piece.as_str()).collect();
        assert_eq!(pieces, vec!["a", "b"]);
        assert_eq!(report.removed, vec![("ab".into(), "manual_deny".into())]);
    }

    // Oracle: the frequency of a piece is its count under the model's
    // own segmentation of the corpus, verified by hand.
    #[test]
    fn min_freq_removes_rare_piece() {
        // "xy" appears once; "a" appears 4 times
        let m = model(&[("a", -1.0), ("x", -4.0), ("y", -4.0), ("xy", -2.0)]);
        let rules = PieceFilterRules {
            min_corpus_freq: 2,
            ..Default::default()
        };
        let (out, report) = refine_pieces(&m, &rules, &corpus("aaxyaa")).unwrap();
        assert!(out.id_of("xy").is_none());
        assert!(report.removed.contains(&("xy".into(), "min_corpus_freq".into())));
        // x, y are coverage pieces -> kept even though their own freq is 0
        assert!(out.id_of("x").is_some());
    }

    #[test]
    fn manual_add_at_tail_and_collision_noop() {
        let m = model(&[("a", -1.0), ("b", -2.5)]);
        let rules = PieceFilterRules {
            manual_add: vec!["ab".into(), "a".into()],
            ..Default::default()
        };
        let (out, report) = refine_pieces(&m, &rules, &corpus("ab")).unwrap();
        let id = out.id_of("ab").unwrap();
        assert!((out.pieces()[id as usize].score - (-3.5)).abs() < 1e-12);
        assert_eq!(report.collisions, vec!["a".to_string()]);
        assert_eq!(report.added, vec!["ab".to_string()]);
    }

    #[test]
    fn range_filter_keeps_hangul_only() {
        let m = model(&[("가", -1.0), ("가나", -1.5), ("ab", -2.0), ("a", -2.0), ("b", -2.0)]);
        let rules = PieceFilterRules {
            allowed_ranges: vec![(0xAC00, 0xD7A3)],
            ..Default::default()
        };
        // corpus has only Hangul, so Latin pieces are not coverage-protected
        let (out, _) = refine_pieces(&m, &rules, &corpus("가나")).unwrap();
        assert!(out.id_of("가나").is_some());
        assert!(out.id_of("ab").is_none());
        assert!(out.id_of("a").is_none());
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let rules = PieceFilterRules {
            allowed_ranges: vec![(0, 10), (5, 20)],
            ..Default::default()
        };
        assert!(rules.validate().is_err());
    }
}
