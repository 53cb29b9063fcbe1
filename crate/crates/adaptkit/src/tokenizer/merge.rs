use std::collections::BTreeSet;

use super::{PieceKind, SubwordModel};
use crate::Result;

/// Merge a newly trained tokenizer into a base tokenizer.
///
/// Base pieces keep their ids; pieces unique to the new model are
/// appended after them, with their scores affinely rescaled into the
/// base model's regular-score range so neither side dominates the
/// merged Viterbi lattice. Returns the merged model and the number of
/// new pieces whose exact string already existed in the base.
pub fn merge(base: &SubwordModel, new: &SubwordModel) -> Result<(SubwordModel, usize)> {
    let base_strings: BTreeSet<&str> = base.pieces().iter().map(|p| p.piece.as_str()).collect();

    let overlap = new
        .pieces()
        .iter()
        .filter(|p| base_strings.contains(p.piece.as_str()))
        .count();

    let range = |m: &SubwordModel| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, p) in m.regular_pieces() {
            lo = lo.min(p.score);
            hi = hi.max(p.score);
        }
        (lo, hi)
    };
    let (b_lo, b_hi) = range(base);
    let (n_lo, n_hi) = range(new);
    let rescale = |s: f64| {
        if !b_lo.is_finite() || !n_lo.is_finite() || n_hi == n_lo {
            if b_lo.is_finite() {
                b_lo
            } else {
                s
            }
        } else {
            b_lo + (s - n_lo) * (b_hi - b_lo) / (n_hi - n_lo)
        }
    };

    let mut regular: Vec<(String, f64)> = base
        .regular_pieces()
        .map(|(_, p)| (p.piece.clone(), p.score))
        .collect();
    for (id, p) in new.regular_pieces() {
        debug_assert!(matches!(new.kind(id), PieceKind::Regular));
        if !base_strings.contains(p.piece.as_str()) {
            regular.push((p.piece.clone(), rescale(p.score)));
        }
    }

    let merged = SubwordModel::from_pieces(regular, base.byte_fallback())?;
    Ok((merged, overlap))
}
