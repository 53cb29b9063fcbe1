use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const UNK_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const PAD_ID: u32 = 3;

pub const SPECIAL_PIECES: [&str; 4] = ["<unk>", "<s>", "</s>", "<pad>"];

/// Score used for raw-byte pieces in the Viterbi lattice. Chosen below
/// typical trained piece scores so byte fallback only fires for
/// uncovered characters.
pub const BYTE_SCORE: f64 = -15.0;
/// Per-character cost of an `<unk>` edge when byte fallback is off.
pub const UNK_PENALTY: f64 = -20.0;

/// A vocabulary entry: UTF-8 piece plus log-probability score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub piece: String,
    pub score: f64,
}

/// The kind of a token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Special,
    Byte,
    Regular,
}

/// A scored piece vocabulary with Viterbi max-score segmentation.
///
/// Id layout: the four control pieces at the head, then (when
/// `byte_fallback` is on) the 256 raw-byte pieces `<0x00>..<0xFF>`, then
/// the regular pieces. Piece index equals token id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubwordModel {
    pieces: Vec<Piece>,
    byte_fallback: bool,
    regular_start: u32,
    max_piece_chars: usize,
    #[serde(skip)]
    lookup: BTreeMap<String, u32>,
}

fn byte_piece(b: u8) -> String {
    format!("<0x{b:02X}>")
}

impl SubwordModel {
    /// Build a model from regular pieces (control and byte pieces are
    /// added automatically).
    pub fn from_pieces(regular: Vec<(String, f64)>, byte_fallback: bool) -> Result<SubwordModel> {
        let mut pieces: Vec<Piece> = SPECIAL_PIECES
            .iter()
            .map(|p| Piece {
                piece: p.to_string(),
                score: 0.0,
            })
            .collect();
        if byte_fallback {
            for b in 0..=255u8 {
                pieces.push(Piece {
                    piece: byte_piece(b),
                    score: BYTE_SCORE,
                });
            }
        }
        let regular_start = pieces.len() as u32;

        let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
        for (p, score) in &regular {
            if p.is_empty() {
                return Err(Error::config("empty piece in vocabulary"));
            }
            if !score.is_finite() {
                return Err(Error::config(format!("non-finite score for piece {p:?}")));
            }
            if seen.insert(p.as_str(), ()).is_some() {
                return Err(Error::config(format!("duplicate piece {p:?}")));
            }
            if SPECIAL_PIECES.contains(&p.as_str()) {
                return Err(Error::config(format!(
                    "piece {p:?} collides with a control piece"
                )));
            }
        }
        pieces.extend(regular.into_iter().map(|(piece, score)| Piece { piece, score }));

        let mut model = SubwordModel {
            pieces,
            byte_fallback,
            regular_start,
            max_piece_chars: 1,
            lookup: BTreeMap::new(),
        };
        model.rebuild_index();
        Ok(model)
    }

    /// Rebuild the piece lookup (needed after deserialization).
    pub fn rebuild_index(&mut self) {
        self.lookup.clear();
        self.max_piece_chars = 1;
        for (id, p) in self.pieces.iter().enumerate().skip(self.regular_start as usize) {
            self.max_piece_chars = self.max_piece_chars.max(p.piece.chars().count());
            self.lookup.insert(p.piece.clone(), id as u32);
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.pieces.len()
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn kind(&self, id: u32) -> PieceKind {
        if id < 4 {
            PieceKind::Special
        } else if id < self.regular_start {
            PieceKind::Byte
        } else {
            PieceKind::Regular
        }
    }

    /// Regular (non-control, non-byte) pieces with their ids.
    pub fn regular_pieces(&self) -> impl Iterator<Item = (u32, &Piece)> {
        self.pieces
            .iter()
            .enumerate()
            .skip(self.regular_start as usize)
            .map(|(i, p)| (i as u32, p))
    }

    pub fn regular_start(&self) -> u32 {
        self.regular_start
    }

    /// Id of an exact piece string, searching controls, bytes, and
    /// regular pieces.
    pub fn id_of(&self, piece: &str) -> Option<u32> {
        if let Some(&id) = self.lookup.get(piece) {
            return Some(id);
        }
        self.pieces[..self.regular_start as usize]
            .iter()
            .position(|p| p.piece == piece)
            .map(|i| i as u32)
    }

    fn byte_id(&self, b: u8) -> u32 {
        debug_assert!(self.byte_fallback);
        4 + b as u32
    }

    /// Maximum-total-score segmentation of `text` into pieces.
    ///
    /// Characters not covered by any piece fall back to raw-byte pieces
    /// when `byte_fallback` is on, else to `<unk>` (one per character).
    pub fn encode(&self, text: &str) -> Vec<u32> {
        if text.is_empty() {
            return Vec::new();
        }
        let offsets: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .collect();
        let n = offsets.len() - 1;

        #[derive(Clone, Copy)]
        enum Edge {
            Piece(u32),
            Fallback(usize), // start char position
        }
        let mut best = vec![f64::NEG_INFINITY; n + 1];
        let mut back: Vec<Option<(usize, Edge)>> = vec![None; n + 1];
        best[0] = 0.0;

        for i in 0..n {
            if best[i] == f64::NEG_INFINITY {
                continue;
            }
            let max_len = self.max_piece_chars.min(n - i);
            for len in 1..=max_len {
                let sub = &text[offsets[i]..offsets[i + len]];
                if let Some(&id) = self.lookup.get(sub) {
                    let cand = best[i] + self.pieces[id as usize].score;
                    if cand > best[i + len] {
                        best[i + len] = cand;
                        back[i + len] = Some((i, Edge::Piece(id)));
                    }
                }
            }
            // single-character fallback edge, always available
            let nbytes = offsets[i + 1] - offsets[i];
            let cost = if self.byte_fallback {
                nbytes as f64 * BYTE_SCORE
            } else {
                UNK_PENALTY
            };
            let cand = best[i] + cost;
            if cand > best[i + 1] {
                best[i + 1] = cand;
                back[i + 1] = Some((i, Edge::Fallback(i)));
            }
        }

        let mut rev: Vec<u32> = Vec::new();
        let mut pos = n;
        while pos > 0 {
            let (prev, edge) = back[pos].expect("viterbi lattice is connected");
            match edge {
                Edge::Piece(id) => rev.push(id),
                Edge::Fallback(i) => {
                    if self.byte_fallback {
                        for &b in text.as_bytes()[offsets[i]..offsets[i + 1]].iter().rev() {
                            rev.push(self.byte_id(b));
                        }
                    } else {
                        rev.push(UNK_ID);
                    }
                }
            }
            pos = prev;
        }
        rev.reverse();
        rev
    }

    /// Inverse of [`encode`](Self::encode): concatenates pieces,
    /// reassembling byte-fallback runs into UTF-8.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut bytes: Vec<u8> = Vec::new();
        for &id in ids {
            let Some(piece) = self.pieces.get(id as usize) else {
                return Err(Error::data(format!("token id {id} out of range")));
            };
            match self.kind(id) {
                PieceKind::Special => {
                    if id == UNK_ID {
                        bytes.extend_from_slice("\u{FFFD}".as_bytes());
                    }
                }
                PieceKind::Byte => bytes.push((id - 4) as u8),
                PieceKind::Regular => bytes.extend_from_slice(piece.piece.as_bytes()),
            }
        }
        String::from_utf8(bytes)
            .map_err(|_| Error::data("decoded byte sequence is not valid UTF-8"))
    }
}
