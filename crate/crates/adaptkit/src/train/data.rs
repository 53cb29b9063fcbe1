use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::tokenizer::{SubwordModel, EOS_ID};

/// Tokenize every document, append an end-of-sequence marker after
/// each, concatenate, and cut into fixed-length samples (the trailing
/// remainder is dropped).
pub fn pack(corpus: &Corpus, tok: &SubwordModel, context: usize) -> Vec<Vec<u32>> {
    let mut flat: Vec<u32> = Vec::new();
    for doc in corpus.iter() {
        flat.extend(tok.encode(&doc.text));
        flat.push(EOS_ID);
    }
    flat.chunks_exact(context).map(|c| c.to_vec()).collect()
}

/// Endless batch source: a seed-determined shuffle of the samples,
/// reshuffled at each epoch boundary (partial trailing batches are
/// dropped into the next epoch).
pub struct DataStream<'a> {
    samples: &'a [Vec<u32>],
    batch: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl<'a> DataStream<'a> {
    pub fn new(samples: &'a [Vec<u32>], batch: usize, seed: u64) -> Self {
        assert!(!samples.is_empty(), "data stream needs at least one sample");
        let mut s = DataStream {
            samples,
            batch: batch.clamp(1, samples.len()),
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..samples.len()).collect(),
            pos: 0,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    pub fn next_batch(&mut self) -> Vec<Vec<u32>> {
        if self.pos + self.batch > self.order.len() {
            self.reshuffle();
        }
        let batch = self.order[self.pos..self.pos + self.batch]
            .iter()
            .map(|&i| self.samples[i].clone())
            .collect();
        self.pos += self.batch;
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::tokenizer::SubwordModel;

    fn tok() -> SubwordModel {
        SubwordModel::from_pieces(vec![("a".into(), -1.0), ("b".into(), -1.5)], true).unwrap()
    }

    #[test]
    fn pack_appends_eos_and_drops_remainder() {
        let t = tok();
        let corpus: Corpus = vec![
            Document::new("1", "aab", "t"),
            Document::new("2", "ba", "t"),
        ]
        .into_iter()
        .collect();
        // tokens: a a b </s> b a </s>  -> 7 tokens, context 3 -> 2 samples
        let packed = pack(&corpus, &t, 3);
        assert_eq!(packed.len(), 2);
        let a = t.id_of("a").unwrap();
        let b = t.id_of("b").unwrap();
        assert_eq!(packed[0], vec![a, a, b]);
        assert_eq!(packed[1], vec![EOS_ID, b, a]);
    }

    #[test]
    fn stream_is_seeded_and_covers_an_epoch() {
        let samples: Vec<Vec<u32>> = (0..6).map(|i| vec![i, i]).collect();
        let mut s1 = DataStream::new(&samples, 2, 42);
        let mut s2 = DataStream::new(&samples, 2, 42);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..3 {
            let b1 = s1.next_batch();
            assert_eq!(b1, s2.next_batch());
            for seq in &b1 {
                seen.insert(seq[0]);
            }
        }
        // one epoch of 3 batches covers all 6 samples exactly once
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn oversized_batch_clamps_to_sample_count() {
        let samples: Vec<Vec<u32>> = (0..3).map(|i| vec![i]).collect();
        let mut s = DataStream::new(&samples, 16, 0);
        assert_eq!(s.next_batch().len(), 3);
    }
}
