use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::{Error, Result};

/// Randomly retain `⌈fraction·N⌉` documents.
///
/// Selection procedure (documented so tests can reproduce the draws):
/// the document ids are sorted lexicographically, Fisher–Yates shuffled
/// with `ChaCha8Rng::seed_from_u64(seed)` (`j = gen_range(0..=i)` for
/// `i = n-1 .. 1`), and the first `⌈fraction·N⌉` ids of the shuffled
/// order are kept. Surviving documents keep their original relative
/// order in the output.
pub fn random_select(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!(
            "random_select fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = corpus.len();
    let keep_count = (fraction * n as f64).ceil() as usize;
    if keep_count >= n {
        return Ok(corpus.clone());
    }

    let mut ids: Vec<&str> = corpus.docs.iter().map(|d| d.id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        ids.swap(i, j);
    }
    let keep: std::collections::BTreeSet<String> =
        ids[..keep_count].iter().map(|s| s.to_string()).collect();
    Ok(corpus.retain_ids(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(n: usize) -> Corpus {
        (0..n)
            .map(|i| Document::new(format!("d{i:02}"), format!("text {i}"), "t"))
            .collect()
    }

    #[test]
    fn fraction_one_is_identity() {
        let c = corpus(7);
        let out = random_select(&c, 1.0, 3).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn invalid_fraction_rejected() {
        let c = corpus(3);
        assert!(random_select(&c, 0.0, 0).is_err());
        assert!(random_select(&c, 1.5, 0).is_err());
    }

    // Oracle: replay the documented Fisher–Yates draws by hand with the
    // same named PRNG and compare kept-id sets.
    #[test]
    fn seed_7_half_of_ten_matches_prng_oracle() {
        let c = corpus(10);
        let out = random_select(&c, 0.5, 7).unwrap();
        assert_eq!(out.len(), 5);

        let mut ids: Vec<String> = c.docs.iter().map(|d| d.id.clone()).collect();
        ids.sort();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in (1..10usize).rev() {
            let j = rng.gen_range(0..=i);
            ids.swap(i, j);
        }
        let mut expected: Vec<String> = ids[..5].to_vec();
        expected.sort();
        let mut got: Vec<String> = out.docs.iter().map(|d| d.id.clone()).collect();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn order_preserved_and_size_contract() {
        let c = corpus(10);
        let a = random_select(&c, 0.5, 1).unwrap();
        let b = random_select(&c, 0.5, 2).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(b.len(), 5);
        // relative order preserved: ids must appear in original order
        let pos = |id: &str| c.docs.iter().position(|d| d.id == id).unwrap();
        for w in a.docs.windows(2) {
            assert!(pos(&w[0].id) < pos(&w[1].id));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let c = corpus(20);
        let a = random_select(&c, 0.3, 42).unwrap();
        let b = random_select(&c, 0.3, 42).unwrap();
        assert_eq!(a, b);
    }
}
