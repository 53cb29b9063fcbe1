use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::{Error, Result};

/// Seed for the MinHash permutation parameters. Fixed so dedup results
/// are a pure function of the corpus and the config.
const PERMUTATION_SEED: u64 = 0x5EED_0DED;

/// MinHash + LSH near-duplicate removal configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    /// Characters per shingle.
    pub shingle_n: usize,
    /// Number of MinHash permutations.
    pub num_hashes: usize,
    /// LSH bands; `num_hashes` must be divisible by `bands`.
    pub bands: usize,
    /// Estimated-Jaccard threshold for clustering, in (0, 1].
    pub jaccard_threshold: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            shingle_n: 5,
            num_hashes: 128,
            bands: 16,
            jaccard_threshold: 0.8,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shingle_n < 1 {
            return Err(Error::config("shingle_n must be >= 1"));
        }
        if self.num_hashes == 0 || self.bands == 0 || !self.num_hashes.is_multiple_of(self.bands) {
            return Err(Error::config(format!(
                "num_hashes ({}) must be a positive multiple of bands ({})",
                self.num_hashes, self.bands
            )));
        }
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(Error::config("jaccard_threshold must be in (0, 1]"));
        }
        Ok(())
    }
}

/// One near-duplicate cluster. `kept` is the first member in stable
/// corpus order; `members` holds (doc id, estimated Jaccard to `kept`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cluster {
    pub kept: String,
    pub members: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClusterReport {
    pub clusters: Vec<Cluster>,
    /// Documents shorter than `shingle_n`, kept as singletons.
    pub too_short: Vec<String>,
}

/// FNV-1a over the UTF-8 bytes of a shingle window.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Character-shingle hash set, or `None` when the text is too short.
pub fn shingle_set(text: &str, n: usize) -> Option<BTreeSet<u64>> {
    let offsets: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let chars = offsets.len() - 1;
    if chars < n {
        return None;
    }
    let mut set = BTreeSet::new();
    for i in 0..=chars - n {
        set.insert(fnv1a(&text.as_bytes()[offsets[i]..offsets[i + n]]));
    }
    Some(set)
}

/// Exact Jaccard similarity of two shingle sets.
pub fn exact_jaccard(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

struct MinHasher {
    params: Vec<(u64, u64)>,
}

impl MinHasher {
    fn new(num_hashes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(PERMUTATION_SEED);
        let params = (0..num_hashes)
            .map(|_| (rng.gen::<u64>() | 1, rng.gen::<u64>()))
            .collect();
        MinHasher { params }
    }

    fn signature(&self, shingles: &BTreeSet<u64>) -> Vec<u64> {
        self.params
            .iter()
            .map(|&(a, b)| {
                shingles
                    .iter()
                    .map(|&s| a.wrapping_mul(s).wrapping_add(b))
                    .min()
                    .unwrap_or(u64::MAX)
            })
            .collect()
    }
}

fn estimated_jaccard(a: &[u64], b: &[u64]) -> f64 {
    let eq = a.iter().zip(b).filter(|(x, y)| x == y).count();
    eq as f64 / a.len() as f64
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as the root so keep-first is stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Near-duplicate removal: cluster documents whose estimated shingle
/// Jaccard meets the threshold and keep the first member of each
/// cluster in stable corpus order.
pub fn dedup(corpus: &Corpus, cfg: &DedupConfig) -> Result<(Corpus, ClusterReport)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::data("dedup requires a non-empty corpus"));
    }

    let n = corpus.len();
    let shingles: Vec<Option<BTreeSet<u64>>> = corpus
        .docs
        .iter()
        .map(|d| shingle_set(&d.text, cfg.shingle_n))
        .collect();

    let hasher = MinHasher::new(cfg.num_hashes);
    let signatures: Vec<Option<Vec<u64>>> = shingles
        .iter()
        .map(|s| s.as_ref().map(|s| hasher.signature(s)))
        .collect();

    // LSH: bucket by per-band signature slice, then verify candidates
    // with the estimated Jaccard from the full signatures.
    let rows = cfg.num_hashes / cfg.bands;
    let mut buckets: BTreeMap<(usize, u64), Vec<usize>> = BTreeMap::new();
    for (idx, sig) in signatures.iter().enumerate() {
        if let Some(sig) = sig {
            for band in 0..cfg.bands {
                let slice = &sig[band * rows..(band + 1) * rows];
                let mut bytes = Vec::with_capacity(rows * 8);
                for v in slice {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                buckets.entry((band, fnv1a(&bytes))).or_default().push(idx);
            }
        }
    }

    let mut uf = UnionFind::new(n);
    let mut checked: BTreeSet<(usize, usize)> = BTreeSet::new();
    for members in buckets.values() {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let pair = (members[i].min(members[j]), members[i].max(members[j]));
                if !checked.insert(pair) {
                    continue;
                }
                let (a, b) = (
                    signatures[pair.0].as_ref().unwrap(),
                    signatures[pair.1].as_ref().unwrap(),
                );
                if estimated_jaccard(a, b) >= cfg.jaccard_threshold {
                    uf.union(pair.0, pair.1);
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for idx in 0..n {
        groups.entry(uf.find(idx)).or_default().push(idx);
    }

    let mut report = ClusterReport::default();
    let mut kept_idx: BTreeSet<usize> = BTreeSet::new();
    for (root, members) in &groups {
        kept_idx.insert(*members.first().unwrap());
        if members.len() > 1 {
            let rep_sig = signatures[*root].as_ref().unwrap();
            report.clusters.push(Cluster {
                kept: corpus.docs[*root].id.clone(),
                members: members
                    .iter()
                    .map(|&m| {
                        let sim = if m == *root {
                            1.0
                        } else {
                            estimated_jaccard(rep_sig, signatures[m].as_ref().unwrap())
                        };
                        (corpus.docs[m].id.clone(), sim)
                    })
                    .collect(),
            });
        }
    }
    for (idx, s) in shingles.iter().enumerate() {
        if s.is_none() {
            report.too_short.push(corpus.docs[idx].id.clone());
        }
    }

    let kept = Corpus::new(
        corpus
            .docs
            .iter()
            .enumerate()
            .filter(|(i, _)| kept_idx.contains(i))
            .map(|(_, d)| d.clone())
            .collect(),
    );
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn doc(id: &str, text: String) -> Document {
        Document::new(id, text, "t")
    }

    #[test]
    fn exact_duplicates_collapse() {
        let text = "the quick brown fox jumps over the lazy dog".repeat(3);
        let c: Corpus = vec![doc("a", text.clone()), doc("b", text)].into_iter().collect();
        let (kept, report) = dedup(&c, &DedupConfig::default()).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.docs[0].id, "a");
        assert_eq!(report.clusters.len(), 1);
        assert_eq!(report.clusters[0].members.len(), 2);
        assert!((report.clusters[0].members[1].1 - 1.0).abs() < 1e-12);
    }

    // Oracle: exact Jaccard over 5-gram shingles computed brute force.
    #[test]
    fn near_duplicates_cluster_when_exact_jaccard_high() {
        // aperiodic text (LCG) so nearly all 5-gram shingles are distinct
        let mut state: u64 = 42;
        let base: String = (0..1000)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                char::from_u32('a' as u32 + ((state >> 33) % 26) as u32).unwrap()
            })
            .collect();
        let mut variant = base.clone();
        variant.replace_range(500..501, "Z");
        let sa = shingle_set(&base, 5).unwrap();
        let sb = shingle_set(&variant, 5).unwrap();
        let j = exact_jaccard(&sa, &sb);
        assert!(j > 0.9, "fixture must sit well above threshold, got {j}");

        let c: Corpus = vec![doc("a", base), doc("b", variant)].into_iter().collect();
        let (kept, _) = dedup(&c, &DedupConfig::default()).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn disjoint_docs_both_kept() {
        let a: String = "abcdefghij".repeat(10);
        let b: String = "0123456789".repeat(10);
        let c: Corpus = vec![doc("a", a), doc("b", b)].into_iter().collect();
        let (kept, report) = dedup(&c, &DedupConfig::default()).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(report.clusters.is_empty());
    }

    #[test]
    fn short_doc_is_flagged_singleton() {
        let c: Corpus = vec![doc("a", "hi".into()), doc("b", "also longer than five".into())]
            .into_iter()
            .collect();
        let (kept, report) = dedup(&c, &DedupConfig::default()).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(report.too_short, vec!["a".to_string()]);
    }

    #[test]
    fn idempotent_on_own_output() {
        let text = "some repeated content for the dedup idempotence check".repeat(2);
        let c: Corpus = vec![
            doc("a", text.clone()),
            doc("b", text),
            doc("c", "completely different material goes here instead".into()),
        ]
        .into_iter()
        .collect();
        let cfg = DedupConfig::default();
        let (once, _) = dedup(&c, &cfg).unwrap();
        let (twice, report) = dedup(&once, &cfg).unwrap();
        assert_eq!(once, twice);
        assert!(report.clusters.is_empty());
    }

    #[test]
    fn config_validation() {
        let cfg = DedupConfig {
            num_hashes: 100, // not divisible by 16
            ..DedupConfig::default()
        };
        assert!(dedup(&Corpus::new(vec![doc("a", "x".repeat(10))]), &cfg).is_err());
    }
}
