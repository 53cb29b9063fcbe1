//! Seeded synthetic bilingual corpus generator for demos and tests:
//! Zipf-weighted pseudo-word text in a Latin base language and a
//! Hangul adaptation language, with optional near-duplicate and noise
//! injection to exercise the refinement stages.

use adaptkit::corpus::{Corpus, Document};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub docs: usize,
    pub seed: u64,
    /// Fraction of documents written in the Hangul language.
    pub hangul_ratio: f64,
    /// Fraction of documents that are near-duplicates of an earlier one.
    pub near_dup_fraction: f64,
    /// Fraction of documents that are low-quality noise.
    pub noise_fraction: f64,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            docs: 200,
            seed: 0,
            hangul_ratio: 0.5,
            near_dup_fraction: 0.0,
            noise_fraction: 0.0,
            min_words: 20,
            max_words: 60,
        }
    }
}

const LATIN_SYLLABLES: [&str; 16] = [
    "ta", "re", "mo", "li", "san", "ver", "du", "pel", "no", "ki", "ras", "ol", "fen", "ur",
    "bas", "tri",
];

const HANGUL_SYLLABLES: [&str; 16] = [
    "가", "나", "다", "라", "마", "바", "사", "아", "자", "차", "카", "타", "파", "하", "고",
    "무",
];

/// Build a fixed pseudo-word lexicon from syllable pairs/triples.
fn lexicon(syllables: &[&str]) -> Vec<String> {
    let mut words = Vec::new();
    for (i, a) in syllables.iter().enumerate() {
        for (j, b) in syllables.iter().enumerate() {
            if (i + j) % 3 == 0 {
                words.push(format!("{a}{b}"));
            }
            if (i * j) % 7 == 1 {
                words.push(format!("{a}{b}{}", syllables[(i + j) % syllables.len()]));
            }
        }
    }
    words
}

/// Zipf-like draw: rank r with weight 1/(r+1).
fn zipf_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let total: f64 = (0..n).map(|r| 1.0 / (r + 1) as f64).sum();
    let mut x = rng.gen::<f64>() * total;
    for r in 0..n {
        x -= 1.0 / (r + 1) as f64;
        if x <= 0.0 {
            return r;
        }
    }
    n - 1
}

fn sentence(rng: &mut ChaCha8Rng, words: &[String], len: usize) -> String {
    let mut out = String::new();
    for i in 0..len {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&words[zipf_index(rng, words.len())]);
    }
    out
}

pub fn generate(cfg: &FixtureConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let latin = lexicon(&LATIN_SYLLABLES);
    let hangul = lexicon(&HANGUL_SYLLABLES);
    let mut docs: Vec<Document> = Vec::with_capacity(cfg.docs);

    for i in 0..cfg.docs {
        let roll: f64 = rng.gen();
        let text = if roll < cfg.noise_fraction {
            // junk: a long repeated run that the rule filters target
            let c = if rng.gen::<bool>() { '!' } else { 'z' };
            c.to_string().repeat(rng.gen_range(30..80))
        } else if roll < cfg.noise_fraction + cfg.near_dup_fraction && !docs.is_empty() {
            // near-duplicate of a random earlier document with one
            // word appended
            let j = rng.gen_range(0..docs.len());
            let extra = &latin[zipf_index(&mut rng, latin.len())];
            format!("{} {extra}", docs[j].text)
        } else {
            let words = if rng.gen::<f64>() < cfg.hangul_ratio {
                &hangul
            } else {
                &latin
            };
            let len = rng.gen_range(cfg.min_words..=cfg.max_words);
            sentence(&mut rng, words, len)
        };
        let lang = if text.chars().any(|c| ('\u{AC00}'..='\u{D7A3}').contains(&c)) {
            "hangul"
        } else {
            "latin"
        };
        docs.push(Document::new(format!("fix-{i:06}"), &text, lang));
    }
    docs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_bilingual() {
        let cfg = FixtureConfig {
            docs: 100,
            seed: 7,
            ..FixtureConfig::default()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.docs, b.docs);
        assert_eq!(a.len(), 100);
        let hangul = a.iter().filter(|d| d.source == "hangul").count();
        assert!(hangul > 20 && hangul < 80);
    }

    #[test]
    fn injections_show_up() {
        let cfg = FixtureConfig {
            docs: 200,
            seed: 1,
            near_dup_fraction: 0.2,
            noise_fraction: 0.1,
            ..FixtureConfig::default()
        };
        let c = generate(&cfg);
        let junk = c
            .iter()
            .filter(|d| d.text.starts_with("!!") || d.text.starts_with("zz"))
            .count();
        assert!(junk > 5);
        // near-duplicates share long prefixes with an earlier doc
        let texts: Vec<&str> = c.iter().map(|d| d.text.as_str()).collect();
        let near = texts
            .iter()
            .enumerate()
            .filter(|(i, t)| texts[..*i].iter().any(|p| t.starts_with(p) && t.len() > p.len()))
            .count();
        assert!(near > 10);
    }
}
