//! Corpus-refinement steps: fixture generation, ingestion, random
//! selection, rule filtering, near-duplicate removal, perplexity
//! filtering, and stats.

use std::path::{Path, PathBuf};

use adaptkit::corpus::{
    corpus_stats, dedup, ppl_filter, rule_filter, random_select, train_ppl_lm, DedupConfig,
    FilterMode, Rule,
};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fixture::{generate, FixtureConfig};
use crate::formats::{read_corpus, read_vocab, write_corpus};
use crate::ingest;
use crate::ops::{resolve_path, resolve_paths, write_json_report, StepOp};

fn d_seed() -> u64 {
    0
}

// ------------------------------------------------------------- fixture

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FixtureGen {
    /// Output corpus file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    #[serde(default = "FixtureGen::d_docs")]
    pub docs: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Fraction of documents in the Hangul adaptation language.
    #[arg(long, default_value_t = 0.5)]
    #[serde(default = "FixtureGen::d_half")]
    pub hangul_ratio: f64,
    #[arg(long, default_value_t = 0.0)]
    #[serde(default)]
    pub near_dup_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    #[serde(default)]
    pub noise_fraction: f64,
}

impl FixtureGen {
    fn d_docs() -> usize {
        200
    }
    fn d_half() -> f64 {
        0.5
    }
}

impl StepOp for FixtureGen {
    const KIND: &'static str = "fixture-gen";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.out, base);
    }

    fn param_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("hangul_ratio", self.hangul_ratio),
            ("near_dup_fraction", self.near_dup_fraction),
            ("noise_fraction", self.noise_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("{name} must be in [0, 1]"));
            }
        }
        if self.docs == 0 {
            errs.push("docs must be ≥ 1".into());
        }
        errs
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }

    fn run(&self) -> Result<String> {
        let cfg = FixtureConfig {
            docs: self.docs,
            seed: self.seed,
            hangul_ratio: self.hangul_ratio,
            near_dup_fraction: self.near_dup_fraction,
            noise_fraction: self.noise_fraction,
            ..FixtureConfig::default()
        };
        let corpus = generate(&cfg);
        write_corpus(&self.out, &corpus)?;
        Ok(format!(
            "generated {} synthetic documents -> {}",
            corpus.len(),
            self.out.display()
        ))
    }
}

// -------------------------------------------------------------- ingest

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusIngest {
    /// Raw UTF-8 text files, one document per line.
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

impl StepOp for CorpusIngest {
    const KIND: &'static str = "corpus-ingest";

    fn resolve(&mut self, base: &Path) {
        resolve_paths(&mut self.inputs, base);
        resolve_path(&mut self.out, base);
    }

    fn param_errors(&self) -> Vec<String> {
        if self.inputs.is_empty() {
            vec!["inputs must not be empty".into()]
        } else {
            Vec::new()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.inputs.clone()
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }

    fn run(&self) -> Result<String> {
        let (corpus, report) = ingest::ingest(&self.inputs)?;
        write_corpus(&self.out, &corpus)?;
        Ok(format!(
            "ingested {} documents ({} invalid UTF-8 rejected, {} empty skipped) -> {}",
            report.ingested,
            report.invalid_utf8,
            report.empty,
            self.out.display()
        ))
    }
}

// -------------------------------------------------------------- select

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusSelect {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of documents to keep, in (0, 1].
    #[arg(long)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl StepOp for CorpusSelect {
    const KIND: &'static str = "corpus-select";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.input, base);
        resolve_path(&mut self.out, base);
    }

    fn param_errors(&self) -> Vec<String> {
        if self.fraction > 0.0 && self.fraction <= 1.0 {
            Vec::new()
        } else {
            vec!["fraction must be in (0, 1]".into()]
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }

    fn run(&self) -> Result<String> {
        let corpus = read_corpus(&self.input)?;
        let kept = random_select(&corpus, self.fraction, self.seed)?;
        write_corpus(&self.out, &kept)?;
        Ok(format!("kept {} of {} documents", kept.len(), corpus.len()))
    }
}

// -------------------------------------------------------------- filter

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusFilter {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ordered rules, e.g. min_len=10, max_len=10000,
    /// max_foreign_ratio=hangul:0.5, max_repeat_run=8,
    /// deny_line_pattern=spam|casino.
    #[arg(long, required = true, num_args = 1..)]
    pub rules: Vec<String>,
    #[arg(long)]
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl CorpusFilter {
    fn parsed(&self) -> std::result::Result<Vec<Rule>, adaptkit::Error> {
        self.rules.iter().map(|r| Rule::parse(r)).collect()
    }
}

impl StepOp for CorpusFilter {
    const KIND: &'static str = "corpus-filter";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.input, base);
        resolve_path(&mut self.out, base);
        if let Some(r) = &mut self.report {
            resolve_path(r, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        match self.parsed() {
            Ok(_) => Vec::new(),
            Err(e) => vec![format!("rules: {e}")],
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        let mut o = vec![self.out.clone()];
        o.extend(self.report.clone());
        o
    }

    fn run(&self) -> Result<String> {
        let corpus = read_corpus(&self.input)?;
        let rules = self.parsed()?;
        let (kept, report) = rule_filter(&corpus, &rules);
        write_corpus(&self.out, &kept)?;
        if let Some(path) = &self.report {
            write_json_report(path, &report.rejections)?;
        }
        let mut parts: Vec<String> = report
            .rejections
            .iter()
            .map(|(rule, n)| format!("{rule}: {n}"))
            .collect();
        parts.sort();
        Ok(format!(
            "kept {} of {} documents (rejected per rule: {})",
            kept.len(),
            corpus.len(),
            parts.join(", ")
        ))
    }
}

// --------------------------------------------------------------- dedup

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusDedup {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    #[serde(default = "CorpusDedup::d_threshold")]
    pub threshold: f64,
}

impl CorpusDedup {
    fn d_threshold() -> f64 {
        0.8
    }

    fn config(&self) -> DedupConfig {
        DedupConfig {
            jaccard_threshold: self.threshold,
            ..DedupConfig::default()
        }
    }
}

impl StepOp for CorpusDedup {
    const KIND: &'static str = "corpus-dedup";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.input, base);
        resolve_path(&mut self.out, base);
        if let Some(r) = &mut self.report {
            resolve_path(r, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        match self.config().validate() {
            Ok(()) => Vec::new(),
            Err(e) => vec![e.to_string()],
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        let mut o = vec![self.out.clone()];
        o.extend(self.report.clone());
        o
    }

    fn run(&self) -> Result<String> {
        let corpus = read_corpus(&self.input)?;
        let (kept, report) = dedup(&corpus, &self.config())?;
        write_corpus(&self.out, &kept)?;
        if let Some(path) = &self.report {
            write_json_report(path, &report.clusters)?;
        }
        Ok(format!(
            "kept {} of {} documents ({} duplicate clusters)",
            kept.len(),
            corpus.len(),
            report.clusters.len()
        ))
    }
}

// ----------------------------------------------------------- pplfilter

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusPplfilter {
    #[arg(long)]
    pub input: PathBuf,
    /// Trusted subset used to train the character LM.
    #[arg(long)]
    pub trusted: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// "percentile" (keep lowest N%) or "absolute" (keep ppl ≤ cutoff).
    #[arg(long, default_value = "percentile")]
    #[serde(default = "CorpusPplfilter::d_mode")]
    pub mode: String,
    #[arg(long, default_value_t = 50.0)]
    #[serde(default = "CorpusPplfilter::d_value")]
    pub value: f64,
    #[arg(long, default_value_t = 3)]
    #[serde(default = "CorpusPplfilter::d_order")]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    #[serde(default = "CorpusPplfilter::d_k")]
    pub k: f64,
    #[arg(long)]
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl CorpusPplfilter {
    fn d_mode() -> String {
        "percentile".into()
    }
    fn d_value() -> f64 {
        50.0
    }
    fn d_order() -> usize {
        3
    }
    fn d_k() -> f64 {
        1.0
    }

    fn filter_mode(&self) -> std::result::Result<FilterMode, String> {
        match self.mode.as_str() {
            "percentile" => {
                if self.value > 0.0 && self.value <= 100.0 {
                    Ok(FilterMode::Percentile(self.value))
                } else {
                    Err("percentile value must be in (0, 100]".into())
                }
            }
            "absolute" => {
                if self.value > 0.0 {
                    Ok(FilterMode::Absolute(self.value))
                } else {
                    Err("absolute cutoff must be > 0".into())
                }
            }
            other => Err(format!("unknown mode {other:?} (percentile|absolute)")),
        }
    }
}

impl StepOp for CorpusPplfilter {
    const KIND: &'static str = "corpus-pplfilter";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.input, base);
        resolve_path(&mut self.trusted, base);
        resolve_path(&mut self.out, base);
        if let Some(r) = &mut self.report {
            resolve_path(r, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.filter_mode() {
            errs.push(e);
        }
        if self.order == 0 {
            errs.push("order must be ≥ 1".into());
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            errs.push("k must be > 0".into());
        }
        errs
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone(), self.trusted.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        let mut o = vec![self.out.clone()];
        o.extend(self.report.clone());
        o
    }

    fn run(&self) -> Result<String> {
        let corpus = read_corpus(&self.input)?;
        let trusted = read_corpus(&self.trusted)?;
        let mode = self
            .filter_mode()
            .map_err(crate::error::CliError::validation)?;
        let lm = train_ppl_lm(&trusted, self.order, self.k)?;
        let (kept, report) = ppl_filter(&corpus, &lm, mode)?;
        write_corpus(&self.out, &kept)?;
        if let Some(path) = &self.report {
            write_json_report(path, &report)?;
        }
        Ok(format!(
            "kept {} of {} documents (ppl cutoff {:.3})",
            kept.len(),
            corpus.len(),
            report.cutoff
        ))
    }
}

// --------------------------------------------------------------- stats

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusStats {
    #[arg(long)]
    pub input: PathBuf,
    /// Tokenizer vocabulary for token/sample counts.
    #[arg(long)]
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    #[serde(default = "CorpusStats::d_context")]
    pub context: usize,
}

impl CorpusStats {
    fn d_context() -> usize {
        128
    }
}

impl StepOp for CorpusStats {
    const KIND: &'static str = "corpus-stats";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.input, base);
        if let Some(v) = &mut self.vocab {
            resolve_path(v, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        if self.context == 0 {
            vec!["context must be ≥ 1".into()]
        } else {
            Vec::new()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut i = vec![self.input.clone()];
        i.extend(self.vocab.clone());
        i
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![]
    }

    fn run(&self) -> Result<String> {
        let corpus = read_corpus(&self.input)?;
        let tok = self.vocab.as_deref().map(read_vocab).transpose()?;
        let stats = corpus_stats(&corpus, tok.as_ref(), self.context);
        let mut out = format!("docs {}  bytes {}", stats.docs, stats.total_bytes);
        if let (Some(tokens), Some(samples)) = (stats.total_tokens, stats.samples) {
            out.push_str(&format!(
                "  tokens {tokens}  samples(context {}) {samples}",
                self.context
            ));
        }
        Ok(out)
    }
}
