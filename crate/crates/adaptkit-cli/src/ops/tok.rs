//! Tokenizer steps: unigram training, piece refinement, hybrid merge,
//! encoding, vocabulary sweeps, token histograms, and token ratios.

use std::path::{Path, PathBuf};

use adaptkit::tokenizer::{
    complexity_ratios, merge, refine_pieces, token_histogram, token_ratio, train_unigram,
    PieceFilterRules, SweepMode, UnigramTrainerConfig,
};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{read_corpus, read_vocab, write_vocab};
use crate::ops::{resolve_path, resolve_paths, write_json_report, StepOp};

// --------------------------------------------------------------- train

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TokTrain {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Total vocabulary size (controls + bytes + regular pieces).
    #[arg(long, default_value_t = 1000)]
    #[serde(default = "TokTrain::d_target")]
    pub target_vocab: usize,
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    pub no_byte_fallback: bool,
    #[arg(long, default_value_t = 8)]
    #[serde(default = "TokTrain::d_max_chars")]
    pub max_piece_chars: usize,
    #[arg(long, default_value_t = 2)]
    #[serde(default = "TokTrain::d_em")]
    pub em_iters: usize,
}

impl TokTrain {
    fn d_target() -> usize {
        1000
    }
    fn d_max_chars() -> usize {
        8
    }
    fn d_em() -> usize {
        2
    }

    fn trainer(&self) -> UnigramTrainerConfig {
        UnigramTrainerConfig {
            target_vocab: self.target_vocab,
            byte_fallback: !self.no_byte_fallback,
            max_piece_chars: self.max_piece_chars,
            em_iters: self.em_iters,
            ..UnigramTrainerConfig::default()
        }
    }
}

impl StepOp for TokTrain {
    const KIND: &'static str = "tok-train";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.input, base);
        resolve_path(&mut self.out, base);
    }

    fn param_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.target_vocab < 5 {
            errs.push("target_vocab is too small".into());
        }
        if self.max_piece_chars == 0 {
            errs.push("max_piece_chars must be ≥ 1".into());
        }
        errs
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }

    fn run(&self) -> Result<String> {
        let corpus = read_corpus(&self.input)?;
        let model = train_unigram(&corpus, &self.trainer())?;
        write_vocab(&self.out, &model)?;
        Ok(format!(
            "trained {}-piece vocabulary -> {}",
            model.vocab_size(),
            self.out.display()
        ))
    }
}

// -------------------------------------------------------------- refine

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TokRefine {
    #[arg(long)]
    pub vocab: PathBuf,
    /// Corpus used for frequency counts and coverage protection.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Inclusive hex codepoint ranges, e.g. "AC00-D7A3,0020-007E".
    #[arg(long)]
    #[serde(default)]
    pub allowed_ranges: Option<String>,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub min_freq: u64,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub max_len: usize,
    #[arg(long)]
    #[serde(default)]
    pub deny: Vec<String>,
    #[arg(long)]
    #[serde(default)]
    pub add: Vec<String>,
    #[arg(long)]
    #[serde(default)]
    pub report: Option<PathBuf>,
}

fn parse_ranges(spec: &str) -> std::result::Result<Vec<(u32, u32)>, String> {
    spec.split(',')
        .map(|r| {
            let (lo, hi) = r
                .trim()
                .split_once('-')
                .ok_or_else(|| format!("range {r:?} must be LO-HI"))?;
            let lo = u32::from_str_radix(lo.trim(), 16).map_err(|e| format!("{r:?}: {e}"))?;
            let hi = u32::from_str_radix(hi.trim(), 16).map_err(|e| format!("{r:?}: {e}"))?;
            Ok((lo, hi))
        })
        .collect()
}

impl TokRefine {
    fn rules(&self) -> std::result::Result<PieceFilterRules, String> {
        let allowed_ranges = match &self.allowed_ranges {
            Some(spec) => parse_ranges(spec)?,
            None => Vec::new(),
        };
        let rules = PieceFilterRules {
            allowed_ranges,
            min_corpus_freq: self.min_freq,
            max_piece_len: self.max_len,
            manual_deny: self.deny.clone(),
            manual_add: self.add.clone(),
        };
        rules.validate().map_err(|e| e.to_string())?;
        Ok(rules)
    }
}

impl StepOp for TokRefine {
    const KIND: &'static str = "tok-refine";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.vocab, base);
        resolve_path(&mut self.corpus, base);
        resolve_path(&mut self.out, base);
        if let Some(r) = &mut self.report {
            resolve_path(r, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        match self.rules() {
            Ok(_) => Vec::new(),
            Err(e) => vec![e],
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.vocab.clone(), self.corpus.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        let mut o = vec![self.out.clone()];
        o.extend(self.report.clone());
        o
    }

    fn run(&self) -> Result<String> {
        let model = read_vocab(&self.vocab)?;
        let corpus = read_corpus(&self.corpus)?;
        let rules = self.rules().map_err(CliError::validation)?;
        let (refined, report) = refine_pieces(&model, &rules, &corpus)?;
        write_vocab(&self.out, &refined)?;
        if let Some(path) = &self.report {
            write_json_report(path, &report)?;
        }
        Ok(format!(
            "removed {}, added {}, {} collisions; {} pieces -> {}",
            report.removed.len(),
            report.added.len(),
            report.collisions.len(),
            refined.vocab_size(),
            self.out.display()
        ))
    }
}

// --------------------------------------------------------------- merge

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TokMerge {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub new: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl StepOp for TokMerge {
    const KIND: &'static str = "tok-merge";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.base, base);
        resolve_path(&mut self.new, base);
        resolve_path(&mut self.out, base);
    }

    fn param_errors(&self) -> Vec<String> {
        Vec::new()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.base.clone(), self.new.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![self.out.clone()]
    }

    fn run(&self) -> Result<String> {
        let base = read_vocab(&self.base)?;
        let new = read_vocab(&self.new)?;
        let (merged, overlap) = merge(&base, &new)?;
        write_vocab(&self.out, &merged)?;
        Ok(format!(
            "merged {} + {} -> {} pieces ({overlap} token overlap)",
            base.vocab_size(),
            new.vocab_size(),
            merged.vocab_size()
        ))
    }
}

// -------------------------------------------------------------- encode

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TokEncode {
    #[arg(long)]
    pub vocab: PathBuf,
    /// Text to encode (mutually exclusive with --file).
    #[arg(long)]
    #[serde(default)]
    pub text: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Print piece strings instead of ids.
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    pub pieces: bool,
}

impl StepOp for TokEncode {
    const KIND: &'static str = "tok-encode";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.vocab, base);
        if let Some(f) = &mut self.file {
            resolve_path(f, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        match (&self.text, &self.file) {
            (Some(_), None) | (None, Some(_)) => Vec::new(),
            _ => vec!["exactly one of text and file is required".into()],
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut i = vec![self.vocab.clone()];
        i.extend(self.file.clone());
        i
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![]
    }

    fn run(&self) -> Result<String> {
        let model = read_vocab(&self.vocab)?;
        let text = match (&self.text, &self.file) {
            (Some(t), None) => t.clone(),
            (None, Some(f)) => std::fs::read_to_string(f)?,
            _ => return Err(CliError::validation("exactly one of text and file")),
        };
        let ids = model.encode(&text);
        let rendered: Vec<String> = if self.pieces {
            ids.iter()
                .map(|&id| model.pieces()[id as usize].piece.clone())
                .collect()
        } else {
            ids.iter().map(|id| id.to_string()).collect()
        };
        Ok(rendered.join(" "))
    }
}

// --------------------------------------------------------------- sweep

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TokSweep {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Ascending total vocabulary sizes.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// "nested" (prune one max-size model) or "retrain".
    #[arg(long, default_value = "nested")]
    #[serde(default = "TokSweep::d_mode")]
    pub mode: String,
    #[arg(long, default_value_t = 128)]
    #[serde(default = "TokSweep::d_dim")]
    pub embed_dim: usize,
    /// Optional tab-separated output table.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl TokSweep {
    fn d_mode() -> String {
        "nested".into()
    }
    fn d_dim() -> usize {
        128
    }

    fn sweep_mode(&self) -> std::result::Result<SweepMode, String> {
        match self.mode.as_str() {
            "nested" => Ok(SweepMode::Nested),
            "retrain" => Ok(SweepMode::Retrain),
            other => Err(format!("unknown sweep mode {other:?} (nested|retrain)")),
        }
    }
}

impl StepOp for TokSweep {
    const KIND: &'static str = "tok-sweep";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.base, base);
        resolve_path(&mut self.corpus, base);
        if let Some(o) = &mut self.out {
            resolve_path(o, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.sweep_mode() {
            errs.push(e);
        }
        if self.sizes.is_empty() {
            errs.push("sizes must not be empty".into());
        }
        if self.sizes.windows(2).any(|w| w[1] < w[0]) {
            errs.push("sizes must be ascending".into());
        }
        if self.embed_dim == 0 {
            errs.push("embed_dim must be ≥ 1".into());
        }
        errs
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.base.clone(), self.corpus.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        self.out.clone().into_iter().collect()
    }

    fn run(&self) -> Result<String> {
        let base = read_vocab(&self.base)?;
        let corpus = read_corpus(&self.corpus)?;
        let mode = self.sweep_mode().map_err(CliError::validation)?;
        let report = adaptkit::tokenizer::vocab_sweep(
            &corpus,
            &base,
            &self.sizes,
            self.embed_dim,
            &UnigramTrainerConfig::default(),
            mode,
        )?;
        let mut table = String::from("size\tmerged_vocab\tric\trec\n");
        for row in &report.rows {
            table.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\n",
                row.size, row.merged_vocab, row.ric, row.rec
            ));
        }
        if let Some(path) = &self.out {
            std::fs::write(path, &table)?;
        }
        let knee = report
            .chosen_size
            .map(|s| format!("knee point at size {s}"))
            .unwrap_or_else(|| "no knee point found".into());
        Ok(format!("{table}{knee}"))
    }
}

// ---------------------------------------------------------------- hist

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TokHist {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Optional tab-separated output (id, piece, count).
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Print only the top N rows (0 = all).
    #[arg(long, default_value_t = 20)]
    #[serde(default = "TokHist::d_top")]
    pub top: usize,
}

impl TokHist {
    fn d_top() -> usize {
        20
    }
}

impl StepOp for TokHist {
    const KIND: &'static str = "tok-hist";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.vocab, base);
        resolve_path(&mut self.corpus, base);
        if let Some(o) = &mut self.out {
            resolve_path(o, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        Vec::new()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.vocab.clone(), self.corpus.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        self.out.clone().into_iter().collect()
    }

    fn run(&self) -> Result<String> {
        let model = read_vocab(&self.vocab)?;
        let corpus = read_corpus(&self.corpus)?;
        let counts = token_histogram(&model, &corpus);
        let mut rows: Vec<(u32, u64)> = counts
            .iter()
            .enumerate()
            .map(|(id, &c)| (id as u32, c))
            .collect();
        if let Some(path) = &self.out {
            let mut table = String::from("id\tpiece\tcount\n");
            for (id, c) in &rows {
                table.push_str(&format!(
                    "{id}\t{}\t{c}\n",
                    model.pieces()[*id as usize].piece.escape_default()
                ));
            }
            std::fs::write(path, table)?;
        }
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let shown = if self.top > 0 {
            rows.len().min(self.top)
        } else {
            rows.len()
        };
        let lines: Vec<String> = rows[..shown]
            .iter()
            .filter(|(_, c)| *c > 0)
            .map(|(id, c)| {
                format!(
                    "{c:>8}  {}",
                    model.pieces()[*id as usize].piece.escape_default()
                )
            })
            .collect();
        Ok(lines.join("\n"))
    }
}

// --------------------------------------------------------------- ratio

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TokRatio {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub new: PathBuf,
    /// Evaluation datasets (corpus files).
    #[arg(long, required = true, num_args = 1..)]
    pub datasets: Vec<PathBuf>,
    #[arg(long, default_value_t = 128)]
    #[serde(default = "TokSweep::d_dim")]
    pub embed_dim: usize,
}

impl StepOp for TokRatio {
    const KIND: &'static str = "tok-ratio";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.base, base);
        resolve_path(&mut self.new, base);
        resolve_paths(&mut self.datasets, base);
    }

    fn param_errors(&self) -> Vec<String> {
        if self.datasets.is_empty() {
            vec!["datasets must not be empty".into()]
        } else {
            Vec::new()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut i = vec![self.base.clone(), self.new.clone()];
        i.extend(self.datasets.clone());
        i
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![]
    }

    fn run(&self) -> Result<String> {
        let base = read_vocab(&self.base)?;
        let new = read_vocab(&self.new)?;
        let corpora: Vec<(String, adaptkit::corpus::Corpus)> = self
            .datasets
            .iter()
            .map(|p| {
                read_corpus(p).map(|c| {
                    (
                        p.file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_default(),
                        c,
                    )
                })
            })
            .collect::<Result<_>>()?;
        let refs: Vec<(String, &adaptkit::corpus::Corpus)> =
            corpora.iter().map(|(n, c)| (n.clone(), c)).collect();
        let report = token_ratio(&new, &base, &refs)?;
        let mut out = String::new();
        for (name, tr) in &report.per_dataset {
            out.push_str(&format!("{name}\ttr {tr:.4}\n"));
        }
        out.push_str(&format!("average tr {:.4}", report.average_tr));

        // also surface RIC/REC on the union of the datasets
        let union: adaptkit::corpus::Corpus = corpora
            .iter()
            .flat_map(|(_, c)| c.iter().cloned())
            .collect();
        let cx = complexity_ratios(&new, &base, &union, self.embed_dim)?;
        out.push_str(&format!("\nric {:.4}  rec {:.4}", cx.ric, cx.rec));
        Ok(out)
    }
}
