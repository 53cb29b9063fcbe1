//! Embedding/head initialization steps: extend stored matrices to a
//! merged vocabulary and compare initialization methods on held-out
//! text.

use std::path::{Path, PathBuf};

use adaptkit::embed_init::{extend_vocab, InitMethod, InitSpec};
use adaptkit::train::init_compare;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{read_checkpoint, read_corpus, read_matrix, read_vocab, write_matrix};
use crate::ops::{resolve_path, write_json_report, StepOp};

fn parse_method(name: &str) -> std::result::Result<InitMethod, String> {
    name.parse::<InitMethod>().map_err(|e| e.to_string())
}

// -------------------------------------------------------------- extend

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InitExtend {
    /// Input embedding matrix (EMB1).
    #[arg(long)]
    pub embed: PathBuf,
    /// Input LM-head matrix (EMB1).
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub base_vocab: PathBuf,
    #[arg(long)]
    pub merged_vocab: PathBuf,
    /// random | avg_e | decomp_e | avg_eh | decomp_eh
    #[arg(long, default_value = "decomp_eh")]
    #[serde(default = "InitExtend::d_method")]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Sample new rows from a Gaussian fitted around the average
    /// instead of using the average itself.
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    pub sampled: bool,
    #[arg(long)]
    pub out_embed: PathBuf,
    #[arg(long)]
    pub out_head: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl InitExtend {
    fn d_method() -> String {
        "decomp_eh".into()
    }

    fn spec(&self) -> std::result::Result<InitSpec, String> {
        Ok(InitSpec {
            method: parse_method(&self.method)?,
            sampled_variant: self.sampled,
            ..InitSpec::default()
        })
    }
}

impl StepOp for InitExtend {
    const KIND: &'static str = "init-extend";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.embed, base);
        resolve_path(&mut self.head, base);
        resolve_path(&mut self.base_vocab, base);
        resolve_path(&mut self.merged_vocab, base);
        resolve_path(&mut self.out_embed, base);
        resolve_path(&mut self.out_head, base);
        if let Some(r) = &mut self.report {
            resolve_path(r, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        match self.spec() {
            Ok(_) => Vec::new(),
            Err(e) => vec![e],
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![
            self.embed.clone(),
            self.head.clone(),
            self.base_vocab.clone(),
            self.merged_vocab.clone(),
        ]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        let mut o = vec![self.out_embed.clone(), self.out_head.clone()];
        o.extend(self.report.clone());
        o
    }

    fn run(&self) -> Result<String> {
        let e = read_matrix(&self.embed)?;
        let h = read_matrix(&self.head)?;
        let base_tok = read_vocab(&self.base_vocab)?;
        let merged_tok = read_vocab(&self.merged_vocab)?;
        let spec = self.spec().map_err(CliError::validation)?;
        let (e2, h2, part, report) =
            extend_vocab(&e, &h, &base_tok, &merged_tok, &spec, self.seed)?;
        write_matrix(&self.out_embed, &e2)?;
        write_matrix(&self.out_head, &h2)?;
        if let Some(path) = &self.report {
            write_json_report(path, &report)?;
        }
        Ok(format!(
            "extended {} -> {} rows ({} new, {} decomposition fallbacks)",
            part.pretrained_len,
            part.total_len,
            part.new_ids().len(),
            report.decomposition_fallbacks.len()
        ))
    }
}

// ------------------------------------------------------------- compare

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InitCompare {
    /// Pretrained base-model checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub base_vocab: PathBuf,
    #[arg(long)]
    pub merged_vocab: PathBuf,
    #[arg(long)]
    pub eval_corpus: PathBuf,
    /// Methods to compare (default: all five).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    #[serde(default)]
    pub methods: Vec<String>,
    /// Number of seeds (0, 1, ..., n-1) averaged per method.
    #[arg(long, default_value_t = 10)]
    #[serde(default = "InitCompare::d_seeds")]
    pub seeds: u64,
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    pub sampled: bool,
    /// Optional JSON output of the full comparison rows.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl InitCompare {
    fn d_seeds() -> u64 {
        10
    }

    fn method_list(&self) -> std::result::Result<Vec<InitMethod>, String> {
        if self.methods.is_empty() {
            Ok(InitMethod::ALL.to_vec())
        } else {
            self.methods.iter().map(|m| parse_method(m)).collect()
        }
    }
}

impl StepOp for InitCompare {
    const KIND: &'static str = "init-compare";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.ckpt, base);
        resolve_path(&mut self.base_vocab, base);
        resolve_path(&mut self.merged_vocab, base);
        resolve_path(&mut self.eval_corpus, base);
        if let Some(o) = &mut self.out {
            resolve_path(o, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.method_list() {
            errs.push(e);
        }
        if self.seeds == 0 {
            errs.push("seeds must be ≥ 1".into());
        }
        errs
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![
            self.ckpt.clone(),
            self.base_vocab.clone(),
            self.merged_vocab.clone(),
            self.eval_corpus.clone(),
        ]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        self.out.clone().into_iter().collect()
    }

    fn run(&self) -> Result<String> {
        let ckpt = read_checkpoint(&self.ckpt)?;
        let base_tok = read_vocab(&self.base_vocab)?;
        let merged_tok = read_vocab(&self.merged_vocab)?;
        let corpus = read_corpus(&self.eval_corpus)?;
        let methods = self.method_list().map_err(CliError::validation)?;
        let seeds: Vec<u64> = (0..self.seeds).collect();
        let spec = InitSpec {
            sampled_variant: self.sampled,
            ..InitSpec::default()
        };
        let rows = init_compare(
            &ckpt.params,
            &base_tok,
            &merged_tok,
            &corpus,
            &methods,
            &seeds,
            &spec,
        )?;
        if let Some(path) = &self.out {
            write_json_report(path, &rows)?;
        }
        let mut table = String::from("method      mean_loss  mean_acc\n");
        for row in &rows {
            table.push_str(&format!(
                "{:<11} {:>9.4}  {:>8.4}\n",
                row.method.name(),
                row.mean_loss,
                row.mean_accuracy
            ));
        }
        Ok(table.trim_end().to_string())
    }
}
