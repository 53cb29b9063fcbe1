//! Training steps: base pretraining, single freeze-schedule stages,
//! full staged recipes on an extended model, and checkpoint evaluation.

use std::path::{Path, PathBuf};

use adaptkit::embed_init::InitSpec;
use adaptkit::model::{build_model, lora_attach, lora_merge, LoraConfig, ModelConfig};
use adaptkit::train::{
    assemble_extended, evaluate_packed, pack, pretrain, run_pipeline, train_stage, AdamWConfig,
    PipelineConfig, Recipe, StageName, StagePlan, StageReport,
};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{
    append_metrics, read_checkpoint, read_corpus, read_vocab, sha256_bytes, write_checkpoint,
};
use crate::ops::{resolve_path, write_json_report, StepOp};

/// Stable checkpoint config hash: SHA-256 of the config's canonical
/// JSON encoding.
fn config_hash(cfg: &ModelConfig) -> Result<[u8; 32]> {
    Ok(sha256_bytes(&serde_json::to_vec(cfg)?))
}

/// Load a checkpoint and verify its stored config hash against the
/// configuration it carries, catching corrupted or incompatible files.
fn read_checked_checkpoint(path: &Path) -> Result<crate::formats::Checkpoint> {
    let ckpt = read_checkpoint(path)?;
    if ckpt.config_hash != config_hash(&ckpt.params.cfg)? {
        return Err(CliError::validation(format!(
            "{}: checkpoint config hash mismatch",
            path.display()
        )));
    }
    Ok(ckpt)
}

fn write_stage_metrics(path: &Option<PathBuf>, reports: &[&StageReport]) -> Result<()> {
    if let Some(path) = path {
        // start fresh so re-running a step replaces its timeline
        crate::formats::create(path)?;
        for r in reports {
            append_metrics(path, &r.metrics)?;
        }
    }
    Ok(())
}

fn summarize_eval(eval: Option<(f64, f64)>) -> String {
    match eval {
        Some((loss, acc)) => format!("eval loss {loss:.4} (ppl {:.2}), acc {acc:.4}", loss.exp()),
        None => "no eval".into(),
    }
}

// ------------------------------------------------------- pretrain-base

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainPretrainBase {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    #[serde(default = "TrainPretrainBase::d_dim")]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    #[serde(default = "TrainPretrainBase::d_layers")]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    #[serde(default = "TrainPretrainBase::d_heads")]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    #[serde(default = "TrainPretrainBase::d_context")]
    pub context: usize,
    #[arg(long, default_value_t = 200)]
    #[serde(default = "TrainPretrainBase::d_steps")]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    #[serde(default = "TrainPretrainBase::d_lr")]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
}

impl TrainPretrainBase {
    fn d_dim() -> usize {
        64
    }
    fn d_layers() -> usize {
        2
    }
    fn d_heads() -> usize {
        2
    }
    fn d_context() -> usize {
        64
    }
    fn d_steps() -> usize {
        200
    }
    fn d_lr() -> f64 {
        1e-3
    }

    fn model_cfg(&self, vocab: usize) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            layers: self.layers,
            heads: self.heads,
            context: self.context,
            ..ModelConfig::with_vocab(vocab)
        }
    }
}

impl StepOp for TrainPretrainBase {
    const KIND: &'static str = "train-pretrain-base";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.corpus, base);
        resolve_path(&mut self.vocab, base);
        resolve_path(&mut self.out, base);
        if let Some(e) = &mut self.eval {
            resolve_path(e, base);
        }
        if let Some(m) = &mut self.metrics {
            resolve_path(m, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        // validate with a placeholder vocab; the real one is read at run time
        if let Err(e) = self.model_cfg(256).validate() {
            errs.push(e.to_string());
        }
        if self.steps == 0 {
            errs.push("steps must be ≥ 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            errs.push("lr must be positive".into());
        }
        errs
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut i = vec![self.corpus.clone(), self.vocab.clone()];
        i.extend(self.eval.clone());
        i
    }

    fn outputs(&self) -> Vec<PathBuf> {
        let mut o = vec![self.out.clone()];
        o.extend(self.metrics.clone());
        o
    }

    fn run(&self) -> Result<String> {
        let corpus = read_corpus(&self.corpus)?;
        let tok = read_vocab(&self.vocab)?;
        let cfg = self.model_cfg(tok.vocab_size());
        let mut params = build_model(&cfg, self.seed)?;
        let train = pack(&corpus, &tok, cfg.context);
        let eval = match &self.eval {
            Some(p) => pack(&read_corpus(p)?, &tok, cfg.context),
            None => Vec::new(),
        };
        let report = pretrain(&mut params, &train, &eval, self.steps, self.lr, self.seed)?;
        write_checkpoint(&self.out, &params, &config_hash(&cfg)?, self.steps as u64)?;
        write_stage_metrics(&self.metrics, &[&report])?;
        Ok(format!(
            "pretrained {} steps on {} samples; {}",
            report.steps_run,
            train.len(),
            summarize_eval(report.final_eval)
        ))
    }
}

// --------------------------------------------------------------- stage

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainStage {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    /// new_embed_head | embed_head | odd_layers | even_layers |
    /// lora_all | full
    #[arg(long)]
    pub stage: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    #[serde(default = "TrainStage::d_steps")]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    #[serde(default = "TrainPretrainBase::d_lr")]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    #[serde(default = "TrainStage::d_batch")]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 3)]
    #[serde(default = "TrainStage::d_patience")]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
}

impl TrainStage {
    fn d_steps() -> usize {
        100
    }
    fn d_batch() -> usize {
        16
    }
    fn d_patience() -> usize {
        3
    }

    fn stage_name(&self) -> std::result::Result<StageName, String> {
        self.stage.parse::<StageName>().map_err(|e| e.to_string())
    }
}

impl StepOp for TrainStage {
    const KIND: &'static str = "train-stage";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.ckpt, base);
        resolve_path(&mut self.corpus, base);
        resolve_path(&mut self.vocab, base);
        resolve_path(&mut self.out, base);
        if let Some(e) = &mut self.eval {
            resolve_path(e, base);
        }
        if let Some(m) = &mut self.metrics {
            resolve_path(m, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.stage_name() {
            errs.push(e);
        }
        if self.steps == 0 {
            errs.push("steps must be ≥ 1".into());
        }
        if self.batch == 0 {
            errs.push("batch must be ≥ 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            errs.push("lr must be positive".into());
        }
        errs
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut i = vec![self.ckpt.clone(), self.corpus.clone(), self.vocab.clone()];
        i.extend(self.eval.clone());
        i
    }

    fn outputs(&self) -> Vec<PathBuf> {
        let mut o = vec![self.out.clone()];
        o.extend(self.metrics.clone());
        o
    }

    fn run(&self) -> Result<String> {
        let ckpt = read_checked_checkpoint(&self.ckpt)?;
        let mut params = ckpt.params;
        let tok = read_vocab(&self.vocab)?;
        if tok.vocab_size() != params.cfg.vocab {
            return Err(CliError::validation(format!(
                "vocabulary size {} does not match model vocab {}",
                tok.vocab_size(),
                params.cfg.vocab
            )));
        }
        let stage = self.stage_name().map_err(CliError::validation)?;
        let corpus = read_corpus(&self.corpus)?;
        let train = pack(&corpus, &tok, params.cfg.context);
        let eval = match &self.eval {
            Some(p) => pack(&read_corpus(p)?, &tok, params.cfg.context),
            None => Vec::new(),
        };

        // checkpoints never carry adapters, so an adapter stage
        // attaches fresh ones here and folds them back in before saving
        let lora_stage = stage == StageName::LoraAll;
        if lora_stage {
            lora_attach(&mut params, &LoraConfig::default(), self.seed ^ 0xADA9)?;
        }
        let plan = StagePlan {
            batch: self.batch,
            eval_every: self.eval_every,
            early_stop_patience: self.patience,
            ..StagePlan::new(stage, self.lr, self.steps)
        };
        let report = train_stage(
            &mut params,
            &train,
            &eval,
            &plan,
            &AdamWConfig::default(),
            self.seed,
        )?;
        if lora_stage {
            lora_merge(&mut params)?;
        }
        let step = ckpt.step + report.steps_run as u64;
        write_checkpoint(&self.out, &params, &config_hash(&params.cfg)?, step)?;
        write_stage_metrics(&self.metrics, &[&report])?;
        Ok(format!(
            "stage {} ran {} steps (trainable fraction {:.4}); {}",
            stage.name(),
            report.steps_run,
            report.trainable_fraction,
            summarize_eval(report.final_eval)
        ))
    }
}

// ------------------------------------------------------------ pipeline

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainPipeline {
    /// Pretrained base-model checkpoint (base vocabulary).
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub base_vocab: PathBuf,
    #[arg(long)]
    pub merged_vocab: PathBuf,
    /// Adaptation training corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub eval: Option<PathBuf>,
    /// ex1 | ex2
    #[arg(long, default_value = "ex2")]
    #[serde(default = "TrainPipeline::d_recipe")]
    pub recipe: String,
    /// Initialization method for the new rows.
    #[arg(long, default_value = "decomp_eh")]
    #[serde(default = "TrainPipeline::d_method")]
    pub method: String,
    #[arg(long, default_value_t = 100)]
    #[serde(default = "TrainStage::d_steps")]
    pub total_steps: usize,
    #[arg(long, default_value_t = 16)]
    #[serde(default = "TrainStage::d_batch")]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-3)]
    #[serde(default = "TrainPipeline::d_lr_high")]
    pub lr_high: f64,
    #[arg(long, default_value_t = 1.5e-4)]
    #[serde(default = "TrainPipeline::d_lr_low")]
    pub lr_low: f64,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl TrainPipeline {
    fn d_recipe() -> String {
        "ex2".into()
    }
    fn d_method() -> String {
        "decomp_eh".into()
    }
    fn d_lr_high() -> f64 {
        1e-3
    }
    fn d_lr_low() -> f64 {
        1.5e-4
    }

    fn recipe_name(&self) -> std::result::Result<Recipe, String> {
        self.recipe.parse::<Recipe>().map_err(|e| e.to_string())
    }
}

impl StepOp for TrainPipeline {
    const KIND: &'static str = "train-pipeline";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.ckpt, base);
        resolve_path(&mut self.base_vocab, base);
        resolve_path(&mut self.merged_vocab, base);
        resolve_path(&mut self.corpus, base);
        resolve_path(&mut self.out, base);
        if let Some(e) = &mut self.eval {
            resolve_path(e, base);
        }
        if let Some(m) = &mut self.metrics {
            resolve_path(m, base);
        }
        if let Some(r) = &mut self.report {
            resolve_path(r, base);
        }
    }

    fn param_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.recipe_name() {
            errs.push(e);
        }
        if let Err(e) = self.method.parse::<adaptkit::embed_init::InitMethod>() {
            errs.push(e.to_string());
        }
        if self.total_steps == 0 {
            errs.push("total_steps must be ≥ 1".into());
        }
        if self.batch == 0 {
            errs.push("batch must be ≥ 1".into());
        }
        for (name, lr) in [("lr_high", self.lr_high), ("lr_low", self.lr_low)] {
            if !(lr.is_finite() && lr > 0.0) {
                errs.push(format!("{name} must be positive"));
            }
        }
        errs
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut i = vec![
            self.ckpt.clone(),
            self.base_vocab.clone(),
            self.merged_vocab.clone(),
            self.corpus.clone(),
        ];
        i.extend(self.eval.clone());
        i
    }

    fn outputs(&self) -> Vec<PathBuf> {
        let mut o = vec![self.out.clone()];
        o.extend(self.metrics.clone());
        o.extend(self.report.clone());
        o
    }

    fn run(&self) -> Result<String> {
        let ckpt = read_checked_checkpoint(&self.ckpt)?;
        let base_tok = read_vocab(&self.base_vocab)?;
        let merged_tok = read_vocab(&self.merged_vocab)?;
        let corpus = read_corpus(&self.corpus)?;
        let spec = InitSpec {
            method: self
                .method
                .parse()
                .map_err(|e: adaptkit::Error| CliError::validation(e.to_string()))?,
            ..InitSpec::default()
        };
        let (mut params, init_report) =
            assemble_extended(&ckpt.params, &base_tok, &merged_tok, &spec, self.seed)?;
        let train = pack(&corpus, &merged_tok, params.cfg.context);
        let eval = match &self.eval {
            Some(p) => pack(&read_corpus(p)?, &merged_tok, params.cfg.context),
            None => Vec::new(),
        };
        let cfg = PipelineConfig {
            batch: self.batch,
            eval_every: self.eval_every,
            early_stop_patience: self.patience,
            lr_high: self.lr_high,
            lr_low: self.lr_low,
            ..PipelineConfig::new(
                self.recipe_name().map_err(CliError::validation)?,
                self.total_steps,
                self.seed,
            )
        };
        let report = run_pipeline(&mut params, &train, &eval, &cfg)?;
        write_checkpoint(
            &self.out,
            &params,
            &config_hash(&params.cfg)?,
            ckpt.step + self.total_steps as u64,
        )?;
        let refs: Vec<&StageReport> = report.stages.iter().collect();
        write_stage_metrics(&self.metrics, &refs)?;
        if let Some(path) = &self.report {
            write_json_report(path, &report)?;
        }
        let post = summarize_eval(report.post_init_eval);
        let fin = summarize_eval(report.final_eval);
        Ok(format!(
            "{} recipe, {} init ({} fallbacks): post-init {post}; final {fin}",
            cfg.recipe.name(),
            spec.method.name(),
            init_report.decomposition_fallbacks.len()
        ))
    }
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainEval {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
}

impl StepOp for TrainEval {
    const KIND: &'static str = "train-eval";

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.ckpt, base);
        resolve_path(&mut self.corpus, base);
        resolve_path(&mut self.vocab, base);
    }

    fn param_errors(&self) -> Vec<String> {
        Vec::new()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.ckpt.clone(), self.corpus.clone(), self.vocab.clone()]
    }

    fn outputs(&self) -> Vec<PathBuf> {
        vec![]
    }

    fn run(&self) -> Result<String> {
        let ckpt = read_checked_checkpoint(&self.ckpt)?;
        let tok = read_vocab(&self.vocab)?;
        if tok.vocab_size() != ckpt.params.cfg.vocab {
            return Err(CliError::validation(format!(
                "vocabulary size {} does not match model vocab {}",
                tok.vocab_size(),
                ckpt.params.cfg.vocab
            )));
        }
        let corpus = read_corpus(&self.corpus)?;
        let samples = pack(&corpus, &tok, ckpt.params.cfg.context);
        let (loss, acc) = evaluate_packed(&ckpt.params, &samples)?;
        Ok(format!(
            "{} samples: loss {loss:.4}, ppl {:.2}, acc {acc:.4}",
            samples.len(),
            loss.exp()
        ))
    }
}
