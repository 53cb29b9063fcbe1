//! Command-line front end for the language-adaptation toolkit:
//! corpus refinement, tokenizer adaptation, embedding initialization,
//! staged training, and reproducible multi-step runs.

mod error;
mod fixture;
mod formats;
mod ingest;
mod ops;
mod runcfg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::ops::corpus::{
    CorpusDedup, CorpusFilter, CorpusIngest, CorpusPplfilter, CorpusSelect, CorpusStats,
    FixtureGen,
};
use crate::ops::init::{InitCompare, InitExtend};
use crate::ops::tok::{TokEncode, TokHist, TokMerge, TokRatio, TokRefine, TokSweep, TokTrain};
use crate::ops::train::{TrainEval, TrainPipeline, TrainPretrainBase, TrainStage};
use crate::ops::StepOp;

#[derive(Parser)]
#[command(
    name = "adaptkit",
    version,
    about = "Language-adaptation toolkit: corpus refinement, tokenizer \
             adaptation, embedding initialization, and staged training"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded synthetic bilingual corpus.
    FixtureGen(FixtureGen),
    /// Ingest raw text files (one document per line) into a corpus.
    CorpusIngest(CorpusIngest),
    /// Randomly select a fraction of a corpus.
    CorpusSelect(CorpusSelect),
    /// Apply rule-based quality filters.
    CorpusFilter(CorpusFilter),
    /// Remove near-duplicate documents (MinHash/LSH).
    CorpusDedup(CorpusDedup),
    /// Filter documents by perplexity under a trusted-corpus language model.
    CorpusPplfilter(CorpusPplfilter),
    /// Print corpus statistics.
    CorpusStats(CorpusStats),
    /// Train a unigram subword tokenizer.
    TokTrain(TokTrain),
    /// Filter tokenizer pieces by script, frequency, and length rules.
    TokRefine(TokRefine),
    /// Merge a new tokenizer into a base tokenizer (base ids preserved).
    TokMerge(TokMerge),
    /// Encode text and print token ids or pieces.
    TokEncode(TokEncode),
    /// Sweep added-vocabulary sizes and report complexity ratios.
    TokSweep(TokSweep),
    /// Token frequency histogram over a corpus.
    TokHist(TokHist),
    /// Token-count ratio of a new tokenizer versus a base tokenizer.
    TokRatio(TokRatio),
    /// Extend embedding/head matrices to a merged vocabulary.
    InitExtend(InitExtend),
    /// Compare initialization methods on held-out text.
    InitCompare(InitCompare),
    /// Pretrain a base model from scratch.
    TrainPretrainBase(TrainPretrainBase),
    /// Train a single freeze-schedule stage from a checkpoint.
    TrainStage(TrainStage),
    /// Run a full staged adaptation recipe on a base checkpoint.
    TrainPipeline(TrainPipeline),
    /// Evaluate a checkpoint on a corpus.
    TrainEval(TrainEval),
    /// Statically validate a run config.
    RunValidate {
        /// Run config (TOML).
        config: PathBuf,
    },
    /// Execute a run config and write its manifest.
    RunExecute {
        /// Run config (TOML).
        config: PathBuf,
    },
}

fn run_op(op: &impl StepOp) -> Result<()> {
    let errors = op.param_errors();
    if !errors.is_empty() {
        return Err(CliError::validation(errors.join("\n")));
    }
    println!("{}", op.run()?);
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::FixtureGen(op) => run_op(&op),
        Cmd::CorpusIngest(op) => run_op(&op),
        Cmd::CorpusSelect(op) => run_op(&op),
        Cmd::CorpusFilter(op) => run_op(&op),
        Cmd::CorpusDedup(op) => run_op(&op),
        Cmd::CorpusPplfilter(op) => run_op(&op),
        Cmd::CorpusStats(op) => run_op(&op),
        Cmd::TokTrain(op) => run_op(&op),
        Cmd::TokRefine(op) => run_op(&op),
        Cmd::TokMerge(op) => run_op(&op),
        Cmd::TokEncode(op) => run_op(&op),
        Cmd::TokSweep(op) => run_op(&op),
        Cmd::TokHist(op) => run_op(&op),
        Cmd::TokRatio(op) => run_op(&op),
        Cmd::InitExtend(op) => run_op(&op),
        Cmd::InitCompare(op) => run_op(&op),
        Cmd::TrainPretrainBase(op) => run_op(&op),
        Cmd::TrainStage(op) => run_op(&op),
        Cmd::TrainPipeline(op) => run_op(&op),
        Cmd::TrainEval(op) => run_op(&op),
        Cmd::RunValidate { config } => {
            let cfg = runcfg::load_run_config(&config)?;
            let errors = runcfg::validate(&cfg);
            if errors.is_empty() {
                println!(
                    "ok: {} steps, run dir {}",
                    cfg.steps.len(),
                    cfg.run_dir.display()
                );
                Ok(())
            } else {
                Err(CliError::validation(errors.join("\n")))
            }
        }
        Cmd::RunExecute { config } => {
            let cfg = runcfg::load_run_config(&config)?;
            let errors = runcfg::validate(&cfg);
            if !errors.is_empty() {
                return Err(CliError::validation(errors.join("\n")));
            }
            let manifest = runcfg::execute(&cfg)?;
            println!(
                "run {} complete: {} steps in {} ms; manifest at {}",
                &cfg.config_hash[..12],
                manifest.steps.len(),
                manifest.total_wall_ms,
                cfg.run_dir.join("manifest.json").display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
