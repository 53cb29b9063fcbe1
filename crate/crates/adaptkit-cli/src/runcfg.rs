//! Reproducible multi-step runs described by a TOML config:
//!
//! ```toml
//! run_dir = "runs"
//! seed = 0
//!
//! [[step]]
//! kind = "fixture-gen"
//! out = "raw.jsonl"
//! docs = 200
//! ```
//!
//! The canonical-byte hash of the config names the run directory;
//! relative step paths resolve inside it. Execution writes a manifest
//! with per-step wall-clock times and output artifact hashes, so two
//! executions of the same config are byte-comparable.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{create, sha256_bytes, sha256_file};
use crate::ops::corpus::{
    CorpusDedup, CorpusFilter, CorpusIngest, CorpusPplfilter, CorpusSelect, CorpusStats,
    FixtureGen,
};
use crate::ops::init::{InitCompare, InitExtend};
use crate::ops::tok::{TokEncode, TokHist, TokMerge, TokRatio, TokRefine, TokSweep, TokTrain};
use crate::ops::train::{TrainEval, TrainPipeline, TrainPretrainBase, TrainStage};
use crate::ops::StepOp;

macro_rules! steps {
    ($(($variant:ident, $ty:ty)),* $(,)?) => {
        /// One configured pipeline step of any kind.
        #[derive(Debug, Clone)]
        pub enum Step {
            $($variant($ty)),*
        }

        impl Step {
            pub fn from_toml(kind: &str, value: toml::Value) -> Result<Step> {
                match kind {
                    $(<$ty>::KIND => Ok(Step::$variant(
                        value
                            .try_into()
                            .map_err(|e| CliError::validation(format!("{kind}: {e}")))?,
                    )),)*
                    other => Err(CliError::validation(format!("unknown step kind {other:?}"))),
                }
            }

            pub fn kind(&self) -> &'static str {
                match self {
                    $(Step::$variant(_) => <$ty>::KIND),*
                }
            }

            pub fn resolve(&mut self, base: &Path) {
                match self {
                    $(Step::$variant(s) => s.resolve(base)),*
                }
            }

            pub fn param_errors(&self) -> Vec<String> {
                match self {
                    $(Step::$variant(s) => s.param_errors()),*
                }
            }

            pub fn inputs(&self) -> Vec<PathBuf> {
                match self {
                    $(Step::$variant(s) => s.inputs()),*
                }
            }

            pub fn outputs(&self) -> Vec<PathBuf> {
                match self {
                    $(Step::$variant(s) => s.outputs()),*
                }
            }

            pub fn run(&self) -> Result<String> {
                match self {
                    $(Step::$variant(s) => s.run()),*
                }
            }
        }
    };
}

steps! {
    (FixtureGen, FixtureGen),
    (CorpusIngest, CorpusIngest),
    (CorpusSelect, CorpusSelect),
    (CorpusFilter, CorpusFilter),
    (CorpusDedup, CorpusDedup),
    (CorpusPplfilter, CorpusPplfilter),
    (CorpusStats, CorpusStats),
    (TokTrain, TokTrain),
    (TokRefine, TokRefine),
    (TokMerge, TokMerge),
    (TokEncode, TokEncode),
    (TokSweep, TokSweep),
    (TokHist, TokHist),
    (TokRatio, TokRatio),
    (InitExtend, InitExtend),
    (InitCompare, InitCompare),
    (TrainPretrainBase, TrainPretrainBase),
    (TrainStage, TrainStage),
    (TrainPipeline, TrainPipeline),
    (TrainEval, TrainEval),
}

#[derive(Debug, Deserialize)]
struct RawRunConfig {
    /// Parent directory for run directories; relative to the config
    /// file's location.
    #[serde(default = "default_run_dir")]
    run_dir: PathBuf,
    #[serde(rename = "step", default)]
    steps: Vec<toml::Value>,
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug)]
pub struct RunConfig {
    /// Hex SHA-256 of the canonical config bytes; its first 12 digits
    /// name the run directory.
    pub config_hash: String,
    /// The concrete run directory: `<run_dir>/run-<hash12>`.
    pub run_dir: PathBuf,
    pub steps: Vec<Step>,
}

/// Canonical config bytes: the parsed TOML re-encoded as JSON with
/// sorted keys, so formatting and key order in the file do not change
/// the hash.
fn canonical_bytes(value: &toml::Value) -> Result<Vec<u8>> {
    let json = serde_json::to_value(value)?;
    Ok(serde_json::to_vec(&json)?)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: toml::Value = text
        .parse()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let config_hash = hex::encode(sha256_bytes(&canonical_bytes(&value)?));

    let raw: RawRunConfig = value
        .try_into()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;

    let base = path.parent().unwrap_or(Path::new("."));
    let parent = if raw.run_dir.is_relative() {
        base.join(&raw.run_dir)
    } else {
        raw.run_dir
    };
    let run_dir = parent.join(format!("run-{}", &config_hash[..12]));

    let mut steps = Vec::with_capacity(raw.steps.len());
    let mut errors = Vec::new();
    for (i, value) in raw.steps.into_iter().enumerate() {
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .map(str::to_owned);
        match kind {
            None => errors.push(format!("step {i}: missing kind")),
            Some(kind) => match Step::from_toml(&kind, value) {
                Ok(mut step) => {
                    step.resolve(&run_dir);
                    steps.push(step);
                }
                Err(e) => errors.push(format!("step {i}: {e}")),
            },
        }
    }
    if !errors.is_empty() {
        return Err(CliError::validation(errors.join("\n")));
    }
    Ok(RunConfig { config_hash, run_dir, steps })
}

/// Static validation: parameter errors plus dataflow (every input must
/// exist on disk or be produced by an earlier step).
pub fn validate(cfg: &RunConfig) -> Vec<String> {
    let mut errors = Vec::new();
    let mut produced: BTreeSet<PathBuf> = BTreeSet::new();
    for (i, step) in cfg.steps.iter().enumerate() {
        let kind = step.kind();
        for e in step.param_errors() {
            errors.push(format!("step {i} ({kind}): {e}"));
        }
        for input in step.inputs() {
            if !produced.contains(&input) && !input.exists() {
                errors.push(format!(
                    "step {i} ({kind}): input {} does not exist and is not produced by an earlier step",
                    input.display()
                ));
            }
        }
        produced.extend(step.outputs());
    }
    errors
}

#[derive(Debug, Serialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct StepRecord {
    pub kind: &'static str,
    pub status: &'static str,
    pub wall_ms: u128,
    pub summary: String,
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub status: &'static str,
    pub total_wall_ms: u128,
    pub steps: Vec<StepRecord>,
}

/// Exclusive run lock: created at the start of execution, removed when
/// the guard drops.
struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(run_dir: &Path) -> Result<LockGuard> {
        let path = run_dir.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(LockGuard(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::step(format!(
                    "run is already locked by {} (remove it if no other run is active)",
                    path.display()
                )))
            }
            Err(e) => Err(CliError::Io(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn artifact_records(step: &Step) -> Vec<ArtifactRecord> {
    step.outputs()
        .iter()
        .filter(|p| p.exists())
        .map(|p| ArtifactRecord {
            path: p.display().to_string(),
            sha256: sha256_file(p).unwrap_or_default(),
        })
        .collect()
}

/// Execute all steps in order, streaming progress to stdout and
/// writing `manifest.json` into the run directory. A failed step still
/// produces a manifest (marked failed) before the error is returned.
pub fn execute(cfg: &RunConfig) -> Result<RunManifest> {
    std::fs::create_dir_all(&cfg.run_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.run_dir.display())))?;
    let _lock = LockGuard::acquire(&cfg.run_dir)?;

    let total = Instant::now();
    let mut records = Vec::new();
    let mut failure: Option<CliError> = None;
    for (i, step) in cfg.steps.iter().enumerate() {
        println!("[{}/{}] {}", i + 1, cfg.steps.len(), step.kind());
        let started = Instant::now();
        match step.run() {
            Ok(summary) => {
                for line in summary.lines() {
                    println!("    {line}");
                }
                records.push(StepRecord {
                    kind: step.kind(),
                    status: "ok",
                    wall_ms: started.elapsed().as_millis(),
                    summary,
                    artifacts: artifact_records(step),
                });
            }
            Err(e) => {
                records.push(StepRecord {
                    kind: step.kind(),
                    status: "failed",
                    wall_ms: started.elapsed().as_millis(),
                    summary: e.to_string(),
                    artifacts: artifact_records(step),
                });
                failure = Some(CliError::step(format!("step {i} ({}): {e}", step.kind())));
                break;
            }
        }
    }

    let manifest = RunManifest {
        config_hash: cfg.config_hash.clone(),
        status: if failure.is_none() { "ok" } else { "failed" },
        total_wall_ms: total.elapsed().as_millis(),
        steps: records,
    };
    let f = create(&cfg.run_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &manifest)?;

    match failure {
        None => Ok(manifest),
        Some(e) => Err(e),
    }
}
