//! Step implementations shared by the direct subcommands and the
//! run-config executor. Every step declares its parameters (clap +
//! serde), its input/output artifacts, and a `run` that returns a
//! human-readable summary.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::formats::create;

pub mod corpus;
pub mod init;
pub mod tok;
pub mod train;

pub trait StepOp {
    /// The subcommand / run-config kind name.
    const KIND: &'static str;

    /// Resolve relative paths against a base directory (the run dir).
    fn resolve(&mut self, base: &Path);

    /// Parameter-level validation errors (empty = valid).
    fn param_errors(&self) -> Vec<String>;

    /// Input artifacts this step reads.
    fn inputs(&self) -> Vec<PathBuf>;

    /// Output artifacts this step writes.
    fn outputs(&self) -> Vec<PathBuf>;

    /// Execute the step and return a one-or-few-line summary.
    fn run(&self) -> Result<String>;
}

pub fn resolve_path(path: &mut PathBuf, base: &Path) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

pub fn resolve_paths(paths: &mut [PathBuf], base: &Path) {
    for p in paths {
        resolve_path(p, base);
    }
}

pub fn write_json_report(path: &Path, report: &impl Serialize) -> Result<()> {
    let f = create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), report)?;
    Ok(())
}
