//! Artifact persistence. Every file is written to a temporary sibling and
//! renamed into place; the manifest goes last and lists everything else.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// In-memory outputs of one command, flushed once computation is over.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    pub warnings: Vec<String>,
    /// Set when outputs are still written but the run must exit non-zero.
    pub failure: Option<CliError>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, render: impl FnOnce(&mut Vec<u8>) -> transduce_core::Result<()>) -> CliResult<()> {
        let mut buf = Vec::new();
        render(&mut buf)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    pub fn add_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
        buf.push(b'\n');
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_path: PathBuf,
    pub config: &'a RunConfig,
    pub jobs: Option<usize>,
    /// Reserved; nothing in the pipeline is stochastic.
    pub seed: Option<u64>,
    pub runtime_s: f64,
    pub files: Vec<String>,
    pub warnings: &'a [String],
}

pub struct RunContext<'a> {
    pub command: &'a str,
    pub config_path: &'a Path,
    pub config: &'a RunConfig,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub started: Instant,
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let target = dir.join(name);
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::io(&target, e))?;
    }
    tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
    Ok(())
}

/// Writes all artifacts and the manifest into `dir`, mirroring warnings to stderr.
pub fn persist(dir: &Path, artifacts: &Artifacts, ctx: &RunContext) -> CliResult<()> {
    for w in &artifacts.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, bytes) in &artifacts.files {
        write_atomic(dir, name, bytes)?;
    }
    let mut files: Vec<String> = artifacts.files.iter().map(|(n, _)| n.clone()).collect();
    files.push(MANIFEST_NAME.to_string());
    let manifest = RunManifest {
        command: ctx.command,
        version: env!("CARGO_PKG_VERSION"),
        config_path: ctx.config_path.to_path_buf(),
        config: ctx.config,
        jobs: ctx.jobs,
        seed: ctx.seed,
        runtime_s: ctx.started.elapsed().as_secs_f64(),
        files,
        warnings: &artifacts.warnings,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::config(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(dir, MANIFEST_NAME, &bytes)
}
