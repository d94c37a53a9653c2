//! Record of one command run: resolved config, outputs and their checksums.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use springmass::artifact::file_sha256;

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub artifacts: Vec<ArtifactEntry>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Collects outputs of a command as they are written.
pub struct Recorder {
    dir: PathBuf,
    command: String,
    config: RunConfig,
    files: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
}

impl Recorder {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self> {
        let dir = config.out.clone();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            command: command.into(),
            config: config.clone(),
            files: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    /// Absolute-or-cwd path of an output file, registered for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(PathBuf::from(name));
        self.dir.join(name)
    }

    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        *self.timings.entry(stage.into()).or_default() += t.elapsed().as_secs_f64();
        r
    }

    /// Writes the config snapshot and the manifest; returns the manifest path.
    pub fn finish(mut self) -> Result<PathBuf> {
        let cfg_path = self.file(&format!("{}.config.toml", self.command));
        std::fs::write(&cfg_path, self.config.to_toml()?)
            .with_context(|| format!("writing {}", cfg_path.display()))?;
        let mut artifacts = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            let full = self.dir.join(rel);
            let bytes = std::fs::metadata(&full)
                .with_context(|| format!("output {} was not written", full.display()))?
                .len();
            artifacts.push(ArtifactEntry { path: rel.clone(), sha256: file_sha256(&full)?, bytes });
        }
        let m = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            config: self.config,
            artifacts,
            timings: self.timings,
        };
        let path = self.dir.join(format!("{}.manifest.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
