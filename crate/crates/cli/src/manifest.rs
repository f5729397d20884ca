use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub tool_version: String,
    pub generator_version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    /// Input name to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Artifact path (relative to the run dir) to content hash.
    pub artifacts: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else if p.file_name().is_none_or(|n| n != MANIFEST_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

/// Hash of a file, or of every file under a directory (paths relative and
/// sorted, run manifests skipped).
pub fn hash_path(path: &Path) -> anyhow::Result<String> {
    if path.is_file() {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(sha256_hex(&bytes));
    }
    let mut files = Vec::new();
    walk(path, &mut files).with_context(|| format!("listing {}", path.display()))?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(path).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(Sha256::digest(std::fs::read(&f).with_context(|| format!("reading {}", f.display()))?));
    }
    Ok(hex::encode(h.finalize()))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Collects inputs and artifacts while a command runs, then writes the
/// manifest.
pub struct Run {
    pub out: PathBuf,
    command: String,
    config: PipelineConfig,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
    started: u64,
}

impl Run {
    pub fn start(command: &str, out: &Path, config: &PipelineConfig) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            command: command.to_string(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
            started: now(),
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) -> anyhow::Result<()> {
        self.inputs.insert(name.to_string(), hash_path(path)?);
        Ok(())
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Registers an artifact already written under the run dir.
    pub fn artifact(&mut self, rel: &str) {
        self.artifacts.push(rel.to_string());
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.artifact(rel);
        Ok(())
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    pub fn finish(self) -> anyhow::Result<RunManifest> {
        let mut artifacts = BTreeMap::new();
        for rel in &self.artifacts {
            artifacts.insert(rel.clone(), hash_path(&self.out.join(rel))?);
        }
        let snapshot = serde_json::to_vec(&(&self.command, &self.config))?;
        let manifest = RunManifest {
            run_id: sha256_hex(&snapshot)[..16].to_string(),
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            generator_version: kgx_core::rng::GENERATOR_VERSION.to_string(),
            seed: self.config.seed,
            config: self.config,
            inputs: self.inputs,
            artifacts,
            started_unix: self.started,
            finished_unix: now(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.out.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}
