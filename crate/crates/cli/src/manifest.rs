use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context as _;
use serde::{Deserialize, Serialize};

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved settings, including defaults.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub materials_hash: String,
    pub code_version: String,
    pub duration_s: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &impl Serialize, materials_hash: &str) -> anyhow::Result<Self> {
        Ok(Self {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                config: serde_json::to_value(config)?,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                materials_hash: materials_hash.to_string(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                duration_s: 0.0,
            },
        })
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.manifest.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.manifest.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.to_path_buf());
    }

    /// Stamps the duration and writes the manifest atomically to `path`.
    pub fn finish(mut self, path: &Path) -> anyhow::Result<RunManifest> {
        self.manifest.duration_s = self.started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest)?;
        write_atomic(path, text.as_bytes())?;
        Ok(self.manifest)
    }
}

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// `<file>.run.json` for single-file outputs.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

/// `<dir>/run.json` for directory outputs.
pub fn in_dir(dir: &Path) -> PathBuf {
    dir.join("run.json")
}
