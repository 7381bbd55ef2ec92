//! Output directory bookkeeping: every written file is hashed into a manifest
//! together with the configuration, stage seeds and stage timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{io_err, ExpResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    pub master_seed: u64,
    /// The effective configuration, as TOML.
    pub config: String,
    pub stage_seeds: BTreeMap<String, u64>,
    /// Wall-clock seconds per stage, in completion order.
    pub timings: Vec<(String, f64)>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> ExpResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text).map_err(emogan_core::Error::from)?)
    }

    pub fn output(&self, path: &str) -> Option<&OutputFile> {
        self.outputs.iter().find(|o| o.path == path)
    }
}

/// Writes artifacts under one directory and records them.
pub struct OutputSink {
    root: PathBuf,
    manifest: RunManifest,
}

impl OutputSink {
    pub fn create(root: &Path, experiment: &str, config: &ExperimentConfig) -> ExpResult<Self> {
        std::fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: RunManifest {
                experiment: experiment.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                master_seed: config.seed,
                config: config.to_toml(),
                stage_seeds: BTreeMap::new(),
                timings: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> ExpResult<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.record(name, bytes);
        Ok(())
    }

    pub fn write_str(&mut self, name: &str, text: &str) -> ExpResult<()> {
        self.write(name, text.as_bytes())
    }

    /// Records a file some other writer already produced.
    pub fn record_existing(&mut self, name: &str) -> ExpResult<()> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        let entry = OutputFile {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        };
        match self.manifest.outputs.iter_mut().find(|o| o.path == name) {
            Some(o) => *o = entry,
            None => self.manifest.outputs.push(entry),
        }
    }

    pub fn seed(&mut self, stage: impl Into<String>, seed: u64) {
        self.manifest.stage_seeds.insert(stage.into(), seed);
    }

    pub fn time(&mut self, stage: impl Into<String>, started: Instant) {
        self.manifest
            .timings
            .push((stage.into(), started.elapsed().as_secs_f64()));
    }

    pub fn finish(mut self) -> ExpResult<RunManifest> {
        self.manifest.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let text =
            serde_json::to_string_pretty(&self.manifest).map_err(emogan_core::Error::from)?;
        let path = self.path(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_hashes_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let mut sink = OutputSink::create(dir.path(), "test", &cfg).unwrap();
        sink.write_str("b/x.csv", "a,b\n").unwrap();
        sink.write_str("a.txt", "").unwrap();
        sink.seed("stage", 5);
        let m = sink.finish().unwrap();
        assert_eq!(
            m.outputs
                .iter()
                .map(|o| o.path.as_str())
                .collect::<Vec<_>>(),
            vec!["a.txt", "b/x.csv"]
        );
        assert_eq!(
            m.output("a.txt").unwrap().sha256,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        let back = RunManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
        assert_eq!(ExperimentConfig::from_toml(&back.config).unwrap(), cfg);
    }
}
