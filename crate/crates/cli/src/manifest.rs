use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use twinkit_core::metalearn::artifact::sha256_hex;

use crate::failure::{Categorize, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub phases_ms: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    pub started_unix_ms: u128,
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

#[derive(Debug)]
pub struct Recorder {
    subcommand: String,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    phases: BTreeMap<String, f64>,
    metrics: BTreeMap<String, f64>,
    started: u128,
}

impl Recorder {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            phases: BTreeMap::new(),
            metrics: BTreeMap::new(),
            started: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn input(&mut self, p: &Path) {
        if p.is_file() && !self.inputs.iter().any(|q| q == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    pub fn lap(&mut self, phase: &str, since: Instant) {
        *self.phases.entry(phase.to_string()).or_default() += since.elapsed().as_secs_f64() * 1000.0;
    }

    pub fn phase_ms(&mut self, phase: &str, ms: f64) {
        self.phases.insert(phase.to_string(), ms);
    }

    pub fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.to_string(), v);
    }

    /// Digests every listed file and writes `<primary>.run.json`.
    pub fn write(self, primary: &Path, config: Value) -> Outcome<PathBuf> {
        let digest = |paths: &[PathBuf]| -> Outcome<Vec<FileDigest>> {
            paths
                .iter()
                .map(|p| FileDigest::of(p).data(format!("digesting {}", p.display())))
                .collect()
        };
        let m = RunManifest {
            subcommand: self.subcommand,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed: self.seed,
            inputs: digest(&self.inputs)?,
            outputs: digest(&self.outputs)?,
            phases_ms: self.phases,
            metrics: self.metrics,
            started_unix_ms: self.started,
        };
        let path = manifest_path(primary);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text).data(format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_listed_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.csv");
        std::fs::write(&out, b"abc").unwrap();
        let mut r = Recorder::new("demo");
        r.seed(4);
        r.output(&out);
        r.phase_ms("work", 1.5);
        let path = r.write(&out, serde_json::json!({"k": 1})).unwrap();
        assert_eq!(path, dir.path().join("out.csv.run.json"));
        let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(m.outputs[0].bytes, 3);
        assert_eq!(
            m.outputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(m.seed, Some(4));
        assert_eq!(m.phases_ms["work"], 1.5);
    }
}
