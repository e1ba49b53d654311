//! Versioned JSON model artifact: model, transform manifest, training
//! config and a SHA-256 digest over all of it. Weights are written with
//! round-trip float formatting, so a reload is bit-exact. No timestamps, so
//! identical training runs give identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::maml::{StopReason, TrainConfig, TrainReport};
use super::model::MlpModel;
use crate::dataprep::TransformManifest;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    pub final_loss: Option<f64>,
}

impl From<&TrainReport> for TrainSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            iterations_run: r.iterations_run,
            stop_reason: r.stop_reason,
            final_loss: r.loss_curve.last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub model: MlpModel,
    pub manifest: TransformManifest,
    pub train_config: TrainConfig,
    pub train_config_digest: String,
    pub summary: Option<TrainSummary>,
    #[serde(default)]
    pub digest: String,
}

#[derive(Serialize)]
struct Body<'a> {
    format_version: u32,
    model: &'a MlpModel,
    manifest: &'a TransformManifest,
    train_config: &'a TrainConfig,
    train_config_digest: &'a str,
    summary: &'a Option<TrainSummary>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ArtifactError {
    #[error("artifact io: {0}")]
    Io(String),
    #[error("artifact is corrupted: {0}")]
    Corrupted(String),
    #[error("unsupported artifact version {found} (expected {ARTIFACT_VERSION})")]
    Version { found: u32 },
    #[error("model and manifest disagree: {0}")]
    Inconsistent(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_digest(cfg: &TrainConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

impl ModelArtifact {
    pub fn new(model: MlpModel, manifest: TransformManifest, train_config: TrainConfig, report: Option<&TrainReport>) -> Self {
        let mut a = Self {
            format_version: ARTIFACT_VERSION,
            train_config_digest: config_digest(&train_config),
            model,
            manifest,
            train_config,
            summary: report.map(TrainSummary::from),
            digest: String::new(),
        };
        a.digest = a.compute_digest();
        a
    }

    fn compute_digest(&self) -> String {
        let body = Body {
            format_version: self.format_version,
            model: &self.model,
            manifest: &self.manifest,
            train_config: &self.train_config,
            train_config_digest: &self.train_config_digest,
            summary: &self.summary,
        };
        sha256_hex(&serde_json::to_vec(&body).expect("artifact serializes"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("artifact serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArtifactError> {
        let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| ArtifactError::Corrupted(e.to_string()))?;
        let found = v.get("format_version").and_then(|f| f.as_u64()).unwrap_or(0) as u32;
        if found != ARTIFACT_VERSION {
            return Err(ArtifactError::Version { found });
        }
        let a: ModelArtifact = serde_json::from_value(v).map_err(|e| ArtifactError::Corrupted(e.to_string()))?;
        if a.compute_digest() != a.digest {
            return Err(ArtifactError::Corrupted("digest mismatch".into()));
        }
        if a.train_config_digest != config_digest(&a.train_config) {
            return Err(ArtifactError::Corrupted("train config digest mismatch".into()));
        }
        a.check_consistency()?;
        Ok(a)
    }

    fn check_consistency(&self) -> Result<(), ArtifactError> {
        let m = &self.model;
        if m.params.len() != m.dims.n_params() {
            return Err(ArtifactError::Inconsistent("parameter count".into()));
        }
        if m.feature_order != self.manifest.feature_order {
            return Err(ArtifactError::Inconsistent("feature order".into()));
        }
        if m.label_codes != self.manifest.label_unmap {
            return Err(ArtifactError::Inconsistent("label map".into()));
        }
        if !m.is_finite() {
            return Err(ArtifactError::Inconsistent("non-finite parameters".into()));
        }
        Ok(())
    }
}

pub fn save_model(path: &Path, artifact: &ModelArtifact) -> Result<(), ArtifactError> {
    std::fs::write(path, artifact.to_bytes()).map_err(|e| ArtifactError::Io(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<ModelArtifact, ArtifactError> {
    let bytes = std::fs::read(path).map_err(|e| ArtifactError::Io(format!("{}: {e}", path.display())))?;
    ModelArtifact::from_bytes(&bytes)
}
