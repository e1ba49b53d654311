//! Serial-numbered twins: a shared read-only model plus per-twin JSON state.
//!
//! POST bodies are transformed with the artifact's manifest and classified;
//! the predicted status code is returned as-is. Only a 2XX prediction
//! merges the body into state. With calibration enabled, traffic is also
//! mirrored to the physical device and divergences are logged as JSON
//! lines that `adapt` can ingest.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::datagen::{RawDataset, RawRecord};
use crate::dataprep::apply_transform;
use crate::device::{is_success, DeviceResponse, StatusFamily};
use crate::endpoint::{DeviceLink, Responder};
use crate::http::client::DeviceClient;
use crate::metalearn::ModelArtifact;
use crate::refdev::{config_response, config_value};
use crate::schema::{DeviceConfig, DeviceSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationKind {
    #[default]
    Off,
    Shadow,
    Authoritative,
}

impl std::str::FromStr for CalibrationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Self::Off),
            "shadow" => Ok(Self::Shadow),
            "authoritative" => Ok(Self::Authoritative),
            other => Err(format!("unknown calibration mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CalibrationMode {
    #[serde(default)]
    pub mode: CalibrationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_endpoint: Option<String>,
    /// Also log requests on which twin and device agree.
    #[serde(default)]
    pub log_agreements: bool,
}

impl CalibrationMode {
    pub fn off() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub request: Value,
    pub twin_status: u16,
    pub device_status: u16,
    pub device_config: Value,
    pub timestamp_ms: u64,
    pub divergent: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum TwinError {
    #[error("serial `{serial}` does not start with prefix `{prefix}`")]
    BadSerial { serial: String, prefix: String },
    #[error("duplicate serial `{0}`")]
    DuplicateSerial(String),
    #[error("artifact reads properties missing from schema {schema}: {missing:?}")]
    FeatureMismatch { schema: String, missing: Vec<String> },
    #[error("calibration mode {0:?} needs a device endpoint")]
    MissingDevice(CalibrationKind),
    #[error("state file {path}: {message}")]
    State { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct TwinOptions {
    pub data_dir: Option<PathBuf>,
    pub calibration: CalibrationMode,
    /// In-process device for calibration; overrides `device_endpoint`.
    pub device: Option<DeviceLink>,
}

#[derive(Debug)]
pub struct TwinInstance {
    serial: String,
    schema: Arc<DeviceSchema>,
    artifact: Arc<ModelArtifact>,
    state: tokio::sync::Mutex<DeviceConfig>,
    state_path: Option<PathBuf>,
    log_path: Option<PathBuf>,
    calibration: CalibrationMode,
    link: Option<DeviceLink>,
    inferences: AtomicU64,
    records: std::sync::Mutex<Vec<CalibrationRecord>>,
}

const MAX_RECORDS_IN_MEMORY: usize = 10_000;

pub fn state_path(data_dir: &Path, serial: &str) -> PathBuf {
    data_dir.join(format!("{serial}.state.json"))
}

pub fn calibration_log_path(data_dir: &Path, serial: &str) -> PathBuf {
    data_dir.join(format!("{serial}.calibration.jsonl"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Keeps schema-named keys only.
fn schema_config(schema: &DeviceSchema, map: &Map<String, Value>) -> DeviceConfig {
    map.iter()
        .filter(|(k, _)| schema.property(k).is_some())
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

pub fn build_twin(
    schema: Arc<DeviceSchema>,
    serial: &str,
    artifact: Arc<ModelArtifact>,
    initial_state: Option<DeviceConfig>,
    opts: TwinOptions,
) -> Result<TwinInstance, TwinError> {
    if !serial.starts_with(&schema.sn_prefix) || serial.len() == schema.sn_prefix.len() {
        return Err(TwinError::BadSerial {
            serial: serial.to_string(),
            prefix: schema.sn_prefix.clone(),
        });
    }
    let missing: Vec<String> = artifact
        .manifest
        .source_properties()
        .into_iter()
        .filter(|p| schema.property(p).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(TwinError::FeatureMismatch {
            schema: schema.id(),
            missing,
        });
    }
    let link = match (opts.device, &opts.calibration.device_endpoint) {
        (Some(l), _) => Some(l),
        (None, Some(url)) => Some(DeviceLink::Remote(DeviceClient::new(url, &schema, serial))),
        (None, None) => None,
    };
    if opts.calibration.mode != CalibrationKind::Off && link.is_none() {
        return Err(TwinError::MissingDevice(opts.calibration.mode));
    }
    let state_path = opts.data_dir.as_deref().map(|d| state_path(d, serial));
    let log_path = opts.data_dir.as_deref().map(|d| calibration_log_path(d, serial));
    let state = match (initial_state, &state_path) {
        (Some(s), _) => s,
        (None, Some(p)) if p.exists() => {
            let text = std::fs::read_to_string(p).map_err(|e| TwinError::State {
                path: p.clone(),
                message: e.to_string(),
            })?;
            let map: Map<String, Value> = serde_json::from_str(&text).map_err(|e| TwinError::State {
                path: p.clone(),
                message: e.to_string(),
            })?;
            let mut s = schema.default_config();
            s.extend(schema_config(&schema, &map));
            s
        }
        _ => schema.default_config(),
    };
    let twin = TwinInstance {
        serial: serial.to_string(),
        schema,
        artifact,
        state: tokio::sync::Mutex::new(state),
        state_path,
        log_path,
        calibration: opts.calibration,
        link,
        inferences: AtomicU64::new(0),
        records: std::sync::Mutex::new(Vec::new()),
    };
    if let Some(dir) = &opts.data_dir {
        std::fs::create_dir_all(dir).map_err(|e| TwinError::State {
            path: dir.clone(),
            message: e.to_string(),
        })?;
    }
    twin.persist(&twin.state.try_lock().expect("fresh lock"))?;
    Ok(twin)
}

impl TwinInstance {
    pub fn serial_number(&self) -> &str {
        &self.serial
    }

    pub fn schema(&self) -> &DeviceSchema {
        &self.schema
    }

    pub fn artifact(&self) -> &Arc<ModelArtifact> {
        &self.artifact
    }

    pub fn calibration(&self) -> &CalibrationMode {
        &self.calibration
    }

    /// Number of model invocations so far.
    pub fn inferences(&self) -> u64 {
        self.inferences.load(Ordering::Relaxed)
    }

    pub async fn snapshot(&self) -> DeviceConfig {
        self.state.lock().await.clone()
    }

    pub fn calibration_records(&self) -> Vec<CalibrationRecord> {
        self.records.lock().expect("records lock").clone()
    }

    fn persist(&self, state: &DeviceConfig) -> Result<(), TwinError> {
        if let Some(p) = &self.state_path {
            let bytes = serde_json::to_vec_pretty(&config_value(state)).expect("state serializes");
            write_atomic(p, &bytes).map_err(|e| TwinError::State {
                path: p.clone(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    fn persist_logged(&self, state: &DeviceConfig) {
        if let Err(e) = self.persist(state) {
            tracing::error!(serial = %self.serial, error = %e, "state not persisted");
        }
    }

    /// Predicted status code for a parsed body.
    pub fn predict(&self, body: &Map<String, Value>) -> u16 {
        self.inferences.fetch_add(1, Ordering::Relaxed);
        let x = apply_transform(&self.artifact.manifest, body);
        self.artifact
            .model
            .predict_status(&x)
            .expect("manifest and model agree on width")
    }

    fn parse(body: &[u8]) -> Option<Map<String, Value>> {
        match serde_json::from_slice::<Value>(body) {
            Ok(Value::Object(m)) => Some(m),
            _ => None,
        }
    }

    fn merged(&self, state: &DeviceConfig, body: &Map<String, Value>) -> DeviceConfig {
        let mut next = state.clone();
        next.extend(schema_config(&self.schema, body));
        next
    }

    async fn plain_post(&self, body: &[u8]) -> DeviceResponse {
        let Some(map) = Self::parse(body) else {
            return DeviceResponse::error(400);
        };
        let status = self.predict(&map);
        if !is_success(status) {
            return DeviceResponse::error(status);
        }
        let mut st = self.state.lock().await;
        *st = self.merged(&st, &map);
        self.persist_logged(&st);
        DeviceResponse::with_status(status, config_value(&st))
    }

    fn log(&self, rec: CalibrationRecord) {
        if let Some(p) = &self.log_path {
            let line = serde_json::to_string(&rec).expect("record serializes");
            let res = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = res {
                tracing::error!(serial = %self.serial, error = %e, "calibration record not written");
            }
        }
        let mut mem = self.records.lock().expect("records lock");
        if mem.len() < MAX_RECORDS_IN_MEMORY {
            mem.push(rec);
        }
    }

    async fn calibrated_post(&self, body: &[u8], link: &DeviceLink) -> DeviceResponse {
        let parsed = Self::parse(body);
        let twin_status = parsed.as_ref().map_or(400, |m| self.predict(m));
        let device = match link.post(body).await {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(serial = %self.serial, error = %e, "device unreachable; answering from twin only");
                return self.plain_post(body).await;
            }
        };
        let device_cfg = match link.get(None).await {
            Ok(r) if r.is_success() => r.body.as_object().map(|m| schema_config(&self.schema, m)),
            Ok(_) => None,
            Err(e) => {
                tracing::warn!(serial = %self.serial, error = %e, "device unreachable after post");
                None
            }
        };
        let mut st = self.state.lock().await;
        let twin_next = match &parsed {
            Some(m) if is_success(twin_status) => self.merged(&st, m),
            _ => st.clone(),
        };
        let divergent = StatusFamily::of(twin_status) != device.family()
            || device_cfg.as_ref().is_some_and(|d| *d != twin_next);
        if divergent || self.calibration.log_agreements {
            self.log(CalibrationRecord {
                request: parsed.clone().map(Value::Object).unwrap_or(Value::Null),
                twin_status,
                device_status: device.status_code,
                device_config: device_cfg.as_ref().map(config_value).unwrap_or(Value::Null),
                timestamp_ms: now_ms(),
                divergent,
            });
        }
        let twin_resp = if is_success(twin_status) {
            DeviceResponse::with_status(twin_status, config_value(&twin_next))
        } else {
            DeviceResponse::error(twin_status)
        };
        let next = match (&device_cfg, divergent || self.calibration.mode == CalibrationKind::Authoritative) {
            (Some(d), true) => d.clone(),
            _ => twin_next,
        };
        if next != *st {
            *st = next;
            self.persist_logged(&st);
        }
        match self.calibration.mode {
            CalibrationKind::Authoritative => DeviceResponse {
                processing_time_ms: 0.0,
                ..device
            },
            _ => twin_resp,
        }
    }

    pub async fn post(&self, body: &[u8]) -> DeviceResponse {
        let t0 = Instant::now();
        let mut resp = match (&self.link, self.calibration.mode) {
            (Some(link), CalibrationKind::Shadow | CalibrationKind::Authoritative) => {
                self.calibrated_post(body, link).await
            }
            _ => self.plain_post(body).await,
        };
        resp.processing_time_ms = t0.elapsed().as_secs_f64() * 1000.0;
        resp
    }

    pub async fn get(&self, selector: Option<&str>) -> DeviceResponse {
        let t0 = Instant::now();
        if let (Some(link), CalibrationKind::Shadow | CalibrationKind::Authoritative) = (&self.link, self.calibration.mode)
        {
            match link.get(None).await {
                Ok(r) if r.is_success() => {
                    if let Some(m) = r.body.as_object() {
                        let cfg = schema_config(&self.schema, m);
                        let mut st = self.state.lock().await;
                        if *st != cfg {
                            *st = cfg;
                            self.persist_logged(&st);
                        }
                    }
                }
                Ok(_) => {}
                Err(e) => tracing::warn!(serial = %self.serial, error = %e, "device unreachable; serving twin state"),
            }
        }
        let st = self.state.lock().await;
        let mut resp = config_response(&st, selector);
        resp.processing_time_ms = t0.elapsed().as_secs_f64() * 1000.0;
        resp
    }

    /// Restores schema defaults.
    pub async fn reset(&self) {
        let mut st = self.state.lock().await;
        *st = self.schema.default_config();
        self.persist_logged(&st);
    }
}

impl Responder for TwinInstance {
    async fn get(&self, selector: Option<&str>) -> Result<DeviceResponse, crate::endpoint::TransportError> {
        Ok(TwinInstance::get(self, selector).await)
    }

    async fn post(&self, body: &[u8]) -> Result<DeviceResponse, crate::endpoint::TransportError> {
        Ok(TwinInstance::post(self, body).await)
    }

    async fn reset(&self) -> Result<(), crate::endpoint::TransportError> {
        TwinInstance::reset(self).await;
        Ok(())
    }
}

/// Turns a calibration log into raw training data labelled by the device.
pub fn read_calibration_log(path: &Path, schema: &DeviceSchema) -> std::io::Result<RawDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut ds = RawDataset::new(schema);
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: CalibrationRecord = serde_json::from_str(line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        let features: BTreeMap<String, Value> = match rec.request {
            Value::Object(m) => m.into_iter().collect(),
            _ => continue,
        };
        ds.records.push(RawRecord {
            features,
            processing_time_ms: 0.0,
            status_code: rec.device_status,
        });
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn calibration_mode_parsing() {
        assert_eq!("shadow".parse::<CalibrationKind>(), Ok(CalibrationKind::Shadow));
        assert_eq!("authoritative".parse::<CalibrationKind>(), Ok(CalibrationKind::Authoritative));
        assert!("loud".parse::<CalibrationKind>().is_err());
        let m: CalibrationMode = serde_json::from_value(json!({})).unwrap();
        assert_eq!(m, CalibrationMode::off());
        let m: CalibrationMode =
            serde_json::from_value(json!({"mode": "shadow", "device_endpoint": "http://x"})).unwrap();
        assert_eq!(m.mode, CalibrationKind::Shadow);
        assert!(!m.log_agreements);
    }

    #[test]
    fn unknown_keys_never_reach_state() {
        let schema = crate::builtin::schema("bpcuff", "v1");
        let body = json!({"unit": "KPA", "stray": 1}).as_object().cloned().unwrap();
        let cfg = schema_config(&schema, &body);
        assert_eq!(cfg.len(), 1);
        assert_eq!(cfg["unit"], "KPA");
    }

    #[test]
    fn file_layout() {
        let dir = Path::new("/tmp/twins");
        assert_eq!(state_path(dir, "BP-7"), dir.join("BP-7.state.json"));
        assert_eq!(calibration_log_path(dir, "BP-7"), dir.join("BP-7.calibration.jsonl"));
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("x.state.json");
        write_atomic(&p, b"{}").unwrap();
        write_atomic(&p, b"{\"a\":1}").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "{\"a\":1}");
        assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 1);
    }

    #[test]
    fn calibration_log_skips_unparsed_requests() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("log.jsonl");
        let rec = |request: Value, device_status| CalibrationRecord {
            request,
            twin_status: 200,
            device_status,
            device_config: Value::Null,
            timestamp_ms: 0,
            divergent: true,
        };
        let lines = [rec(json!({"unit": "KPA"}), 422), rec(Value::Null, 400)]
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        std::fs::write(&p, lines + "\n\n").unwrap();
        let ds = read_calibration_log(&p, &crate::builtin::schema("bpcuff", "v1")).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.records[0].status_code, 422);
        std::fs::write(&p, "garbage\n").unwrap();
        let err = read_calibration_log(&p, &crate::builtin::schema("bpcuff", "v1")).unwrap_err();
        assert!(err.to_string().starts_with("line 1"), "{err}");
    }
}
