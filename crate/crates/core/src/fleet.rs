//! Many twins (and optionally reference devices) behind one listener.
//! Twins built from the same artifact file share one in-memory copy of it.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::device::DeviceResponse;
use crate::http::server::{bind, serve, FleetRequest, FleetStats, Gateway, Node, ServerHandle};
use crate::metalearn::{load_model, ModelArtifact};
use crate::refdev::{FaultMode, Latency, ReferenceDevice, ReferenceDeviceSpec, SharedDevice};
use crate::schema::{parse_schema, DeviceSchema};
use crate::twin::{build_twin, CalibrationMode, TwinOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetEntry {
    pub serial_number: String,
    pub artifact: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub calibration: CalibrationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub serial_number: String,
    pub schema: PathBuf,
    #[serde(default)]
    pub fault_rate: f64,
    #[serde(default)]
    pub fault_mode: FaultMode,
    #[serde(default)]
    pub latency: Latency,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch() -> usize {
    100
}

fn default_host() -> String {
    "127.0.0.1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub entries: Vec<FleetEntry>,
    #[serde(default)]
    pub devices: Vec<DeviceEntry>,
    #[serde(default)]
    pub port: u16,
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
}

impl FleetConfig {
    pub fn new(entries: Vec<FleetEntry>) -> Self {
        Self {
            entries,
            devices: Vec::new(),
            port: 0,
            host: default_host(),
            batch_size: default_batch(),
            data_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, FleetError> {
        serde_json::from_str(text).map_err(|e| FleetError::Config(e.to_string()))
    }

    /// Paths in the file are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, FleetError> {
        let text = std::fs::read_to_string(path).map_err(|e| FleetError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            for e in &mut cfg.entries {
                fix(&mut e.artifact);
                fix(&mut e.schema);
            }
            for d in &mut cfg.devices {
                fix(&mut d.schema);
            }
            if let Some(d) = &mut cfg.data_dir {
                fix(d);
            }
        }
        Ok(cfg)
    }

    /// `count` entries `<prefix><index>` sharing one artifact and schema.
    pub fn uniform(prefix: &str, count: usize, artifact: &Path, schema: &Path) -> Self {
        Self::new(
            (0..count)
                .map(|i| FleetEntry {
                    serial_number: format!("{prefix}{i:05}"),
                    artifact: artifact.to_path_buf(),
                    schema: schema.to_path_buf(),
                    calibration: CalibrationMode::off(),
                })
                .collect(),
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FleetError {
    #[error("fleet config: {0}")]
    Config(String),
    #[error("duplicate serial `{0}`")]
    DuplicateSerial(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("twin `{serial}`: {message}")]
    Entry { serial: String, message: String },
}

#[derive(Debug)]
pub struct Fleet {
    gateway: Arc<Gateway>,
    server: ServerHandle,
    waves: usize,
}

impl Fleet {
    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    pub fn base_url(&self) -> String {
        self.server.base_url()
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn waves(&self) -> usize {
        self.waves
    }

    pub fn stats(&self) -> FleetStats {
        self.gateway.stats()
    }

    pub async fn route_request(&self, serial: &str, req: FleetRequest) -> DeviceResponse {
        self.gateway.route_request(serial, req).await
    }

    pub async fn shutdown(self) -> std::io::Result<()> {
        self.server.shutdown().await
    }

    pub async fn wait(self) -> std::io::Result<()> {
        self.server.wait().await
    }
}

#[derive(Default)]
struct Caches {
    schemas: HashMap<PathBuf, Arc<DeviceSchema>>,
    artifacts: HashMap<PathBuf, Arc<ModelArtifact>>,
}

impl Caches {
    fn schema(&mut self, path: &Path) -> Result<Arc<DeviceSchema>, String> {
        if let Some(s) = self.schemas.get(path) {
            return Ok(s.clone());
        }
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let s = Arc::new(parse_schema(&text).map_err(|e| format!("{}: {e}", path.display()))?);
        self.schemas.insert(path.to_path_buf(), s.clone());
        Ok(s)
    }

    fn artifact(&mut self, path: &Path) -> Result<Arc<ModelArtifact>, String> {
        if let Some(a) = self.artifacts.get(path) {
            return Ok(a.clone());
        }
        let a = Arc::new(load_model(path).map_err(|e| e.to_string())?);
        self.artifacts.insert(path.to_path_buf(), a.clone());
        Ok(a)
    }
}

/// Binds, starts serving, then activates twins in waves of `batch_size`.
/// Returns once every entry is routable.
pub async fn launch_fleet(cfg: &FleetConfig) -> Result<Fleet, FleetError> {
    if cfg.batch_size == 0 {
        return Err(FleetError::Config("batch_size must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    for sn in cfg
        .entries
        .iter()
        .map(|e| &e.serial_number)
        .chain(cfg.devices.iter().map(|d| &d.serial_number))
    {
        if !seen.insert(sn.as_str()) {
            return Err(FleetError::DuplicateSerial(sn.clone()));
        }
    }
    let addr_s = format!("{}:{}", cfg.host, cfg.port);
    let addr: SocketAddr = addr_s
        .parse()
        .map_err(|e| FleetError::Config(format!("bad listen address {addr_s}: {e}")))?;
    let listener = bind(addr).await.map_err(|source| FleetError::Bind {
        addr: addr_s.clone(),
        source,
    })?;

    let mut caches = Caches::default();
    let gateway = Arc::new(Gateway::new());
    for d in &cfg.devices {
        let entry_err = |message: String| FleetError::Entry {
            serial: d.serial_number.clone(),
            message,
        };
        let schema = caches.schema(&d.schema).map_err(entry_err)?;
        let spec = ReferenceDeviceSpec {
            schema: (*schema).clone(),
            serial_number: d.serial_number.clone(),
            fault_rate: d.fault_rate,
            fault_mode: d.fault_mode,
            latency: d.latency,
            seed: d.seed,
        };
        let dev = ReferenceDevice::new(spec).map_err(|e| entry_err(e.to_string()))?;
        gateway
            .register(Node::Device(Arc::new(SharedDevice::new(dev))))
            .map_err(|e| entry_err(e.to_string()))?;
    }
    // load everything up front so a bad artifact aborts before serving
    let mut prepared = Vec::with_capacity(cfg.entries.len());
    for e in &cfg.entries {
        let entry_err = |message: String| FleetError::Entry {
            serial: e.serial_number.clone(),
            message,
        };
        let schema = caches.schema(&e.schema).map_err(entry_err)?;
        let artifact = caches.artifact(&e.artifact).map_err(entry_err)?;
        prepared.push((e, schema, artifact));
    }
    let server = serve(gateway.clone(), listener).map_err(|source| FleetError::Bind { addr: addr_s, source })?;
    let mut waves = 0;
    for wave in prepared.chunks(cfg.batch_size) {
        for (e, schema, artifact) in wave {
            let opts = TwinOptions {
                data_dir: cfg.data_dir.clone(),
                calibration: e.calibration.clone(),
                device: None,
            };
            let twin = build_twin(schema.clone(), &e.serial_number, artifact.clone(), None, opts).map_err(|err| {
                FleetError::Entry {
                    serial: e.serial_number.clone(),
                    message: err.to_string(),
                }
            })?;
            gateway
                .register(Node::Twin(Arc::new(twin)))
                .map_err(|err| FleetError::Entry {
                    serial: e.serial_number.clone(),
                    message: err.to_string(),
                })?;
        }
        waves += 1;
        tracing::info!(wave = waves, active = gateway.len(), "wave activated");
        tokio::task::yield_now().await;
    }
    Ok(Fleet { gateway, server, waves })
}
