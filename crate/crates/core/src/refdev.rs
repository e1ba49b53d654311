//! Rule-based reference device: the ground-truth responder that twins are
//! trained against and compared with.
//!
//! Status policy: 400 for a body that is not a JSON object, 422 for a
//! schema violation, 500 for an injected fault, 200 otherwise. Successful
//! POSTs merge the body over the current state.
//!
//! Faults only ever hit otherwise-valid input. Two fault models exist:
//!
//! * [`FaultMode::Region`] (default): a seeded region of the valid input
//!   space whose mass under uniform in-range sampling is `fault_rate`. The
//!   device is not flaky: the same body always gets the same answer.
//! * [`FaultMode::Stochastic`]: an independent Bernoulli draw per valid
//!   request from the seeded stream, so responses depend on request order.

use std::time::Duration;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::device::DeviceResponse;
use crate::schema::{validate_config, DeviceConfig, DeviceSchema, PropertyKind};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultMode {
    #[default]
    Region,
    Stochastic,
}

impl std::str::FromStr for FaultMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "region" => Ok(FaultMode::Region),
            "stochastic" => Ok(FaultMode::Stochastic),
            other => Err(format!("unknown fault mode `{other}` (expected region|stochastic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Latency {
    #[default]
    None,
    Fixed { ms: f64 },
    Uniform { min_ms: f64, max_ms: f64 },
}

impl Latency {
    fn is_valid(&self) -> bool {
        match *self {
            Latency::None => true,
            Latency::Fixed { ms } => ms.is_finite() && ms >= 0.0,
            Latency::Uniform { min_ms, max_ms } => {
                min_ms.is_finite() && max_ms.is_finite() && min_ms >= 0.0 && min_ms <= max_ms
            }
        }
    }
}

impl std::str::FromStr for Latency {
    type Err = String;
    /// `0`, `25` (fixed ms) or `10..40` (uniform range in ms).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad latency `{t}`: {e}"));
        let lat = match s.split_once("..") {
            Some((a, b)) => Latency::Uniform {
                min_ms: parse(a)?,
                max_ms: parse(b)?,
            },
            None => {
                let ms = parse(s)?;
                if ms == 0.0 {
                    Latency::None
                } else {
                    Latency::Fixed { ms }
                }
            }
        };
        if lat.is_valid() {
            Ok(lat)
        } else {
            Err(format!("invalid latency `{s}`"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDeviceSpec {
    pub schema: DeviceSchema,
    pub serial_number: String,
    pub fault_rate: f64,
    #[serde(default)]
    pub fault_mode: FaultMode,
    #[serde(default)]
    pub latency: Latency,
    pub seed: u64,
}

impl ReferenceDeviceSpec {
    pub fn new(schema: DeviceSchema, serial_number: impl Into<String>, seed: u64) -> Self {
        Self {
            schema,
            serial_number: serial_number.into(),
            fault_rate: 0.0,
            fault_mode: FaultMode::Region,
            latency: Latency::None,
            seed,
        }
    }

    pub fn with_faults(mut self, rate: f64, mode: FaultMode) -> Self {
        self.fault_rate = rate;
        self.fault_mode = mode;
        self
    }

    pub fn with_latency(mut self, latency: Latency) -> Self {
        self.latency = latency;
        self
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum RefDevError {
    #[error("fault_rate must lie in [0, 1], got {0}")]
    FaultRate(f64),
    #[error("latency must be non-negative")]
    Latency,
    #[error("serial number must not be empty")]
    EmptySerial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum FaultCondition {
    Equals { property: String, value: Value },
    AtMost { property: String, upper: f64 },
}

impl FaultCondition {
    fn holds(&self, config: &DeviceConfig) -> bool {
        match self {
            FaultCondition::Equals { property, value } => config.get(property) == Some(value),
            FaultCondition::AtMost { property, upper } => config
                .get(property)
                .and_then(Value::as_f64)
                .is_some_and(|v| v <= *upper),
        }
    }
}

/// Conjunction of conditions over a merged, valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRegion {
    /// `false` when the region is empty (fault_rate 0).
    pub active: bool,
    pub conditions: Vec<FaultCondition>,
    /// Probability of the region under uniform in-range sampling.
    pub mass: f64,
}

impl FaultRegion {
    pub fn contains(&self, config: &DeviceConfig) -> bool {
        self.active && self.conditions.iter().all(|c| c.holds(config))
    }

    /// Builds a region of mass close to `rate`: equality conditions on
    /// categorical properties first, then a lower-anchored interval on one
    /// numeric property to absorb the remaining factor.
    pub fn build(schema: &DeviceSchema, rate: f64, rng: &mut Rng) -> Self {
        if rate <= 0.0 {
            return FaultRegion {
                active: false,
                conditions: Vec::new(),
                mass: 0.0,
            };
        }
        if rate >= 1.0 {
            return FaultRegion {
                active: true,
                conditions: Vec::new(),
                mass: 1.0,
            };
        }
        let mut order: Vec<usize> = (0..schema.properties.len()).collect();
        order.shuffle(rng);
        let mut mass = 1.0;
        let mut conditions = Vec::new();
        for &i in &order {
            let p = &schema.properties[i];
            let domain: Vec<Value> = match p.kind {
                PropertyKind::Boolean => vec![Value::Bool(false), Value::Bool(true)],
                PropertyKind::StringEnum => p.allowed.iter().cloned().map(Value::String).collect(),
                _ => continue,
            };
            let m = 1.0 / domain.len() as f64;
            if mass * m >= rate {
                let value = domain.choose(rng).expect("non-empty domain").clone();
                conditions.push(FaultCondition::Equals {
                    property: p.name.clone(),
                    value,
                });
                mass *= m;
            }
        }
        let residual = rate / mass;
        if residual < 1.0 - 1e-12 {
            if let Some(p) = order
                .iter()
                .map(|&i| &schema.properties[i])
                .find(|p| p.kind.is_numeric())
            {
                let (lo, hi) = p.bounds();
                let (upper, factor) = if p.kind == PropertyKind::Integer {
                    let n = (hi - lo).floor() + 1.0;
                    let k = (residual * n).round().max(1.0);
                    (lo + k - 1.0, k / n)
                } else {
                    (lo + residual * (hi - lo), residual)
                };
                conditions.push(FaultCondition::AtMost {
                    property: p.name.clone(),
                    upper,
                });
                mass *= factor;
            }
        }
        FaultRegion {
            active: true,
            conditions,
            mass,
        }
    }
}

/// Synchronous device core. Callers serialize access; see [`SharedDevice`].
#[derive(Debug, Clone)]
pub struct ReferenceDevice {
    spec: ReferenceDeviceSpec,
    state: DeviceConfig,
    fault_rng: Rng,
    latency_rng: Rng,
    region: FaultRegion,
}

impl ReferenceDevice {
    pub fn new(spec: ReferenceDeviceSpec) -> Result<Self, RefDevError> {
        if !(0.0..=1.0).contains(&spec.fault_rate) || spec.fault_rate.is_nan() {
            return Err(RefDevError::FaultRate(spec.fault_rate));
        }
        if !spec.latency.is_valid() {
            return Err(RefDevError::Latency);
        }
        if spec.serial_number.is_empty() {
            return Err(RefDevError::EmptySerial);
        }
        let region = match spec.fault_mode {
            FaultMode::Region => {
                FaultRegion::build(&spec.schema, spec.fault_rate, &mut seed::phase_rng(spec.seed, "fault-region"))
            }
            FaultMode::Stochastic => FaultRegion {
                active: false,
                conditions: Vec::new(),
                mass: spec.fault_rate,
            },
        };
        Ok(Self {
            state: spec.schema.default_config(),
            fault_rng: seed::phase_rng(spec.seed, "fault-draws"),
            latency_rng: seed::phase_rng(spec.seed, "latency"),
            region,
            spec,
        })
    }

    pub fn spec(&self) -> &ReferenceDeviceSpec {
        &self.spec
    }

    pub fn schema(&self) -> &DeviceSchema {
        &self.spec.schema
    }

    pub fn serial_number(&self) -> &str {
        &self.spec.serial_number
    }

    pub fn state(&self) -> &DeviceConfig {
        &self.state
    }

    pub fn fault_region(&self) -> &FaultRegion {
        &self.region
    }

    pub fn reset(&mut self) {
        self.state = self.spec.schema.default_config();
    }

    pub fn get(&self, selector: Option<&str>) -> DeviceResponse {
        config_response(&self.state, selector)
    }

    pub fn post(&mut self, body: &[u8]) -> DeviceResponse {
        match serde_json::from_slice::<Value>(body) {
            Ok(Value::Object(map)) => self.post_object(&map),
            _ => DeviceResponse::error(400),
        }
    }

    pub fn post_object(&mut self, body: &Map<String, Value>) -> DeviceResponse {
        let verdict = validate_config(&self.spec.schema, body);
        if !verdict.is_ok() {
            tracing::debug!(serial = %self.spec.serial_number, violations = ?verdict.violations(), "rejected");
            return DeviceResponse::error(422);
        }
        let mut merged = self.state.clone();
        for (k, v) in body {
            merged.insert(k.clone(), v.clone());
        }
        let fault = match self.spec.fault_mode {
            FaultMode::Region => self.region.contains(&merged),
            FaultMode::Stochastic => self.spec.fault_rate > 0.0 && self.fault_rng.random::<f64>() < self.spec.fault_rate,
        };
        if fault {
            return DeviceResponse::error(500);
        }
        self.state = merged;
        DeviceResponse::ok(config_value(&self.state))
    }

    /// Next artificial delay.
    pub fn next_latency(&mut self) -> Duration {
        let ms = match self.spec.latency {
            Latency::None => 0.0,
            Latency::Fixed { ms } => ms,
            Latency::Uniform { min_ms, max_ms } => {
                if max_ms > min_ms {
                    self.latency_rng.random_range(min_ms..max_ms)
                } else {
                    min_ms
                }
            }
        };
        Duration::from_secs_f64(ms / 1000.0)
    }
}

pub(crate) fn config_value(config: &DeviceConfig) -> Value {
    Value::Object(config.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
}

/// GET semantics shared by devices and twins.
pub(crate) fn config_response(config: &DeviceConfig, selector: Option<&str>) -> DeviceResponse {
    match selector {
        None => DeviceResponse::ok(config_value(config)),
        Some(name) => match config.get(name) {
            Some(v) => {
                let mut m = Map::new();
                m.insert(name.to_string(), v.clone());
                DeviceResponse::ok(Value::Object(m))
            }
            None => DeviceResponse::error(404),
        },
    }
}

/// Device behind an async lock; requests are handled one at a time. The
/// reported processing time is the injected latency, so emulated timings
/// are reproducible.
#[derive(Debug)]
pub struct SharedDevice {
    inner: tokio::sync::Mutex<ReferenceDevice>,
    serial: String,
    schema: DeviceSchema,
}

impl SharedDevice {
    pub fn new(device: ReferenceDevice) -> Self {
        Self {
            serial: device.serial_number().to_string(),
            schema: device.schema().clone(),
            inner: tokio::sync::Mutex::new(device),
        }
    }

    pub fn serial_number(&self) -> &str {
        &self.serial
    }

    pub fn schema(&self) -> &DeviceSchema {
        &self.schema
    }

    pub async fn get(&self, selector: Option<&str>) -> DeviceResponse {
        let mut dev = self.inner.lock().await;
        let delay = dev.next_latency();
        if !delay.is_zero() {
            tokio::time::sleep(delay).await;
        }
        let mut resp = dev.get(selector);
        resp.processing_time_ms = delay.as_secs_f64() * 1000.0;
        resp
    }

    pub async fn post(&self, body: &[u8]) -> DeviceResponse {
        let mut dev = self.inner.lock().await;
        let delay = dev.next_latency();
        if !delay.is_zero() {
            tokio::time::sleep(delay).await;
        }
        let mut resp = dev.post(body);
        resp.processing_time_ms = delay.as_secs_f64() * 1000.0;
        resp
    }

    pub async fn reset(&self) -> DeviceResponse {
        let mut dev = self.inner.lock().await;
        dev.reset();
        dev.get(None)
    }

    pub async fn snapshot(&self) -> DeviceConfig {
        self.inner.lock().await.state().clone()
    }
}
