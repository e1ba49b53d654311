//! Raw data collection: probe a device with randomized configurations and
//! record what it answers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::endpoint::{Responder, TransportError};
use crate::refdev::ReferenceDevice;
use crate::schema::{DeviceSchema, PropertyKind, PropertySpec};
use crate::seed::{self, Rng};

pub const TIME_COLUMN: &str = "processing_time_ms";
pub const STATUS_COLUMN: &str = "status_code";

const BOOLEAN_IMPOSTORS: [&str; 6] = ["yes", "no", "1", "0", "on", "off"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub features: BTreeMap<String, Value>,
    pub processing_time_ms: f64,
    pub status_code: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub schema_name: String,
    pub schema_version: String,
    pub records: Vec<RawRecord>,
    /// `false` when collection was cut short by an unreachable endpoint.
    pub complete: bool,
}

impl RawDataset {
    pub fn new(schema: &DeviceSchema) -> Self {
        Self {
            schema_name: schema.device_name.clone(),
            schema_version: schema.version_tag.clone(),
            records: Vec::new(),
            complete: true,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Splits off the tail as a held-out set.
    pub fn split_at(mut self, n: usize) -> (RawDataset, RawDataset) {
        let tail = self.records.split_off(n.min(self.records.len()));
        let other = RawDataset {
            records: tail,
            ..self.clone()
        };
        (self, other)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenBudget {
    pub max_requests: Option<usize>,
    pub max_duration_ms: Option<u64>,
    pub delay_ms: u64,
    pub p_out_of_range: f64,
}

impl Default for GenBudget {
    fn default() -> Self {
        Self {
            max_requests: None,
            max_duration_ms: None,
            delay_ms: 3000,
            p_out_of_range: 0.3,
        }
    }
}

impl GenBudget {
    pub fn requests(n: usize) -> Self {
        Self {
            max_requests: Some(n),
            ..Self::default()
        }
    }

    pub fn with_delay_ms(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }

    pub fn with_p_out(mut self, p: f64) -> Self {
        self.p_out_of_range = p;
        self
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.max_requests.is_none() && self.max_duration_ms.is_none() {
            return Err(GenError::InvalidBudget("set max_requests or max_duration".into()));
        }
        if !(0.0..=1.0).contains(&self.p_out_of_range) {
            return Err(GenError::InvalidBudget(format!(
                "p_out_of_range must lie in [0, 1], got {}",
                self.p_out_of_range
            )));
        }
        if self.max_requests == Some(0) || self.max_duration_ms == Some(0) {
            return Err(GenError::EmptyBudget);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_backoff_ms: 200,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("budget allows zero requests")]
    EmptyBudget,
    #[error("endpoint unreachable after retries ({source}); {} records collected", partial.len())]
    Unreachable {
        partial: RawDataset,
        source: TransportError,
    },
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset format: {0}")]
    Format(String),
}

/// Per-property corruption probability that makes a fully valid body as
/// likely as an invalid one: `1 - 0.5^(1/k)`.
pub fn balanced_p_out(schema: &DeviceSchema) -> f64 {
    let k = schema.properties.len().max(1) as f64;
    1.0 - 0.5f64.powf(1.0 / k)
}

/// One request body. Each property independently goes out of range with
/// probability `p_out`.
pub fn sample_config(schema: &DeviceSchema, rng: &mut Rng, p_out: f64) -> Value {
    let mut body = Map::new();
    for p in &schema.properties {
        let out = p_out > 0.0 && rng.random::<f64>() < p_out;
        let v = if out { out_of_range(p, rng) } else { in_range(p, rng) };
        body.insert(p.name.clone(), v);
    }
    Value::Object(body)
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn real(v: f64) -> Value {
    Value::Number(Number::from_f64(v).expect("finite"))
}

fn in_range(p: &PropertySpec, rng: &mut Rng) -> Value {
    match p.kind {
        PropertyKind::Integer => {
            let (lo, hi) = p.bounds();
            Value::from(rng.random_range(lo as i64..=hi as i64))
        }
        PropertyKind::Real => {
            let (lo, hi) = p.bounds();
            let v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            real(round3(v).clamp(lo, hi))
        }
        PropertyKind::Boolean => Value::Bool(rng.random()),
        PropertyKind::StringEnum => Value::String(p.allowed.choose(rng).expect("non-empty enum").clone()),
    }
}

fn out_of_range(p: &PropertySpec, rng: &mut Rng) -> Value {
    match p.kind {
        PropertyKind::Integer => {
            let (lo, hi) = p.bounds();
            let w = ((hi - lo) as i64).max(1);
            let d = rng.random_range(1..=2 * w);
            Value::from(if rng.random::<bool>() { hi as i64 + d } else { lo as i64 - d })
        }
        PropertyKind::Real => {
            let (lo, hi) = p.bounds();
            let w = (hi - lo).max(1e-3);
            // (0, 2w], never landing back on the bound after rounding
            let d = round3((1.0 - rng.random::<f64>()) * 2.0 * w).max(1e-3);
            let v = if rng.random::<bool>() { round3(hi + d) } else { round3(lo - d) };
            real(if (lo..=hi).contains(&v) { hi + d } else { v })
        }
        PropertyKind::Boolean => Value::String(BOOLEAN_IMPOSTORS.choose(rng).expect("non-empty").to_string()),
        PropertyKind::StringEnum => {
            let taken: Vec<String> = p.allowed.iter().map(|a| crate::dataprep::strip_special(a)).collect();
            loop {
                let len = rng.random_range(2..=4);
                let token: String = (0..len).map(|_| char::from(rng.random_range(b'A'..=b'Z'))).collect();
                if !taken.contains(&token) {
                    return Value::String(token);
                }
            }
        }
    }
}

fn record_from(body: &Value, resp_status: u16, elapsed_ms: f64) -> RawRecord {
    let features = body
        .as_object()
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default();
    RawRecord {
        features,
        processing_time_ms: elapsed_ms,
        status_code: resp_status,
    }
}

/// Probes `target` until the budget is spent. Requests go out strictly one
/// at a time with `delay_ms` between them.
pub async fn run_generation<R: Responder>(
    target: &R,
    schema: &DeviceSchema,
    budget: &GenBudget,
    seed: u64,
) -> Result<RawDataset, GenError> {
    run_generation_with(target, schema, budget, seed, RetryPolicy::default()).await
}

pub async fn run_generation_with<R: Responder>(
    target: &R,
    schema: &DeviceSchema,
    budget: &GenBudget,
    seed: u64,
    retry: RetryPolicy,
) -> Result<RawDataset, GenError> {
    budget.validate()?;
    let mut rng = seed::phase_rng(seed, "gen-data");
    let mut out = RawDataset::new(schema);
    let start = Instant::now();
    let deadline = budget.max_duration_ms.map(Duration::from_millis);
    let delay = Duration::from_millis(budget.delay_ms);
    loop {
        if budget.max_requests.is_some_and(|m| out.records.len() >= m) {
            break;
        }
        if deadline.is_some_and(|d| start.elapsed() >= d) {
            break;
        }
        if !out.records.is_empty() && !delay.is_zero() {
            tokio::time::sleep(delay).await;
            if deadline.is_some_and(|d| start.elapsed() >= d) {
                break;
            }
        }
        let body = sample_config(schema, &mut rng, budget.p_out_of_range);
        let bytes = serde_json::to_vec(&body).expect("body serializes");
        let mut attempt = 0;
        let resp = loop {
            match target.post(&bytes).await {
                Ok(r) => break r,
                Err(e) => {
                    attempt += 1;
                    if attempt >= retry.attempts {
                        out.complete = false;
                        return Err(GenError::Unreachable {
                            partial: out,
                            source: e,
                        });
                    }
                    let backoff = retry.base_backoff_ms.saturating_mul(1 << (attempt - 1));
                    tracing::warn!(attempt, backoff_ms = backoff, error = %e, "retrying request");
                    tokio::time::sleep(Duration::from_millis(backoff)).await;
                }
            }
        };
        out.records
            .push(record_from(&body, resp.status_code, resp.processing_time_ms));
    }
    Ok(out)
}

/// Synchronous collection straight from an in-process device, no delay.
pub fn generate_offline(device: &mut ReferenceDevice, n: usize, p_out: f64, seed: u64) -> RawDataset {
    let schema = device.schema().clone();
    let mut rng = seed::phase_rng(seed, "gen-data");
    let mut out = RawDataset::new(&schema);
    for _ in 0..n {
        let body = sample_config(&schema, &mut rng, p_out);
        let bytes = serde_json::to_vec(&body).expect("body serializes");
        let ms = device.next_latency().as_secs_f64() * 1000.0;
        let resp = device.post(&bytes);
        out.records.push(record_from(&body, resp.status_code, ms));
    }
    out
}

/// Text form of a raw value as it appears in a CSV cell. `None` for null.
pub fn value_to_cell(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        other => Some(other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenMetadata {
    pub schema_name: String,
    pub schema_version: String,
    pub seed: u64,
    pub budget: GenBudget,
    pub complete: bool,
    pub records: usize,
}

pub fn metadata_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the CSV plus its `.meta.json` sidecar.
pub fn write_dataset(
    dataset: &RawDataset,
    schema: &DeviceSchema,
    csv_path: &Path,
    seed: u64,
    budget: &GenBudget,
) -> Result<(), GenError> {
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header: Vec<&str> = schema.property_names().collect();
    header.push(TIME_COLUMN);
    header.push(STATUS_COLUMN);
    w.write_record(&header)?;
    for r in &dataset.records {
        let mut row: Vec<String> = schema
            .properties
            .iter()
            .map(|p| r.features.get(&p.name).and_then(value_to_cell).unwrap_or_default())
            .collect();
        row.push(r.processing_time_ms.to_string());
        row.push(r.status_code.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    let meta = GenMetadata {
        schema_name: dataset.schema_name.clone(),
        schema_version: dataset.schema_version.clone(),
        seed,
        budget: budget.clone(),
        complete: dataset.complete,
        records: dataset.records.len(),
    };
    std::fs::write(
        metadata_path(csv_path),
        serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )?;
    Ok(())
}

/// Reads a dataset CSV. Cells come back as strings (or null when empty);
/// the sidecar, if present, supplies schema identity and completeness.
pub fn read_dataset(csv_path: &Path) -> Result<RawDataset, GenError> {
    let mut rd = csv::Reader::from_path(csv_path)?;
    let header = rd.headers()?.clone();
    let time_col = header.iter().position(|h| h == TIME_COLUMN);
    let status_col = header
        .iter()
        .position(|h| h == STATUS_COLUMN)
        .ok_or_else(|| GenError::Format(format!("missing `{STATUS_COLUMN}` column")))?;
    let mut records = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let status_code = row[status_col]
            .trim()
            .parse::<u16>()
            .ok()
            .filter(|c| *c > 0)
            .ok_or_else(|| GenError::Format(format!("row {}: bad status code `{}`", i + 1, &row[status_col])))?;
        let processing_time_ms = match time_col {
            Some(c) => row[c].trim().parse::<f64>().unwrap_or(0.0),
            None => 0.0,
        };
        let mut features = BTreeMap::new();
        for (j, name) in header.iter().enumerate() {
            if j == status_col || Some(j) == time_col {
                continue;
            }
            let cell = &row[j];
            let v = if cell.is_empty() {
                Value::Null
            } else {
                Value::String(cell.to_string())
            };
            features.insert(name.to_string(), v);
        }
        records.push(RawRecord {
            features,
            processing_time_ms,
            status_code,
        });
    }
    let meta: Option<GenMetadata> = std::fs::read_to_string(metadata_path(csv_path))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    Ok(RawDataset {
        schema_name: meta.as_ref().map(|m| m.schema_name.clone()).unwrap_or_default(),
        schema_version: meta.as_ref().map(|m| m.schema_version.clone()).unwrap_or_default(),
        complete: meta.map(|m| m.complete).unwrap_or(true),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::refdev::ReferenceDeviceSpec;
    use crate::schema::validate_config;

    #[test]
    fn p_zero_always_valid() {
        let schema = builtin::schema("dosepod", "v1");
        let mut rng = seed::rng(1);
        for _ in 0..500 {
            let b = sample_config(&schema, &mut rng, 0.0);
            assert!(validate_config(&schema, b.as_object().unwrap()).is_ok());
        }
    }

    #[test]
    fn p_one_always_violates_every_property() {
        let schema = builtin::schema("dosepod", "v1");
        let mut rng = seed::rng(2);
        for _ in 0..500 {
            let b = sample_config(&schema, &mut rng, 1.0);
            let v = validate_config(&schema, b.as_object().unwrap());
            assert_eq!(v.violations().len(), schema.properties.len());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let schema = builtin::schema("pillmate", "v1");
        let a: Vec<Value> = {
            let mut r = seed::rng(9);
            (0..50).map(|_| sample_config(&schema, &mut r, 0.3)).collect()
        };
        let b: Vec<Value> = {
            let mut r = seed::rng(9);
            (0..50).map(|_| sample_config(&schema, &mut r, 0.3)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn balanced_p_gives_half_valid() {
        let schema = builtin::schema("pillmate", "v1");
        let p = balanced_p_out(&schema);
        assert!((1.0 - p).powi(schema.properties.len() as i32) - 0.5 < 1e-12);
    }

    #[test]
    fn csv_round_trip_preserves_cells() {
        let schema = builtin::schema("dosepod", "v1");
        let mut dev = ReferenceDevice::new(ReferenceDeviceSpec::new(schema.clone(), "DP-0001", 4)).unwrap();
        let ds = generate_offline(&mut dev, 40, 0.3, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        write_dataset(&ds, &schema, &path, 4, &GenBudget::requests(40)).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.len(), 40);
        assert_eq!(back.schema_name, "dosepod");
        for (a, b) in ds.records.iter().zip(&back.records) {
            assert_eq!(a.status_code, b.status_code);
            for (k, v) in &a.features {
                assert_eq!(value_to_cell(v), value_to_cell(&b.features[k]), "{k}");
            }
        }
    }
}
