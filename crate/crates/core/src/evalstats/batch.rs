//! Fidelity across fleet sizes: every twin in a batch is compared with the
//! same device over HTTP, many twins at a time.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::fidelity::{median, paired_fidelity_run, EvalReport, FidelityOptions};
use crate::device::DeviceResponse;
use crate::endpoint::{DeviceLink, Responder, TransportError};
use crate::fleet::{launch_fleet, FleetConfig, FleetError};
use crate::http::client::{shared_http_client, DeviceClient};
use crate::schema::DeviceSchema;

/// Device shared by concurrent comparisons. Each POST resets the device
/// and posts under one lock; the standalone reset is a no-op.
#[derive(Debug, Clone)]
pub struct ExclusiveDevice {
    link: DeviceLink,
    lock: Arc<tokio::sync::Mutex<()>>,
}

impl ExclusiveDevice {
    pub fn new(link: DeviceLink) -> Self {
        Self {
            link,
            lock: Arc::new(tokio::sync::Mutex::new(())),
        }
    }
}

impl Responder for ExclusiveDevice {
    async fn get(&self, selector: Option<&str>) -> Result<DeviceResponse, TransportError> {
        let _g = self.lock.lock().await;
        self.link.get(selector).await
    }

    async fn post(&self, body: &[u8]) -> Result<DeviceResponse, TransportError> {
        let _g = self.lock.lock().await;
        self.link.reset().await?;
        self.link.post(body).await
    }

    async fn reset(&self) -> Result<(), TransportError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinFidelity {
    pub serial: String,
    pub summary_similarity: f64,
    pub macro_f1: f64,
    pub completed: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch_size: usize,
    pub active_twins: usize,
    pub waves: usize,
    pub twins: Vec<TwinFidelity>,
    pub median_similarity: f64,
    pub mean_similarity: f64,
    /// Unrouted requests, internal errors and incomplete twin runs.
    pub fleet_errors: u64,
    /// Requests the fleet gateway routed to a twin.
    pub routed_requests: u64,
    pub wall_time_ms: f64,
    /// Full report of the first twin, for single-twin comparison.
    pub first: Option<EvalReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub requests_per_twin: usize,
    pub clients: usize,
    pub seed: u64,
}

pub async fn batch_fidelity(
    base: &FleetConfig,
    schema: &DeviceSchema,
    device: DeviceLink,
    sizes: &[usize],
    batch: BatchOptions,
    opts: &FidelityOptions,
) -> Result<Vec<BatchReport>, FleetError> {
    let device = ExclusiveDevice::new(device);
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 || size > base.entries.len() {
            return Err(FleetError::Config(format!(
                "batch size {size} needs 1..={} fleet entries",
                base.entries.len()
            )));
        }
        let mut cfg = base.clone();
        cfg.entries.truncate(size);
        let start = Instant::now();
        let fleet = launch_fleet(&cfg).await?;
        let active = fleet.stats().active_twins;
        let url = fleet.base_url();
        let http = shared_http_client();
        let sem = Arc::new(tokio::sync::Semaphore::new(batch.clients.max(1)));
        let mut set = tokio::task::JoinSet::new();
        for (i, e) in cfg.entries.iter().enumerate() {
            let client = DeviceClient::new(&url, schema, &e.serial_number).with_http(http.clone());
            let dev = device.clone();
            let schema = schema.clone();
            let sem = sem.clone();
            let opts = opts.clone();
            let n = batch.requests_per_twin;
            let seed = batch.seed.wrapping_add(i as u64);
            set.spawn(async move {
                let _permit = sem.acquire_owned().await.expect("semaphore open");
                let r = paired_fidelity_run(&client, &dev, &schema, n, seed, &opts).await;
                (i, client.serial().to_string(), r)
            });
        }
        let mut results = Vec::with_capacity(size);
        while let Some(joined) = set.join_next().await {
            results.push(joined.expect("fidelity task panicked"));
        }
        results.sort_by_key(|(i, _, _)| *i);
        let mut errors = 0u64;
        let mut twins = Vec::with_capacity(size);
        let mut first = None;
        for (i, serial, r) in results {
            match r {
                Ok(rep) => {
                    if !rep.complete {
                        errors += 1;
                    }
                    twins.push(TwinFidelity {
                        serial,
                        summary_similarity: rep.summary_similarity,
                        macro_f1: rep.metrics.macro_f1,
                        completed: rep.completed(),
                        complete: rep.complete,
                    });
                    if i == 0 {
                        first = Some(rep);
                    }
                }
                Err(e) => {
                    tracing::warn!(%serial, error = %e, "twin fidelity failed");
                    errors += 1;
                }
            }
        }
        let stats = fleet.stats();
        errors += stats.unrouted;
        let sims: Vec<f64> = twins.iter().map(|t| t.summary_similarity).collect();
        let waves = fleet.waves();
        fleet
            .shutdown()
            .await
            .map_err(|e| FleetError::Config(format!("shutdown: {e}")))?;
        out.push(BatchReport {
            batch_size: size,
            active_twins: active,
            waves,
            median_similarity: median(&sims),
            mean_similarity: sims.iter().sum::<f64>() / sims.len().max(1) as f64,
            twins,
            fleet_errors: errors,
            routed_requests: stats.requests.values().sum(),
            wall_time_ms: start.elapsed().as_secs_f64() * 1000.0,
            first,
        });
    }
    Ok(out)
}
