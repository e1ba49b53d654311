//! Paired twin/device fidelity runs.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cliff::cliffs_delta;
use super::metrics::{macro_metrics, ClassMetrics};
use super::similarity::{canonical_response, hamming_similarity};
use super::wilcoxon::{wilcoxon_signed_rank, Alternative, StatResult};
use crate::datagen::sample_config;
use crate::device::DeviceResponse;
use crate::endpoint::{Responder, TransportError};
use crate::schema::DeviceSchema;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityOptions {
    pub p_out_of_range: f64,
    /// Compare only status codes instead of full canonical bodies.
    pub status_only: bool,
    pub alternative: Alternative,
}

impl Default for FidelityOptions {
    fn default() -> Self {
        Self {
            p_out_of_range: 0.3,
            status_only: false,
            alternative: Alternative::TwoSided,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestScore {
    pub index: usize,
    pub twin_status: u16,
    pub device_status: u16,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub requested: usize,
    pub complete: bool,
    pub scores: Vec<RequestScore>,
    pub summary_similarity: f64,
    pub median_similarity: f64,
    pub wilcoxon: StatResult,
    pub cliffs_delta: f64,
    pub metrics: ClassMetrics<u16>,
    pub wall_time_ms: f64,
    pub twin_time_ms: f64,
    pub device_time_ms: f64,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FidelityError {
    #[error("n_requests must be positive")]
    NoRequests,
    #[error("no request completed: {0}")]
    NothingCompleted(TransportError),
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn render(r: &DeviceResponse, status_only: bool) -> String {
    if status_only {
        r.status_code.to_string()
    } else {
        canonical_response(r.status_code, &r.body)
    }
}

/// Statistics over per-request scores.
pub fn summarize(
    scores: Vec<RequestScore>,
    requested: usize,
    complete: bool,
    alternative: Alternative,
    times: (f64, f64, f64),
) -> EvalReport {
    let sims: Vec<f64> = scores.iter().map(|s| s.similarity).collect();
    let twin: Vec<f64> = scores.iter().map(|s| f64::from(s.twin_status)).collect();
    let dev: Vec<f64> = scores.iter().map(|s| f64::from(s.device_status)).collect();
    let truth: Vec<u16> = scores.iter().map(|s| s.device_status).collect();
    let pred: Vec<u16> = scores.iter().map(|s| s.twin_status).collect();
    EvalReport {
        requested,
        complete,
        summary_similarity: sims.iter().sum::<f64>() / sims.len() as f64,
        median_similarity: median(&sims),
        wilcoxon: wilcoxon_signed_rank(&twin, &dev, alternative).expect("paired non-empty"),
        cliffs_delta: cliffs_delta(&twin, &dev).expect("non-empty"),
        metrics: macro_metrics(&truth, &pred).expect("non-empty"),
        scores,
        wall_time_ms: times.0,
        twin_time_ms: times.1,
        device_time_ms: times.2,
    }
}

/// Sends the same `n` sampled bodies to both sides, resetting each before
/// every request so one divergence cannot leak into later comparisons.
pub async fn paired_fidelity_run<T: Responder, D: Responder>(
    twin: &T,
    device: &D,
    schema: &DeviceSchema,
    n_requests: usize,
    seed: u64,
    opts: &FidelityOptions,
) -> Result<EvalReport, FidelityError> {
    if n_requests == 0 {
        return Err(FidelityError::NoRequests);
    }
    let start = Instant::now();
    let mut rng = seed::phase_rng(seed, "fidelity");
    let mut scores = Vec::with_capacity(n_requests);
    let (mut t_twin, mut t_dev) = (0.0, 0.0);
    let mut failure = None;
    for index in 0..n_requests {
        let body = sample_config(schema, &mut rng, opts.p_out_of_range);
        let bytes = serde_json::to_vec(&body).expect("body serializes");
        let step = async {
            twin.reset().await?;
            let t0 = Instant::now();
            let tr = twin.post(&bytes).await?;
            let t1 = Instant::now();
            device.reset().await?;
            let t2 = Instant::now();
            let dr = device.post(&bytes).await?;
            let t3 = Instant::now();
            Ok::<_, TransportError>((tr, dr, (t1 - t0).as_secs_f64(), (t3 - t2).as_secs_f64()))
        };
        match step.await {
            Ok((tr, dr, a, b)) => {
                t_twin += a * 1000.0;
                t_dev += b * 1000.0;
                let sim = hamming_similarity(&render(&tr, opts.status_only), &render(&dr, opts.status_only))
                    .expect("rendered responses are non-empty");
                scores.push(RequestScore {
                    index,
                    twin_status: tr.status_code,
                    device_status: dr.status_code,
                    similarity: sim.percent,
                });
            }
            Err(e) => {
                tracing::warn!(index, error = %e, "fidelity run interrupted");
                failure = Some(e);
                break;
            }
        }
    }
    if scores.is_empty() {
        return Err(FidelityError::NothingCompleted(failure.expect("failure recorded")));
    }
    Ok(summarize(
        scores,
        n_requests,
        failure.is_none(),
        opts.alternative,
        (start.elapsed().as_secs_f64() * 1000.0, t_twin, t_dev),
    ))
}

impl EvalReport {
    pub fn completed(&self) -> usize {
        self.scores.len()
    }

    /// One-row table: `Sim. % | p-value | Cliff δ | macro F1`.
    pub fn table(&self, label: &str) -> String {
        format!(
            "{:<24} {:>8} {:>10} {:>9} {:>9} {:>6}\n{:<24} {:>8.2} {:>10.4} {:>9.3} {:>9.4} {:>6}\n",
            "twin",
            "Sim. %",
            "p-value",
            "Cliff δ",
            "macro F1",
            "n",
            label,
            self.summary_similarity,
            self.wilcoxon.p_value,
            self.cliffs_delta,
            self.metrics.macro_f1,
            self.completed()
        )
    }

    pub fn write_scores_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "index,twin_status,device_status,similarity")?;
        for s in &self.scores {
            writeln!(f, "{},{},{},{}", s.index, s.twin_status, s.device_status, s.similarity)?;
        }
        f.flush()
    }
}
