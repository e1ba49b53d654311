use std::time::{Duration, Instant};

use serde_json::Value;

use crate::device::DeviceResponse;
use crate::endpoint::{Responder, TransportError};
use crate::schema::{DeviceSchema, EndpointRole, SN_PLACEHOLDER};

/// HTTP client for one device or twin. Processing time is measured on the
/// client side.
#[derive(Debug, Clone)]
pub struct DeviceClient {
    http: reqwest::Client,
    base_url: String,
    serial: String,
    read_path: String,
    write_path: String,
}

fn transport(e: reqwest::Error) -> TransportError {
    if e.is_connect() || e.is_timeout() {
        TransportError::Unreachable(e.to_string())
    } else {
        TransportError::Protocol(e.to_string())
    }
}

impl DeviceClient {
    pub fn new(base_url: &str, schema: &DeviceSchema, serial: &str) -> Self {
        let path = |role| {
            schema
                .endpoint(role)
                .map(|e| e.path.replace(SN_PLACEHOLDER, serial))
                .expect("schemas carry both config endpoints")
        };
        Self {
            http: shared_http_client(),
            base_url: base_url.trim_end_matches('/').to_string(),
            serial: serial.to_string(),
            read_path: path(EndpointRole::ReadConfig),
            write_path: path(EndpointRole::WriteConfig),
        }
    }

    pub fn with_http(mut self, http: reqwest::Client) -> Self {
        self.http = http;
        self
    }

    pub fn serial(&self) -> &str {
        &self.serial
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    async fn finish(resp: reqwest::Response, t0: Instant) -> Result<DeviceResponse, TransportError> {
        let status = resp.status().as_u16();
        let text = resp.text().await.map_err(transport)?;
        let body = serde_json::from_str::<Value>(&text).unwrap_or(Value::String(text));
        Ok(DeviceResponse {
            status_code: status,
            body,
            processing_time_ms: t0.elapsed().as_secs_f64() * 1000.0,
        })
    }
}

/// Shared connection pool with a generous timeout.
pub fn shared_http_client() -> reqwest::Client {
    reqwest::Client::builder()
        .timeout(Duration::from_secs(30))
        .pool_max_idle_per_host(64)
        .build()
        .expect("http client builds")
}

impl Responder for DeviceClient {
    async fn get(&self, selector: Option<&str>) -> Result<DeviceResponse, TransportError> {
        let t0 = Instant::now();
        let mut req = self.http.get(format!("{}{}", self.base_url, self.read_path));
        if let Some(s) = selector {
            req = req.query(&[("property", s)]);
        }
        let resp = req.send().await.map_err(transport)?;
        Self::finish(resp, t0).await
    }

    async fn post(&self, body: &[u8]) -> Result<DeviceResponse, TransportError> {
        let t0 = Instant::now();
        let resp = self
            .http
            .post(format!("{}{}", self.base_url, self.write_path))
            .header("content-type", "application/json")
            .body(body.to_vec())
            .send()
            .await
            .map_err(transport)?;
        Self::finish(resp, t0).await
    }

    async fn reset(&self) -> Result<(), TransportError> {
        let resp = self
            .http
            .post(format!("{}/_admin/{}/reset", self.base_url, self.serial))
            .send()
            .await
            .map_err(transport)?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(TransportError::Protocol(format!("reset answered {}", resp.status())))
        }
    }
}

/// `GET /fleet/stats`.
pub async fn fetch_stats(base_url: &str) -> Result<Value, TransportError> {
    let resp = shared_http_client()
        .get(format!("{}/fleet/stats", base_url.trim_end_matches('/')))
        .send()
        .await
        .map_err(transport)?;
    resp.json().await.map_err(transport)
}
