//! One HTTP listener in front of any number of devices and twins.
//!
//! Routes are the schema endpoint paths with the serial substituted, plus
//! `GET /fleet/stats` and `POST /_admin/{sn}/reset`.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::device::DeviceResponse;
use crate::refdev::SharedDevice;
use crate::schema::{DeviceSchema, EndpointRole, HttpMethod, SN_PLACEHOLDER};
use crate::twin::TwinInstance;

#[derive(Debug, Clone)]
pub enum Node {
    Device(Arc<SharedDevice>),
    Twin(Arc<TwinInstance>),
}

impl Node {
    pub fn serial_number(&self) -> &str {
        match self {
            Node::Device(d) => d.serial_number(),
            Node::Twin(t) => t.serial_number(),
        }
    }

    pub fn schema(&self) -> &DeviceSchema {
        match self {
            Node::Device(d) => d.schema(),
            Node::Twin(t) => t.schema(),
        }
    }

    pub async fn get(&self, selector: Option<&str>) -> DeviceResponse {
        match self {
            Node::Device(d) => d.get(selector).await,
            Node::Twin(t) => t.get(selector).await,
        }
    }

    pub async fn post(&self, body: &[u8]) -> DeviceResponse {
        match self {
            Node::Device(d) => d.post(body).await,
            Node::Twin(t) => t.post(body).await,
        }
    }

    pub async fn reset(&self) {
        match self {
            Node::Device(d) => {
                d.reset().await;
            }
            Node::Twin(t) => t.reset().await,
        }
    }
}

#[derive(Debug)]
struct Entry {
    node: Node,
    requests: AtomicU64,
    non_success: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetStats {
    pub active_twins: usize,
    pub active_devices: usize,
    pub requests: BTreeMap<String, u64>,
    pub non_success: BTreeMap<String, u64>,
    /// Requests that matched no registered route.
    pub unrouted: u64,
    pub p50_latency_ms: f64,
    pub p95_latency_ms: f64,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("duplicate serial `{0}`")]
    DuplicateSerial(String),
    #[error("route {method:?} {path} already taken")]
    RouteClash { method: HttpMethod, path: String },
}

/// A request addressed to one serial number.
#[derive(Debug, Clone, PartialEq)]
pub enum FleetRequest {
    Get { selector: Option<String> },
    Post { body: Vec<u8> },
}

const LATENCY_WINDOW: usize = 200_000;

#[derive(Debug, Default)]
pub struct Gateway {
    routes: RwLock<HashMap<(HttpMethod, String), (Arc<Entry>, EndpointRole)>>,
    by_serial: RwLock<BTreeMap<String, Arc<Entry>>>,
    latencies: Mutex<Vec<f64>>,
    latency_cursor: AtomicU64,
    unrouted: AtomicU64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, node: Node) -> Result<(), GatewayError> {
        let serial = node.serial_number().to_string();
        let mut by_serial = self.by_serial.write().expect("registry lock");
        if by_serial.contains_key(&serial) {
            return Err(GatewayError::DuplicateSerial(serial));
        }
        let mut routes = self.routes.write().expect("registry lock");
        let keys: Vec<((HttpMethod, String), EndpointRole)> = node
            .schema()
            .endpoints
            .iter()
            .map(|e| ((e.method, e.path.replace(SN_PLACEHOLDER, &serial)), e.role))
            .collect();
        if let Some(((method, path), _)) = keys.iter().find(|(k, _)| routes.contains_key(k)) {
            return Err(GatewayError::RouteClash {
                method: *method,
                path: path.clone(),
            });
        }
        let entry = Arc::new(Entry {
            node,
            requests: AtomicU64::new(0),
            non_success: AtomicU64::new(0),
        });
        for (k, role) in keys {
            routes.insert(k, (entry.clone(), role));
        }
        by_serial.insert(serial, entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.by_serial.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, serial: &str) -> Option<Node> {
        self.by_serial
            .read()
            .expect("registry lock")
            .get(serial)
            .map(|e| e.node.clone())
    }

    pub fn serials(&self) -> Vec<String> {
        self.by_serial.read().expect("registry lock").keys().cloned().collect()
    }

    fn record(&self, entry: &Entry, resp: &DeviceResponse) {
        entry.requests.fetch_add(1, Ordering::Relaxed);
        if !resp.is_success() {
            entry.non_success.fetch_add(1, Ordering::Relaxed);
        }
        let slot = self.latency_cursor.fetch_add(1, Ordering::Relaxed) as usize;
        let mut l = self.latencies.lock().expect("latency lock");
        if l.len() < LATENCY_WINDOW {
            l.push(resp.processing_time_ms);
        } else {
            l[slot % LATENCY_WINDOW] = resp.processing_time_ms;
        }
    }

    /// Dispatches by concrete path. Unknown paths answer 404, known paths
    /// with the wrong method 405.
    pub async fn dispatch(&self, method: HttpMethod, path: &str, selector: Option<&str>, body: &[u8]) -> DeviceResponse {
        let hit = self
            .routes
            .read()
            .expect("registry lock")
            .get(&(method, path.to_string()))
            .cloned();
        let Some((entry, role)) = hit else {
            let other = match method {
                HttpMethod::Get => HttpMethod::Post,
                HttpMethod::Post => HttpMethod::Get,
            };
            let exists = self
                .routes
                .read()
                .expect("registry lock")
                .contains_key(&(other, path.to_string()));
            if exists {
                return DeviceResponse::error(405);
            }
            self.unrouted.fetch_add(1, Ordering::Relaxed);
            return DeviceResponse::error(404);
        };
        let resp = match role {
            EndpointRole::ReadConfig => entry.node.get(selector).await,
            EndpointRole::WriteConfig => entry.node.post(body).await,
        };
        self.record(&entry, &resp);
        resp
    }

    /// In-process routing by serial number.
    pub async fn route_request(&self, serial: &str, req: FleetRequest) -> DeviceResponse {
        let entry = self.by_serial.read().expect("registry lock").get(serial).cloned();
        let Some(entry) = entry else {
            self.unrouted.fetch_add(1, Ordering::Relaxed);
            return DeviceResponse::error(404);
        };
        let resp = match req {
            FleetRequest::Get { selector } => entry.node.get(selector.as_deref()).await,
            FleetRequest::Post { body } => entry.node.post(&body).await,
        };
        self.record(&entry, &resp);
        resp
    }

    pub async fn reset(&self, serial: &str) -> bool {
        match self.node(serial) {
            Some(n) => {
                n.reset().await;
                true
            }
            None => false,
        }
    }

    pub fn stats(&self) -> FleetStats {
        let by_serial = self.by_serial.read().expect("registry lock");
        let mut s = FleetStats {
            active_twins: 0,
            active_devices: 0,
            requests: BTreeMap::new(),
            non_success: BTreeMap::new(),
            unrouted: self.unrouted.load(Ordering::Relaxed),
            p50_latency_ms: 0.0,
            p95_latency_ms: 0.0,
        };
        for (sn, e) in by_serial.iter() {
            match e.node {
                Node::Twin(_) => s.active_twins += 1,
                Node::Device(_) => s.active_devices += 1,
            }
            s.requests.insert(sn.clone(), e.requests.load(Ordering::Relaxed));
            s.non_success.insert(sn.clone(), e.non_success.load(Ordering::Relaxed));
        }
        let mut lat = self.latencies.lock().expect("latency lock").clone();
        lat.sort_by(f64::total_cmp);
        s.p50_latency_ms = percentile(&lat, 0.5);
        s.p95_latency_ms = percentile(&lat, 0.95);
        s
    }
}

fn to_http(resp: DeviceResponse) -> Response {
    let status = StatusCode::from_u16(resp.status_code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut r = (status, axum::Json(resp.body)).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("{:.3}", resp.processing_time_ms)) {
        r.headers_mut().insert("x-processing-time-ms", v);
    }
    r
}

async fn handle(
    State(gw): State<Arc<Gateway>>,
    method: Method,
    uri: Uri,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> Response {
    let path = uri.path();
    if path == "/fleet/stats" {
        return if method == Method::GET {
            axum::Json(gw.stats()).into_response()
        } else {
            to_http(DeviceResponse::error(405))
        };
    }
    if let Some(serial) = path.strip_prefix("/_admin/").and_then(|r| r.strip_suffix("/reset")) {
        if method != Method::POST {
            return to_http(DeviceResponse::error(405));
        }
        return if gw.reset(serial).await {
            to_http(DeviceResponse::ok(json!({"reset": serial})))
        } else {
            to_http(DeviceResponse::error(404))
        };
    }
    let m = match method {
        Method::GET => HttpMethod::Get,
        Method::POST => HttpMethod::Post,
        _ => return to_http(DeviceResponse::error(405)),
    };
    let selector = query.get("property").map(String::as_str);
    to_http(gw.dispatch(m, path, selector, &body).await)
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new().fallback(handle).with_state(gateway)
}

#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    join: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match (&mut self.join).await {
            Ok(r) => r,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }

    /// Resolves when the server exits on its own.
    pub async fn wait(mut self) -> std::io::Result<()> {
        match (&mut self.join).await {
            Ok(r) => r,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await
}

/// Serves the gateway on an already-bound listener.
pub fn serve(gateway: Arc<Gateway>, listener: tokio::net::TcpListener) -> std::io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(gateway);
    let join = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        join,
    })
}
