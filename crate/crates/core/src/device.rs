//! Response type shared by reference devices, twins, and the HTTP client.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceResponse {
    pub status_code: u16,
    pub body: Value,
    /// Time spent producing the response: measured for twins and HTTP round
    /// trips, the injected latency for emulated devices.
    pub processing_time_ms: f64,
}

impl DeviceResponse {
    pub fn ok(body: Value) -> Self {
        Self::with_status(200, body)
    }

    pub fn with_status(status_code: u16, body: Value) -> Self {
        Self {
            status_code,
            body,
            processing_time_ms: 0.0,
        }
    }

    /// Error body used by every responder: `{"error": <reason>, "status": <code>}`.
    pub fn error(status_code: u16) -> Self {
        Self::with_status(status_code, error_body(status_code))
    }

    pub fn is_success(&self) -> bool {
        is_success(self.status_code)
    }

    pub fn family(&self) -> StatusFamily {
        StatusFamily::of(self.status_code)
    }
}

pub fn error_body(status_code: u16) -> Value {
    json!({ "error": reason_phrase(status_code), "status": status_code })
}

pub fn is_success(code: u16) -> bool {
    (200..300).contains(&code)
}

pub fn reason_phrase(code: u16) -> &'static str {
    match code {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        409 => "Conflict",
        422 => "Unprocessable Entity",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        c if (400..500).contains(&c) => "Client Error",
        c if (500..600).contains(&c) => "Server Error",
        _ => "Unknown",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatusFamily {
    Success,
    ClientError,
    ServerError,
    Other,
}

impl StatusFamily {
    pub fn of(code: u16) -> Self {
        match code / 100 {
            2 => StatusFamily::Success,
            4 => StatusFamily::ClientError,
            5 => StatusFamily::ServerError,
            _ => StatusFamily::Other,
        }
    }
}
