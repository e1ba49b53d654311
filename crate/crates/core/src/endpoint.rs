//! Anything that answers device-shaped requests: an in-process reference
//! device, a twin, or a remote HTTP endpoint.

use std::future::Future;
use std::sync::Arc;

use crate::device::DeviceResponse;
use crate::http::client::DeviceClient;
use crate::refdev::SharedDevice;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum TransportError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub trait Responder: Send + Sync {
    fn get(&self, selector: Option<&str>) -> impl Future<Output = Result<DeviceResponse, TransportError>> + Send;
    fn post(&self, body: &[u8]) -> impl Future<Output = Result<DeviceResponse, TransportError>> + Send;
    /// Restores schema defaults.
    fn reset(&self) -> impl Future<Output = Result<(), TransportError>> + Send;
}

impl Responder for SharedDevice {
    async fn get(&self, selector: Option<&str>) -> Result<DeviceResponse, TransportError> {
        Ok(SharedDevice::get(self, selector).await)
    }

    async fn post(&self, body: &[u8]) -> Result<DeviceResponse, TransportError> {
        Ok(SharedDevice::post(self, body).await)
    }

    async fn reset(&self) -> Result<(), TransportError> {
        SharedDevice::reset(self).await;
        Ok(())
    }
}

impl<T: Responder> Responder for Arc<T> {
    async fn get(&self, selector: Option<&str>) -> Result<DeviceResponse, TransportError> {
        T::get(self, selector).await
    }

    async fn post(&self, body: &[u8]) -> Result<DeviceResponse, TransportError> {
        T::post(self, body).await
    }

    async fn reset(&self) -> Result<(), TransportError> {
        T::reset(self).await
    }
}

/// Where a physical (reference) device lives.
#[derive(Debug, Clone)]
pub enum DeviceLink {
    Local(Arc<SharedDevice>),
    Remote(DeviceClient),
}

impl Responder for DeviceLink {
    async fn get(&self, selector: Option<&str>) -> Result<DeviceResponse, TransportError> {
        match self {
            DeviceLink::Local(d) => Ok(SharedDevice::get(d, selector).await),
            DeviceLink::Remote(c) => c.get(selector).await,
        }
    }

    async fn post(&self, body: &[u8]) -> Result<DeviceResponse, TransportError> {
        match self {
            DeviceLink::Local(d) => Ok(SharedDevice::post(d, body).await),
            DeviceLink::Remote(c) => c.post(body).await,
        }
    }

    async fn reset(&self) -> Result<(), TransportError> {
        match self {
            DeviceLink::Local(d) => {
                SharedDevice::reset(d).await;
                Ok(())
            }
            DeviceLink::Remote(c) => c.reset().await,
        }
    }
}
