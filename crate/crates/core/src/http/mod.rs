pub mod client;
pub mod server;

pub use client::{fetch_stats, DeviceClient};
pub use server::{bind, router, serve, FleetRequest, FleetStats, Gateway, GatewayError, Node, ServerHandle};
