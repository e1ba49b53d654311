use std::sync::Arc;

use twinkit_core::datagen::{balanced_p_out, run_generation_with, RetryPolicy};
use twinkit_core::evalstats::canonical_response;
use twinkit_core::http::client::{fetch_stats, DeviceClient};
use twinkit_core::http::server::{bind, serve, Gateway, Node, ServerHandle};
use twinkit_core::{
    builtin, run_generation, DeviceSchema, FaultMode, GenBudget, GenError, ReferenceDevice, ReferenceDeviceSpec,
    Responder, SharedDevice, TransportError,
};

fn spec(schema: &DeviceSchema, serial: &str, fault_rate: f64) -> ReferenceDeviceSpec {
    ReferenceDeviceSpec::new(schema.clone(), serial, 3).with_faults(fault_rate, FaultMode::Region)
}

async fn serve_devices(devices: Vec<ReferenceDeviceSpec>) -> ServerHandle {
    let gw = Arc::new(Gateway::new());
    for s in devices {
        let dev = SharedDevice::new(ReferenceDevice::new(s).unwrap());
        gw.register(Node::Device(Arc::new(dev))).unwrap();
    }
    let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    serve(gw, listener).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn client_matches_in_process_device() {
    let schema = builtin::schema("pillmate", "v1");
    let server = serve_devices(vec![spec(&schema, "PM-0001", 0.1)]).await;
    let client = DeviceClient::new(&server.base_url(), &schema, "PM-0001");
    let local = SharedDevice::new(ReferenceDevice::new(spec(&schema, "PM-0001", 0.1)).unwrap());
    let mut rng = twinkit_core::seed::phase_rng(1, "test");
    for i in 0..200 {
        let body = twinkit_core::sample_config(&schema, &mut rng, balanced_p_out(&schema));
        let bytes = serde_json::to_vec(&body).unwrap();
        let (a, b) = if i % 7 == 3 {
            (client.get(Some("volume")).await.unwrap(), local.get(Some("volume")).await)
        } else {
            (client.post(&bytes).await.unwrap(), local.post(&bytes).await)
        };
        assert_eq!(a.status_code, b.status_code, "request {i}");
        assert_eq!(canonical_response(a.status_code, &a.body), canonical_response(b.status_code, &b.body), "request {i}");
        if i % 50 == 49 {
            client.reset().await.unwrap();
            local.reset().await;
        }
    }
    let stats = fetch_stats(&server.base_url()).await.unwrap();
    assert_eq!(stats["active_devices"], 1);
    assert_eq!(stats["requests"]["PM-0001"], 200);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unknown_routes_and_serials() {
    let schema = builtin::schema("bpcuff", "v1");
    let server = serve_devices(vec![spec(&schema, "BP-0001", 0.0)]).await;
    let url = server.base_url();
    let stranger = DeviceClient::new(&url, &schema, "BP-9999");
    assert_eq!(stranger.get(None).await.unwrap().status_code, 404);
    assert_eq!(stranger.post(b"{}").await.unwrap().status_code, 404);
    assert!(matches!(stranger.reset().await, Err(TransportError::Protocol(_))));
    let known = DeviceClient::new(&url, &schema, "BP-0001");
    assert_eq!(known.post(b"{oops").await.unwrap().status_code, 400);
    let stats = fetch_stats(&url).await.unwrap();
    assert!(stats["unrouted"].as_u64().unwrap() >= 2);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn generation_over_http_matches_in_process() {
    let schema = builtin::schema("dosepod", "v1");
    let server = serve_devices(vec![spec(&schema, "DP-0001", 0.05)]).await;
    let client = DeviceClient::new(&server.base_url(), &schema, "DP-0001");
    let local = SharedDevice::new(ReferenceDevice::new(spec(&schema, "DP-0001", 0.05)).unwrap());
    let budget = GenBudget::requests(300).with_delay_ms(0);
    let remote = run_generation(&client, &schema, &budget, 17).await.unwrap();
    let offline = run_generation(&local, &schema, &budget, 17).await.unwrap();
    assert_eq!(remote.len(), 300);
    assert!(remote.complete);
    for (a, b) in remote.records.iter().zip(&offline.records) {
        assert_eq!(a.features, b.features);
        assert_eq!(a.status_code, b.status_code);
        assert!(a.processing_time_ms > 0.0, "round trips are measured");
    }
    let codes: std::collections::BTreeSet<u16> = remote.records.iter().map(|r| r.status_code).collect();
    assert!(codes.len() >= 2, "{codes:?}");
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unreachable_endpoint_returns_partial_data() {
    let schema = builtin::schema("bpcuff", "v1");
    let server = serve_devices(vec![spec(&schema, "BP-0001", 0.0)]).await;
    let url = server.base_url();
    let client = DeviceClient::new(&url, &schema, "BP-0001");
    let budget = GenBudget::requests(5).with_delay_ms(0);
    let retry = RetryPolicy {
        attempts: 2,
        base_backoff_ms: 1,
    };
    let ok = run_generation_with(&client, &schema, &budget, 1, retry).await.unwrap();
    assert_eq!(ok.len(), 5);
    server.shutdown().await.unwrap();

    let err = run_generation_with(&client, &schema, &budget, 1, retry).await.unwrap_err();
    match err {
        GenError::Unreachable { partial, source } => {
            assert_eq!(partial.len(), 0);
            assert!(!partial.complete);
            assert!(matches!(source, TransportError::Unreachable(_)), "{source}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn selector_reads_one_property() {
    let schema = builtin::schema("bpcuff", "v1");
    let server = serve_devices(vec![spec(&schema, "BP-0001", 0.0)]).await;
    let client = DeviceClient::new(&server.base_url(), &schema, "BP-0001");
    let full = client.get(None).await.unwrap();
    assert!(full.is_success());
    let name = &schema.properties[0].name;
    let one = client.get(Some(name)).await.unwrap();
    assert!(one.is_success());
    assert_eq!(one.body[name.as_str()], full.body[name.as_str()]);
    assert_eq!(client.get(Some("nope")).await.unwrap().status_code, 404);
    server.shutdown().await.unwrap();
}
