mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use twinkit_core::datagen::sample_config;
use twinkit_core::evalstats::canonical_response;
use twinkit_core::http::client::{fetch_stats, DeviceClient};
use twinkit_core::http::server::FleetRequest;
use twinkit_core::metalearn::save_model;
use twinkit_core::{
    build_twin, builtin, launch_fleet, DeviceSchema, FleetConfig, FleetError, ModelArtifact, Responder, TwinInstance,
    TwinOptions,
};

const TWINS: usize = 4;

struct Setup {
    _dir: tempfile::TempDir,
    cfg: FleetConfig,
    schema: Arc<DeviceSchema>,
    artifact: Arc<ModelArtifact>,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let artifact = common::bpcuff_artifact(300);
    let schema = builtin::schema("bpcuff", "v1");
    let model = dir.path().join("model.json");
    let schema_file = dir.path().join("schema.json");
    save_model(&model, &artifact).unwrap();
    std::fs::write(&schema_file, schema.to_json()).unwrap();
    let mut cfg = FleetConfig::uniform("BP-", TWINS, &model, &schema_file);
    cfg.batch_size = 3;
    Setup {
        _dir: dir,
        cfg,
        schema: Arc::new(schema),
        artifact: Arc::new(artifact),
    }
}

fn oracles(s: &Setup) -> Vec<TwinInstance> {
    s.cfg
        .entries
        .iter()
        .map(|e| build_twin(s.schema.clone(), &e.serial_number, s.artifact.clone(), None, TwinOptions::default()).unwrap())
        .collect()
}

#[derive(Debug, Clone)]
enum Op {
    Post(u64, f64),
    Get,
    Reset,
}

fn arb_op() -> impl Strategy<Value = (usize, Op)> {
    let op = prop_oneof![
        6 => (any::<u64>(), 0.0f64..0.6).prop_map(|(s, p)| Op::Post(s, p)),
        2 => Just(Op::Get),
        1 => Just(Op::Reset),
    ];
    (0..TWINS, op)
}

async fn apply<R: Responder>(target: &R, schema: &DeviceSchema, op: &Op) -> Option<String> {
    match op {
        Op::Post(seed, p) => {
            let body = sample_config(schema, &mut twinkit_core::seed::rng(*seed), *p);
            let r = target.post(&serde_json::to_vec(&body).unwrap()).await.unwrap();
            Some(canonical_response(r.status_code, &r.body))
        }
        Op::Get => {
            let r = target.get(None).await.unwrap();
            Some(canonical_response(r.status_code, &r.body))
        }
        Op::Reset => {
            target.reset().await.unwrap();
            None
        }
    }
}

#[test]
fn interleaved_requests_match_isolated_twins() {
    let s = setup();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let fleet = rt.block_on(launch_fleet(&s.cfg)).unwrap();
    assert_eq!(fleet.waves(), 2);
    let url = fleet.base_url();
    let clients: Vec<DeviceClient> = s
        .cfg
        .entries
        .iter()
        .map(|e| DeviceClient::new(&url, &s.schema, &e.serial_number))
        .collect();

    let mut runner = TestRunner::new(Config::with_cases(12));
    runner
        .run(&prop::collection::vec(arb_op(), 1..60), |ops| {
            rt.block_on(async {
                for c in &clients {
                    c.reset().await.unwrap();
                }
                let local = oracles(&s);
                for (i, (k, op)) in ops.iter().enumerate() {
                    let got = apply(&clients[*k], &s.schema, op).await;
                    let want = apply(&local[*k], &s.schema, op).await;
                    prop_assert_eq!(got, want, "op {} {:?} on twin {}", i, op, k);
                }
                for (c, t) in clients.iter().zip(&local) {
                    let remote = c.get(None).await.unwrap();
                    prop_assert_eq!(remote.body, t.get(None).await.body);
                }
                Ok(())
            })
        })
        .unwrap();
    rt.block_on(fleet.shutdown()).unwrap();
}

#[test]
fn concurrent_clients_stay_isolated() {
    let s = setup();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let fleet = rt.block_on(launch_fleet(&s.cfg)).unwrap();
    let url = fleet.base_url();
    let per_twin = 40;
    let results = rt.block_on(async {
        let mut tasks = Vec::new();
        for (k, e) in s.cfg.entries.iter().enumerate() {
            let client = DeviceClient::new(&url, &s.schema, &e.serial_number);
            let schema = s.schema.clone();
            tasks.push(tokio::spawn(async move {
                let mut out = Vec::new();
                for i in 0..per_twin {
                    let op = Op::Post((k * 1000 + i) as u64, 0.3);
                    out.push(apply(&client, &schema, &op).await);
                }
                out
            }));
        }
        let mut all = Vec::new();
        for t in tasks {
            all.push(t.await.unwrap());
        }
        all
    });
    let local = oracles(&s);
    rt.block_on(async {
        for (k, got) in results.iter().enumerate() {
            for (i, g) in got.iter().enumerate() {
                let want = apply(&local[k], &s.schema, &Op::Post((k * 1000 + i) as u64, 0.3)).await;
                assert_eq!(g, &want, "twin {k} request {i}");
            }
        }
    });
    let stats = rt.block_on(fetch_stats(&url)).unwrap();
    assert_eq!(stats["active_twins"], TWINS);
    for e in &s.cfg.entries {
        assert_eq!(stats["requests"][&e.serial_number], per_twin);
    }
    let routed = rt.block_on(fleet.route_request("BP-00001", FleetRequest::Get { selector: None }));
    assert!(routed.is_success());
    let missing = rt.block_on(fleet.route_request("BP-77777", FleetRequest::Get { selector: None }));
    assert_eq!(missing.status_code, 404);
    rt.block_on(fleet.shutdown()).unwrap();
}

fn launch_err(cfg: &FleetConfig) -> FleetError {
    let rt = tokio::runtime::Runtime::new().unwrap();
    match rt.block_on(launch_fleet(cfg)) {
        Ok(_) => panic!("fleet should not launch"),
        Err(e) => e,
    }
}

#[test]
fn bad_configs_are_rejected() {
    let s = setup();
    let mut dup = s.cfg.clone();
    dup.entries.push(dup.entries[0].clone());
    assert!(matches!(launch_err(&dup), FleetError::DuplicateSerial(_)));

    let mut zero = s.cfg.clone();
    zero.batch_size = 0;
    assert!(matches!(launch_err(&zero), FleetError::Config(_)));

    let mut missing = s.cfg.clone();
    missing.entries[2].artifact = Path::new("/nonexistent/model.json").into();
    match launch_err(&missing) {
        FleetError::Entry { serial, .. } => assert_eq!(serial, "BP-00002"),
        other => panic!("unexpected {other}"),
    }

    let mut host = s.cfg.clone();
    host.host = "not a host".into();
    assert!(matches!(launch_err(&host), FleetError::Config(_)));
}

#[test]
fn config_file_paths_resolve_against_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"entries":[{"serial_number":"BP-1","artifact":"m.json","schema":"s.json"}],"data_dir":"state"}"#;
    let file = dir.path().join("fleet.json");
    std::fs::write(&file, text).unwrap();
    let cfg = FleetConfig::load(&file).unwrap();
    assert_eq!(cfg.entries[0].artifact, dir.path().join("m.json"));
    assert_eq!(cfg.data_dir, Some(dir.path().join("state")));
    assert_eq!(cfg.batch_size, 100);
    let back: BTreeMap<String, serde_json::Value> = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert!(back.contains_key("entries"));
    assert!(matches!(FleetConfig::from_json("{}"), Err(FleetError::Config(_))));
}
