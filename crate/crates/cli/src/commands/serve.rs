use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use twinkit_core::http::server::{bind, serve, Gateway, Node};
use twinkit_core::twin::state_path;
use twinkit_core::{
    build_twin, launch_fleet, load_model, CalibrationKind, CalibrationMode, FleetConfig, FleetEntry, TwinOptions,
};

use super::{ensure_parent, shutdown_signal};
use crate::args::{BuildTwinsArgs, ServeFleetArgs, ServeRefdevArgs};
use crate::failure::{Categorize, Classify, Failure, Outcome};
use crate::inputs::{default_serial, load_schema, nth_serial, Emulator};
use crate::manifest::Recorder;
use crate::settings::Settings;

fn absolute(p: &Path) -> Outcome<PathBuf> {
    std::path::absolute(p).data(format!("resolving {}", p.display()))
}

pub fn build_twins(a: BuildTwinsArgs, s: &Settings) -> Outcome<()> {
    let mut rec = Recorder::new("build-twins");
    let mut r = s.section("build-twins");
    if let Some(seed) = r.opt("seed", a.seed)? {
        rec.seed(seed);
    }
    let model: PathBuf = r.require("model", a.model)?;
    let spec: String = r.require("schema", a.schema)?;
    let schema = load_schema(&spec, &mut rec)?;
    let count = r.or("count", a.count, 1usize)?;
    let prefix = r.or("prefix", a.prefix, schema.sn_prefix.clone())?;
    let start = r.or("start", a.start, 1usize)?;
    let data_dir = r.or("data-dir", a.data_dir, PathBuf::from("twins"))?;
    let kind: CalibrationKind = r.parsed("calibration", a.calibration, "off")?;
    let calibration = CalibrationMode {
        mode: kind,
        device_endpoint: r.opt("device-endpoint", a.device_endpoint)?,
        log_agreements: r.switch("log-agreements", a.log_agreements)?,
    };
    let out = r.or("out", a.out, data_dir.join("fleet.json"))?;
    if count == 0 {
        return Err(Failure::usage("--count must be positive"));
    }
    ensure_parent(&out)?;
    std::fs::create_dir_all(&data_dir).data(format!("creating {}", data_dir.display()))?;

    let t = Instant::now();
    rec.input(&model);
    let artifact = Arc::new(load_model(&model).classify(format!("loading {}", model.display()))?);
    let schema_file = if Path::new(&spec).is_file() {
        PathBuf::from(&spec)
    } else {
        let p = data_dir.join(format!("{}.schema.json", schema.id()));
        std::fs::write(&p, schema.to_json()).data(format!("writing {}", p.display()))?;
        rec.output(&p);
        p
    };
    let schema = Arc::new(schema);
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let serial = format!("{prefix}{:04}", start + i);
        let opts = TwinOptions {
            data_dir: Some(data_dir.clone()),
            calibration: calibration.clone(),
            device: None,
        };
        build_twin(schema.clone(), &serial, artifact.clone(), None, opts).classify(format!("twin {serial}"))?;
        rec.output(&state_path(&data_dir, &serial));
        entries.push(FleetEntry {
            serial_number: serial,
            artifact: absolute(&model)?,
            schema: absolute(&schema_file)?,
            calibration: calibration.clone(),
        });
    }
    rec.lap("build", t);
    let mut fleet = FleetConfig::new(entries);
    fleet.data_dir = Some(absolute(&data_dir)?);
    let text = serde_json::to_string_pretty(&fleet).expect("fleet config serializes");
    std::fs::write(&out, text).data(format!("writing {}", out.display()))?;
    rec.output(&out);
    rec.write(&out, r.finish())?;
    println!("built {count} twins in {}, fleet file {}", data_dir.display(), out.display());
    Ok(())
}

fn announce(url: &str) {
    println!("listening on {url}");
    let _ = std::io::stdout().flush();
}

pub async fn serve_fleet(a: ServeFleetArgs, s: &Settings) -> Outcome<()> {
    let mut r = s.section("serve-fleet");
    let path: PathBuf = r.require("config", a.config)?;
    let mut cfg = FleetConfig::load(&path).classify(format!("fleet file {}", path.display()))?;
    if let Some(h) = r.opt("host", a.host)? {
        cfg.host = h;
    }
    if let Some(p) = r.opt("port", a.port)? {
        cfg.port = p;
    }
    if let Some(b) = r.opt("batch-size", a.batch_size)? {
        cfg.batch_size = b;
    }
    if let Some(d) = r.opt("data-dir", a.data_dir)? {
        cfg.data_dir = Some(d);
    }
    let _ = r.opt("seed", a.seed)?;
    let fleet = launch_fleet(&cfg).await.classify("launching fleet")?;
    tracing::info!(twins = fleet.stats().active_twins, waves = fleet.waves(), "fleet up");
    announce(&fleet.base_url());
    shutdown_signal().await;
    fleet.shutdown().await.network("shutting down")?;
    println!("stopped");
    Ok(())
}

pub async fn serve_refdev(a: ServeRefdevArgs, s: &Settings) -> Outcome<()> {
    let mut rec = Recorder::new("serve-refdev");
    let mut r = s.section("serve-refdev");
    let seed = r.or("seed", a.seed, 0)?;
    let spec: String = r.require("schema", a.schema)?;
    let schema = load_schema(&spec, &mut rec)?;
    let first = r.or("serial", a.serial, default_serial(&schema))?;
    let count = r.or("count", a.count, 1usize)?;
    let host = r.or("host", a.host, "127.0.0.1".to_string())?;
    let port = r.or("port", a.port, 0u16)?;
    let emu = Emulator::resolve(&mut r, a.emulator, seed)?;
    if count == 0 {
        return Err(Failure::usage("--count must be positive"));
    }

    let gateway = Arc::new(Gateway::new());
    for i in 0..count {
        let serial = nth_serial(&first, i)?;
        let e = Emulator {
            seed: emu.seed.wrapping_add(i as u64),
            ..emu.clone()
        };
        let dev = e.device(&schema, &serial)?;
        gateway
            .register(Node::Device(Arc::new(dev)))
            .usage(format!("device {serial}"))?;
    }
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .usage(format!("address {host}:{port}"))?;
    let listener = bind(addr).await.network(format!("binding {addr}"))?;
    let server = serve(gateway, listener).network("starting server")?;
    announce(&server.base_url());
    shutdown_signal().await;
    server.shutdown().await.network("shutting down")?;
    println!("stopped");
    Ok(())
}
