use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use twinkit_core::evalstats::{
    batch_fidelity, paired_fidelity_run, recommend_shot_method, Alternative, BatchOptions, EvalReport, FeatureLevel,
    FidelityOptions, TaskKind, Upgrade,
};
use twinkit_core::http::client::DeviceClient;
use twinkit_core::{build_twin, load_model, DeviceLink, DeviceSchema, FleetConfig, Responder, TwinOptions};

use super::ensure_parent;
use crate::args::{BatchEvalArgs, EvaluateArgs, FidelityArgs, RecommendArgs};
use crate::failure::{Categorize, Classify, Failure, Outcome};
use crate::inputs::{default_serial, load_schema, Emulator};
use crate::manifest::Recorder;
use crate::settings::{Resolver, Settings};

fn fidelity_options(r: &mut Resolver, a: FidelityArgs) -> Outcome<FidelityOptions> {
    let d = FidelityOptions::default();
    Ok(FidelityOptions {
        p_out_of_range: r.or("p-out", a.p_out, d.p_out_of_range)?,
        status_only: r.switch("status-only", a.status_only)?,
        alternative: if r.switch("one-sided", a.one_sided)? {
            Alternative::Greater
        } else {
            d.alternative
        },
    })
}

async fn run_pair<T: Responder>(
    twin: &T,
    device: &DeviceLink,
    schema: &DeviceSchema,
    n: usize,
    seed: u64,
    opts: &FidelityOptions,
) -> Outcome<EvalReport> {
    paired_fidelity_run(twin, device, schema, n, seed, opts)
        .await
        .classify("fidelity run")
}

pub async fn evaluate(a: EvaluateArgs, s: &Settings) -> Outcome<()> {
    let mut rec = Recorder::new("evaluate");
    let mut r = s.section("evaluate");
    let seed = r.or("seed", a.seed, 0)?;
    rec.seed(seed);
    let spec: String = r.require("schema", a.schema)?;
    let schema = load_schema(&spec, &mut rec)?;
    let serial = r.or("serial", a.serial, default_serial(&schema))?;
    let device_serial = r.or("device-serial", a.device_serial, serial.clone())?;
    let n = r.or("requests", a.requests, 500usize)?;
    let out = r.or("out", a.out, PathBuf::from("eval"))?;
    let opts = fidelity_options(&mut r, a.fidelity)?;
    let twin_url: Option<String> = r.opt("twin-url", a.twin_url)?;
    let model: Option<PathBuf> = r.opt("model", a.model)?;
    let device = match r.opt::<String>("device-url", a.device_url)? {
        Some(url) => DeviceLink::Remote(DeviceClient::new(&url, &schema, &device_serial)),
        None => Emulator::resolve(&mut r, a.emulator, 0)?.link(&schema, &device_serial)?,
    };
    std::fs::create_dir_all(&out).data(format!("creating {}", out.display()))?;

    let t = Instant::now();
    let report = match (twin_url, model) {
        (Some(url), None) => {
            let client = DeviceClient::new(&url, &schema, &serial);
            run_pair(&client, &device, &schema, n, seed, &opts).await?
        }
        (None, Some(m)) => {
            rec.input(&m);
            let artifact = Arc::new(load_model(&m).classify(format!("loading {}", m.display()))?);
            let twin = build_twin(Arc::new(schema.clone()), &serial, artifact, None, TwinOptions::default())
                .classify(format!("twin {serial}"))?;
            run_pair(&twin, &device, &schema, n, seed, &opts).await?
        }
        _ => return Err(Failure::usage("give exactly one of --twin-url and --model")),
    };
    rec.lap("evaluate", t);

    let report_path = out.join("report.json");
    let scores_path = out.join("scores.csv");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&report_path, text).data(format!("writing {}", report_path.display()))?;
    report
        .write_scores_csv(&scores_path)
        .data(format!("writing {}", scores_path.display()))?;
    rec.output(&report_path);
    rec.output(&scores_path);
    rec.metric("similarity", report.summary_similarity);
    rec.metric("p_value", report.wilcoxon.p_value);
    rec.metric("cliffs_delta", report.cliffs_delta);
    rec.metric("macro_f1", report.metrics.macro_f1);
    rec.write(&report_path, r.finish())?;
    print!("{}", report.table(&serial));
    if !report.complete {
        return Err(Failure::new(
            crate::failure::Category::Network,
            anyhow::anyhow!("only {} of {n} requests completed", report.completed()),
        ));
    }
    Ok(())
}

fn schema_of_fleet(cfg: &FleetConfig, rec: &mut Recorder) -> Outcome<DeviceSchema> {
    let first = cfg
        .entries
        .first()
        .ok_or_else(|| Failure::data("fleet file has no twin entries"))?;
    load_schema(&first.schema.to_string_lossy(), rec)
}

pub async fn batch_eval(a: BatchEvalArgs, s: &Settings) -> Outcome<()> {
    let mut rec = Recorder::new("batch-eval");
    let mut r = s.section("batch-eval");
    let seed = r.or("seed", a.seed, 0)?;
    rec.seed(seed);
    let path: PathBuf = r.require("config", a.config)?;
    rec.input(&path);
    let mut cfg = FleetConfig::load(&path).classify(format!("fleet file {}", path.display()))?;
    if let Some(d) = r.opt("data-dir", a.data_dir)? {
        cfg.data_dir = Some(d);
    }
    cfg.port = 0;
    let schema = match r.opt::<String>("schema", a.schema)? {
        Some(spec) => load_schema(&spec, &mut rec)?,
        None => schema_of_fleet(&cfg, &mut rec)?,
    };
    let sizes = r.or("sizes", a.sizes, vec![cfg.entries.len()])?;
    let batch = BatchOptions {
        requests_per_twin: r.or("requests-per-twin", a.requests_per_twin, 20usize)?,
        clients: r.or("clients", a.clients, 16usize)?,
        seed,
    };
    let device_serial = r.or("device-serial", a.device_serial, default_serial(&schema))?;
    let opts = fidelity_options(&mut r, a.fidelity)?;
    let device = match r.opt::<String>("device-url", a.device_url)? {
        Some(url) => DeviceLink::Remote(DeviceClient::new(&url, &schema, &device_serial)),
        None => Emulator::resolve(&mut r, a.emulator, 0)?.link(&schema, &device_serial)?,
    };
    let out = r.or("out", a.out, PathBuf::from("batch-report.json"))?;
    ensure_parent(&out)?;

    let t = Instant::now();
    let reports = batch_fidelity(&cfg, &schema, device, &sizes, batch, &opts)
        .await
        .classify("batch evaluation")?;
    rec.lap("evaluate", t);
    let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
    std::fs::write(&out, text).data(format!("writing {}", out.display()))?;
    rec.output(&out);
    let errors: u64 = reports.iter().map(|b| b.fleet_errors).sum();
    rec.metric("fleet_errors", errors as f64);
    rec.write(&out, r.finish())?;

    println!(
        "{:>6} {:>7} {:>6} {:>10} {:>10} {:>8} {:>10}",
        "batch", "active", "waves", "median %", "mean %", "errors", "wall ms"
    );
    for b in &reports {
        println!(
            "{:>6} {:>7} {:>6} {:>10.2} {:>10.2} {:>8} {:>10.0}",
            b.batch_size, b.active_twins, b.waves, b.median_similarity, b.mean_similarity, b.fleet_errors, b.wall_time_ms
        );
    }
    if errors > 0 {
        return Err(Failure::new(
            crate::failure::Category::Network,
            anyhow::anyhow!("{errors} fleet errors, see {}", out.display()),
        ));
    }
    Ok(())
}

pub fn recommend(a: RecommendArgs, s: &Settings) -> Outcome<()> {
    let mut r = s.section("recommend");
    let features: FeatureLevel = r.parsed("features", a.features, "medium")?;
    let task: TaskKind = r.parsed("task", a.task, "train")?;
    let constrained = r.switch("time-constrained", a.time_constrained)?;
    let upgrade = match r.opt::<String>("upgrade", a.upgrade)? {
        Some(u) => Some(u.parse::<Upgrade>().usage("--upgrade")?),
        None => None,
    };
    let shots = recommend_shot_method(features, task, constrained, upgrade).usage("recommend")?;
    println!("{shots}");
    Ok(())
}
