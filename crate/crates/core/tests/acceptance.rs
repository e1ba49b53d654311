//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde_json::Value;

use twinkit_core::builtin;
use twinkit_core::datagen::{balanced_p_out, generate_offline, sample_config, RawDataset};
use twinkit_core::dataprep::{fit_transform, transform_dataset, PrepOptions, TransformManifest};
use twinkit_core::device::is_success;
use twinkit_core::endpoint::DeviceLink;
use twinkit_core::evalstats::{
    batch_fidelity, cliffs_delta, hamming_similarity, macro_metrics, paired_fidelity_run, wilcoxon_with, Alternative,
    BatchOptions, EvalReport, FidelityOptions, Method,
};
use twinkit_core::fleet::FleetConfig;
use twinkit_core::metalearn::grad::{loss, loss_and_grad};
use twinkit_core::metalearn::{
    adapt_model, predict_all, sample_task, save_model, train_maml, Dims, MetaDataset, MlpModel, ModelArtifact,
    TaskConfig, TaskError, TrainConfig,
};
use twinkit_core::refdev::{FaultMode, ReferenceDevice, ReferenceDeviceSpec, SharedDevice};
use twinkit_core::schema::{DeviceConfig, DeviceSchema};
use twinkit_core::seed;
use twinkit_core::twin::{build_twin, TwinInstance, TwinOptions};

const SEED: u64 = 2024;
const DEVICE_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn schemas_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

// ---------------------------------------------------------------- 1

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = Dims {
            input: rng.random_range(1..=8),
            hidden: rng.random_range(1..=16),
            output: rng.random_range(2..=5),
        };
        let p: Vec<f64> = (0..d.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = rng.random_range(1..=8);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d.input).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let xs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let head: Option<Vec<usize>> = if rng.random::<bool>() {
            let mut all: Vec<usize> = (0..d.output).collect();
            all.shuffle(&mut rng);
            let k = rng.random_range(2..=d.output);
            let mut h = all[..k].to_vec();
            h.sort_unstable();
            Some(h)
        } else {
            None
        };
        let classes = head.as_ref().map_or(d.output, Vec::len);
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let mut g = vec![0.0; p.len()];
        loss_and_grad(&p, d, &xs, &ys, head.as_deref(), &mut g);
        let h = 1e-5;
        let mut q = p.clone();
        for i in 0..p.len() {
            q[i] = p[i] + h;
            let up = loss(&q, d, &xs, &ys, head.as_deref());
            q[i] = p[i] - h;
            let down = loss(&q, d, &xs, &ys, head.as_deref());
            q[i] = p[i];
            let fd = (up - down) / (2.0 * h);
            // relative error, guarded for gradients at round-off scale
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-4 && secs < 10.0,
        format!("max relative error {worst:.2e}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 2

fn naive_macro(t: &[u8], p: &[u8]) -> (f64, f64, f64) {
    let mut classes: Vec<u8> = t.iter().chain(p).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let idx = |c: u8| classes.iter().position(|&x| x == c).unwrap();
    let k = classes.len();
    let mut cm = vec![vec![0usize; k]; k];
    for (a, b) in t.iter().zip(p) {
        cm[idx(*a)][idx(*b)] += 1;
    }
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = cm[c][c];
        let fp: usize = (0..k).filter(|&r| r != c).map(|r| cm[r][c]).sum();
        let fn_: usize = (0..k).filter(|&j| j != c).map(|j| cm[c][j]).sum();
        let pr = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let re = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f = if pr + re > 0.0 { 2.0 * pr * re / (pr + re) } else { 0.0 };
        sp += pr;
        sr += re;
        sf += f;
    }
    (sp / k as f64, sr / k as f64, sf / k as f64)
}

fn brute_cliff(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0i64;
    for x in a {
        for y in b {
            s += (x > y) as i64 - (x < y) as i64;
        }
    }
    s as f64 / (a.len() * b.len()) as f64
}

/// Two-sided exact p by listing all sign patterns of the non-zero ranks.
fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return 1.0;
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks2: Vec<u64> = abs
        .iter()
        .map(|v| {
            let less = abs.iter().filter(|w| *w < v).count() as u64;
            let eq = abs.iter().filter(|w| *w == v).count() as u64;
            2 * less + eq + 1
        })
        .collect();
    let w: u64 = d.iter().zip(&ranks2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let s: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks2[i]).sum();
        ge += (s >= w) as u64;
        le += (s <= w) as u64;
    }
    let total = (1u64 << n) as f64;
    (2.0 * (ge as f64 / total).min(le as f64 / total)).min(1.0)
}

fn naive_hamming(x: &str, y: &str) -> usize {
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    let mut m = 0;
    for i in 0..a.len().max(b.len()) {
        match (a.get(i), b.get(i)) {
            (Some(p), Some(q)) if p == q => {}
            _ => m += 1,
        }
    }
    m
}

fn criterion_metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(SEED + 2);
    let mut bad = Vec::new();
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        let k = rng.random_range(1..6u8);
        let t: Vec<u8> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let p: Vec<u8> = (0..n).map(|_| rng.random_range(0..k + 1)).collect();
        let m = macro_metrics(&t, &p).unwrap();
        if (m.macro_precision, m.macro_recall, m.macro_f1) != naive_macro(&t, &p) {
            bad.push(format!("macro case {case}"));
        }

        let a: Vec<f64> = (0..rng.random_range(1..40)).map(|_| rng.random_range(0..12) as f64).collect();
        let b: Vec<f64> = (0..rng.random_range(1..40)).map(|_| rng.random_range(0..12) as f64).collect();
        if (cliffs_delta(&a, &b).unwrap() - brute_cliff(&a, &b)).abs() > 1e-12 {
            bad.push(format!("cliff case {case}"));
        }

        let n = rng.random_range(1..=10);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let w = wilcoxon_with(&a, &b, Alternative::TwoSided, Method::Exact).unwrap();
        if (w.p_value - enumerated_p(&a, &b)).abs() > 1e-12 {
            bad.push(format!("wilcoxon case {case}"));
        }

        let alphabet = ['a', 'b', '{', '"', '2', 'é'];
        let mut s = || -> String {
            (0..rng.random_range(1..30))
                .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                .collect()
        };
        let (x, y) = (s(), s());
        if hamming_similarity(&x, &y).unwrap().mismatches != naive_hamming(&x, &y) {
            bad.push(format!("hamming case {case}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 30.0,
        format!("4000 oracle comparisons, {} mismatches {:?}, {secs:.2}s", bad.len(), bad.iter().take(3).collect::<Vec<_>>()),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_tasksets() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(SEED + 3);
    let mut sampled = 0;
    let mut violations = 0;
    while sampled < 10_000 {
        let classes = rng.random_range(2..=6);
        let rows = rng.random_range(classes..200);
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();
        let Ok(meta) = MetaDataset::from_labels(&labels) else { continue };
        let n = rng.random_range(2..=meta.n_classes());
        let k = [1, 2, 5][rng.random_range(0..3)];
        let cfg = TaskConfig {
            n_ways: n,
            k_shots: k,
            m_tasks: 1,
            task_size: n * k + rng.random_range(1..100),
        };
        for _ in 0..10 {
            let task = match sample_task(&meta, &cfg, &mut rng) {
                Ok(t) => t,
                Err(TaskError::InsufficientRows { .. }) => break,
                Err(e) => panic!("unexpected {e}"),
            };
            sampled += 1;
            let mut seen: Vec<usize> = task.adapt_labels.iter().chain(&task.eval_labels).copied().collect();
            seen.sort_unstable();
            seen.dedup();
            let per_label_ok = (0..n).all(|l| task.adapt_labels.iter().filter(|x| **x == l).count() == k);
            let disjoint = task.adapt_rows.iter().all(|r| !task.eval_rows.contains(r));
            let consistent = task
                .adapt_rows
                .iter()
                .zip(&task.adapt_labels)
                .chain(task.eval_rows.iter().zip(&task.eval_labels))
                .all(|(r, l)| labels[*r] == task.classes[*l]);
            if seen != (0..n).collect::<Vec<_>>()
                || task.adapt_rows.len() != n * k
                || !per_label_ok
                || !disjoint
                || !consistent
            {
                violations += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        violations == 0 && secs < 30.0,
        format!("{sampled} tasks, {violations} violations, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 4-6 pipeline

fn device_spec(schema: &DeviceSchema, fault_rate: f64) -> ReferenceDeviceSpec {
    ReferenceDeviceSpec::new(schema.clone(), format!("{}0001", schema.sn_prefix), DEVICE_SEED)
        .with_faults(fault_rate, FaultMode::Region)
}

fn emulate(schema: &DeviceSchema, fault_rate: f64, n: usize, seed: u64) -> RawDataset {
    let mut dev = ReferenceDevice::new(device_spec(schema, fault_rate)).expect("valid spec");
    generate_offline(&mut dev, n, balanced_p_out(schema), seed)
}

fn held_out_f1(model: &MlpModel, manifest: &TransformManifest, test: &RawDataset) -> f64 {
    let (data, _) = transform_dataset(manifest, test);
    macro_metrics(&data.labels, &predict_all(model, &data)).unwrap().macro_f1
}

#[derive(Debug, Clone, PartialEq)]
struct AdaptLink {
    name: String,
    f1: f64,
    iterations: usize,
    ratio: f64,
    artifact: Vec<u8>,
}

struct Pipeline {
    schema: DeviceSchema,
    artifact: ModelArtifact,
    artifact_bytes: Vec<u8>,
    f1: f64,
    train_secs: f64,
    train_iterations: usize,
    fidelity: EvalReport,
    fidelity_secs: f64,
    links: Vec<AdaptLink>,
}

fn run_pipeline(rt: &tokio::runtime::Runtime) -> Pipeline {
    let schema = builtin::schema("pillmate", "v1");
    let raw = emulate(&schema, 0.05, 3000, SEED);
    let (train, test) = raw.split_at(2000);
    let data = fit_transform(&train, &schema, &PrepOptions::default()).expect("prep");
    let cfg = TrainConfig::train_defaults().with_seed(SEED);
    let t0 = Instant::now();
    let (model, report) = train_maml(&data, &TaskConfig::train_defaults(), &cfg).expect("train");
    let train_secs = t0.elapsed().as_secs_f64();
    let f1 = held_out_f1(&model, &data.manifest, &test);
    let artifact = ModelArtifact::new(model, data.manifest.clone(), cfg, Some(&report));
    let artifact_bytes = artifact.to_bytes();

    // fidelity: the twin against the emulator that labeled its data
    let t0 = Instant::now();
    let fidelity = rt.block_on(async {
        let twin = build_twin(
            Arc::new(schema.clone()),
            &format!("{}0001", schema.sn_prefix),
            Arc::new(artifact.clone()),
            None,
            TwinOptions::default(),
        )
        .expect("twin");
        let device = SharedDevice::new(ReferenceDevice::new(device_spec(&schema, 0.05)).unwrap());
        paired_fidelity_run(&twin, &device, &schema, 500, SEED, &FidelityOptions::default())
            .await
            .expect("fidelity")
    });
    let fidelity_secs = t0.elapsed().as_secs_f64();

    let adapt = |base: &MlpModel, device: &str, version: &str, seed: u64| {
        let s = builtin::schema(device, version);
        let raw = emulate(&s, 0.0, 1500, seed);
        let (train, test) = raw.split_at(500);
        let data = fit_transform(&train, &s, &PrepOptions::default()).expect("prep");
        let cfg = TrainConfig::adapt_defaults().with_seed(SEED);
        let (m, r) = adapt_model(base, &data, &TaskConfig::adapt_defaults(), &cfg).expect("adapt");
        let link = AdaptLink {
            name: format!("{device}-{version}"),
            f1: held_out_f1(&m, &data.manifest, &test),
            iterations: r.iterations_run,
            ratio: r.wall_time_ms / report.wall_time_ms,
            artifact: ModelArtifact::new(m.clone(), data.manifest, cfg, Some(&r)).to_bytes(),
        };
        (m, link)
    };
    let mut links = Vec::new();
    let (_, cross) = adapt(&artifact.model, "dosepod", "v1", SEED + 10);
    links.push(cross);
    let mut prev = artifact.model.clone();
    for (i, v) in ["v2", "v3", "v4"].into_iter().enumerate() {
        let (m, link) = adapt(&prev, "pillmate", v, SEED + 11 + i as u64);
        links.push(link);
        prev = m;
    }
    Pipeline {
        schema,
        artifact,
        artifact_bytes,
        f1,
        train_secs,
        train_iterations: report.iterations_run,
        fidelity,
        fidelity_secs,
        links,
    }
}

fn criterion_quality(p: &Pipeline) -> Outcome {
    outcome(
        p.f1 >= 0.95 && p.train_secs <= 600.0,
        format!(
            "held-out macro F1 {:.4} after {} iterations, training {:.1}s",
            p.f1, p.train_iterations, p.train_secs
        ),
    )
}

fn criterion_fidelity(p: &Pipeline) -> Outcome {
    let r = &p.fidelity;
    outcome(
        r.complete
            && r.summary_similarity >= 95.0
            && r.wilcoxon.p_value > 0.05
            && r.cliffs_delta.abs() <= 0.147
            && p.fidelity_secs <= 300.0,
        format!(
            "similarity {:.2}%, Wilcoxon p {:.4}, Cliff delta {:.4}, {:.1}s",
            r.summary_similarity, r.wilcoxon.p_value, r.cliffs_delta, p.fidelity_secs
        ),
    )
}

fn criterion_adaptation(p: &Pipeline) -> Outcome {
    let ok = p
        .links
        .iter()
        .all(|l| l.f1 >= 0.90 && l.iterations <= 1000 && l.ratio <= 0.2);
    let detail = p
        .links
        .iter()
        .map(|l| format!("{} F1 {:.4} in {} it (x{:.3} of training)", l.name, l.f1, l.iterations, l.ratio))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(ok, detail)
}

// ---------------------------------------------------------------- 7

fn criterion_fleet(rt: &tokio::runtime::Runtime, p: &Pipeline) -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let artifact_path = dir.path().join("pillmate.model.json");
    save_model(&artifact_path, &p.artifact).expect("save");
    let schema_path = schemas_dir().join("pillmate-v1.json");
    let base = FleetConfig::uniform(&p.schema.sn_prefix, 400, &artifact_path, &schema_path);
    let device = Arc::new(SharedDevice::new(ReferenceDevice::new(device_spec(&p.schema, 0.05)).unwrap()));
    let start = Instant::now();
    let reports = rt.block_on(batch_fidelity(
        &base,
        &p.schema,
        DeviceLink::Local(device),
        &[100, 200, 400],
        BatchOptions {
            requests_per_twin: 20,
            clients: 16,
            seed: SEED,
        },
        &FidelityOptions::default(),
    ));
    let secs = start.elapsed().as_secs_f64();
    let reports = match reports {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("fleet failed: {e}")),
    };
    let single = p.fidelity.summary_similarity;
    let ok = reports.iter().all(|r| {
        r.fleet_errors == 0
            && r.active_twins == r.batch_size
            && r.routed_requests >= (r.batch_size * 20) as u64
            && (r.median_similarity - single).abs() <= 2.0
    }) && secs <= 900.0;
    let detail = reports
        .iter()
        .map(|r| {
            format!(
                "{} twins: median {:.2}%, {} routed, {} errors, {:.1}s",
                r.batch_size,
                r.median_similarity,
                r.routed_requests,
                r.fleet_errors,
                r.wall_time_ms / 1000.0
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(ok, format!("{detail} (single twin {single:.2}%)"))
}

// ---------------------------------------------------------------- 8

fn merged(schema: &DeviceSchema, state: &DeviceConfig, body: &Value) -> DeviceConfig {
    let mut next = state.clone();
    if let Value::Object(m) = body {
        for (k, v) in m {
            if schema.property(k).is_some() {
                next.insert(k.clone(), v.clone());
            }
        }
    }
    next
}

fn config_of(body: &Value) -> DeviceConfig {
    body.as_object()
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default()
}

fn criterion_state_machine(rt: &tokio::runtime::Runtime, p: &Pipeline) -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let schema = Arc::new(p.schema.clone());
    let artifact = Arc::new(p.artifact.clone());
    let params_before = artifact.model.params.clone();
    let opts = || TwinOptions {
        data_dir: Some(dir.path().to_path_buf()),
        ..TwinOptions::default()
    };
    let serials: Vec<String> = (0..10).map(|i| format!("{}{:04}", schema.sn_prefix, 100 + i)).collect();
    let mut failures = Vec::new();
    let mut failed_posts = 0;
    let mut expected: BTreeMap<String, DeviceConfig> = BTreeMap::new();
    rt.block_on(async {
        let twins: Vec<TwinInstance> = serials
            .iter()
            .map(|sn| build_twin(schema.clone(), sn, artifact.clone(), None, opts()).expect("twin"))
            .collect();
        for sn in &serials {
            expected.insert(sn.clone(), schema.default_config());
        }
        let mut rng = seed::rng(SEED + 8);
        for step in 0..10_000 {
            // the first twin takes most traffic; the others interleave
            let i = if rng.random_bool(0.6) { 0 } else { rng.random_range(1..twins.len()) };
            let twin = &twins[i];
            let sn = &serials[i];
            if rng.random_bool(0.4) {
                let before = twin.get(None).await;
                let sel = schema.properties[rng.random_range(0..schema.properties.len())].name.clone();
                let one = twin.get(Some(&sel)).await;
                let again = twin.get(None).await;
                if before.body != again.body || !one.is_success() {
                    failures.push(format!("step {step}: GET not side-effect free"));
                }
                if config_of(&before.body) != expected[sn] {
                    failures.push(format!("step {step}: {sn} state differs from its own history"));
                }
                continue;
            }
            let before = twin.get(None).await.body;
            let (bytes, body) = if rng.random_bool(0.05) {
                (b"{\"volume\": ".to_vec(), Value::Null)
            } else {
                let b = sample_config(&schema, &mut rng, 0.5);
                (serde_json::to_vec(&b).unwrap(), b)
            };
            let resp = twin.post(&bytes).await;
            let after = twin.get(None).await.body;
            if is_success(resp.status_code) {
                let next = merged(&schema, &expected[sn], &body);
                if config_of(&after) != next {
                    failures.push(format!("step {step}: successful POST not applied"));
                }
                expected.insert(sn.clone(), next);
            } else {
                failed_posts += 1;
                if after != before {
                    failures.push(format!("step {step}: failed POST changed state"));
                }
            }
        }
        for (twin, sn) in twins.iter().zip(&serials) {
            if config_of(&twin.get(None).await.body) != expected[sn] {
                failures.push(format!("{sn}: final state leaked across twins"));
            }
        }
        drop(twins);
        // restart from the persisted state files
        for sn in &serials {
            let twin = build_twin(schema.clone(), sn, artifact.clone(), None, opts()).expect("rebuild");
            if config_of(&twin.get(None).await.body) != expected[sn] {
                failures.push(format!("{sn}: restart lost state"));
            }
        }
    });
    if artifact.model.params != params_before {
        failures.push("model parameters changed while serving".into());
    }
    outcome(
        failures.is_empty() && failed_posts > 0,
        format!(
            "10000 requests over 10 twins, {failed_posts} failed POSTs, {} violations {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn fidelity_summary(r: &EvalReport) -> (Vec<(u16, u16, u64)>, u64, u64, u64, u64) {
    (
        r.scores
            .iter()
            .map(|s| (s.twin_status, s.device_status, s.similarity.to_bits()))
            .collect(),
        r.summary_similarity.to_bits(),
        r.wilcoxon.p_value.to_bits(),
        r.cliffs_delta.to_bits(),
        r.metrics.macro_f1.to_bits(),
    )
}

fn criterion_determinism(rt: &tokio::runtime::Runtime, first: &Pipeline) -> Outcome {
    let second = run_pipeline(rt);
    let same_base = first.artifact_bytes == second.artifact_bytes;
    let same_f1 = first.f1.to_bits() == second.f1.to_bits();
    let same_fidelity = fidelity_summary(&first.fidelity) == fidelity_summary(&second.fidelity);
    let same_links = first.links.len() == second.links.len()
        && first
            .links
            .iter()
            .zip(&second.links)
            .all(|(a, b)| a.artifact == b.artifact && a.f1.to_bits() == b.f1.to_bits() && a.iterations == b.iterations);
    outcome(
        same_base && same_f1 && same_fidelity && same_links,
        format!(
            "base artifact identical: {same_base}, F1 identical: {same_f1}, fidelity identical: {same_fidelity}, adapted artifacts identical: {same_links}"
        ),
    )
}

fn report(n: usize, name: &str, secs: f64, o: &Outcome) {
    println!(
        "criterion {n} {name:<22} {} ({}; {secs:.1}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() {
    // libtest-style flags (e.g. from `cargo test -- --nocapture`) are ignored
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f) && !f.contains("criterion")) {
        return;
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .expect("runtime");
    let mut all = true;
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        report(n, name, t.elapsed().as_secs_f64(), &o);
        all &= o.pass;
    };
    run(1, "gradient-correctness", &mut criterion_gradients);
    run(2, "metric-oracles", &mut criterion_metric_oracles);
    run(3, "taskset-properties", &mut criterion_tasksets);
    let t = Instant::now();
    let pipeline = run_pipeline(&rt);
    let pipeline_secs = t.elapsed().as_secs_f64();
    run(4, "twin-quality", &mut || criterion_quality(&pipeline));
    run(5, "fidelity-level", &mut || criterion_fidelity(&pipeline));
    run(6, "adaptation-economy", &mut || criterion_adaptation(&pipeline));
    println!("  (pipeline for criteria 4-6 took {pipeline_secs:.1}s)");
    run(7, "fleet-scalability", &mut || criterion_fleet(&rt, &pipeline));
    run(8, "state-invariants", &mut || criterion_state_machine(&rt, &pipeline));
    run(9, "determinism", &mut || criterion_determinism(&rt, &pipeline));
    rt.shutdown_timeout(Duration::from_secs(5));
    if !all {
        eprintln!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
