use std::path::PathBuf;
use std::time::Instant;

use twinkit_core::datagen::{metadata_path, read_dataset, write_dataset};
use twinkit_core::http::client::DeviceClient;
use twinkit_core::{fit_transform, run_generation, GenBudget, GenError, PrepOptions};

use super::ensure_parent;
use crate::args::{GenDataArgs, PreprocessArgs};
use crate::failure::{Categorize, Category, Classify, Failure, Outcome};
use crate::inputs::{default_serial, load_schema, processed_manifest_path, schema_for, Emulator};
use crate::manifest::Recorder;
use crate::settings::Settings;

pub async fn gen_data(a: GenDataArgs, s: &Settings) -> Outcome<()> {
    let mut rec = Recorder::new("gen-data");
    let mut r = s.section("gen-data");
    let seed = r.or("seed", a.seed, 0)?;
    rec.seed(seed);
    let spec: String = r.require("schema", a.schema)?;
    let schema = load_schema(&spec, &mut rec)?;
    let endpoint: Option<String> = r.opt("endpoint", a.endpoint)?;
    let serial = r.or("serial", a.serial, default_serial(&schema))?;
    let defaults = GenBudget::default();
    let max_duration: Option<f64> = r.opt("max-duration", a.max_duration)?;
    let budget = GenBudget {
        max_requests: r.opt("max-requests", a.max_requests)?,
        max_duration_ms: max_duration.map(|s| (s * 1000.0).round().max(0.0) as u64),
        delay_ms: r.or("delay-ms", a.delay_ms, defaults.delay_ms)?,
        p_out_of_range: r.or("p-out", a.p_out, defaults.p_out_of_range)?,
    };
    let out = r.or("out", a.out, PathBuf::from("dataset.csv"))?;
    ensure_parent(&out)?;

    let t = Instant::now();
    let result = match endpoint {
        Some(url) => {
            let client = DeviceClient::new(&url, &schema, &serial);
            run_generation(&client, &schema, &budget, seed).await
        }
        None => {
            let dev = Emulator::resolve(&mut r, a.emulator, 0)?.device(&schema, &serial)?;
            run_generation(&dev, &schema, &budget, seed).await
        }
    };
    rec.lap("generate", t);
    let (dataset, pending) = match result {
        Ok(d) => (d, None),
        Err(GenError::Unreachable { partial, source }) => {
            let f = Failure::new(
                Category::Network,
                anyhow::anyhow!("device unreachable after {} records: {source}", partial.len()),
            );
            (partial, Some(f))
        }
        Err(e) => return Err(e).classify("generating data"),
    };

    let t = Instant::now();
    write_dataset(&dataset, &schema, &out, seed, &budget).classify(format!("writing {}", out.display()))?;
    rec.lap("write", t);
    rec.output(&out);
    rec.output(&metadata_path(&out));
    rec.metric("records", dataset.len() as f64);
    rec.write(&out, r.finish())?;
    println!("wrote {} records to {}", dataset.len(), out.display());
    pending.map_or(Ok(()), Err)
}

pub fn preprocess(a: PreprocessArgs, s: &Settings) -> Outcome<()> {
    let mut rec = Recorder::new("preprocess");
    let mut r = s.section("preprocess");
    if let Some(seed) = r.opt("seed", a.seed)? {
        rec.seed(seed);
    }
    let input: PathBuf = r.require("in", a.input)?;
    let t = Instant::now();
    rec.input(&input);
    let raw = read_dataset(&input).classify(format!("reading {}", input.display()))?;
    let spec: Option<String> = r.opt("schema", a.schema)?;
    let schema = schema_for(spec.as_deref(), &raw, &mut rec)?;
    rec.lap("load", t);
    let defaults = PrepOptions::default();
    let opts = PrepOptions {
        low_variance: r.or("low-variance", a.low_variance, defaults.low_variance)?,
        high_variance: r.opt("high-variance", a.high_variance)?,
        include_timing: r.switch("include-timing", a.include_timing)?,
        range_flags: !r.switch("no-range-flags", a.no_range_flags)?,
        scale_numeric: !r.switch("no-scale", a.no_scale)?,
    };
    let out = r.or("out", a.out, input.with_extension("processed.csv"))?;
    if out == input {
        return Err(Failure::usage("--out must differ from --in"));
    }
    ensure_parent(&out)?;

    let t = Instant::now();
    let processed = fit_transform(&raw, &schema, &opts).classify("preprocessing")?;
    rec.lap("transform", t);
    processed.write_csv(&out).classify(format!("writing {}", out.display()))?;
    let mpath = processed_manifest_path(&out);
    std::fs::write(&mpath, processed.manifest.to_json()).data(format!("writing {}", mpath.display()))?;
    rec.output(&out);
    rec.output(&mpath);
    rec.metric("rows", processed.len() as f64);
    rec.metric("features", processed.n_features as f64);
    rec.write(&out, r.finish())?;
    println!(
        "wrote {} rows x {} features to {} (manifest {})",
        processed.len(),
        processed.n_features,
        out.display(),
        mpath.display()
    );
    Ok(())
}
