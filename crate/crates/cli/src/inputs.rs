use std::path::{Path, PathBuf};
use std::sync::Arc;

use twinkit_core::datagen::read_dataset;
use twinkit_core::dataprep::transform_dataset;
use twinkit_core::evalstats::macro_metrics;
use twinkit_core::metalearn::maml::predict_all;
use twinkit_core::twin::read_calibration_log;
use twinkit_core::{
    builtin, fit_transform, parse_schema, DeviceLink, DeviceSchema, FaultMode, Latency, MlpModel, PrepOptions,
    ProcessedDataset, RawDataset, ReferenceDevice, ReferenceDeviceSpec, SharedDevice, TransformManifest,
};

use crate::args::EmulatorArgs;
use crate::failure::{Categorize, Classify, Failure, Outcome};
use crate::manifest::Recorder;
use crate::settings::Resolver;

/// A schema given as a file path or as a builtin name like `pillmate-v1`.
pub fn load_schema(spec: &str, rec: &mut Recorder) -> Outcome<DeviceSchema> {
    let path = Path::new(spec);
    if path.is_file() {
        rec.input(path);
        let text = std::fs::read_to_string(path).data(format!("reading schema {spec}"))?;
        return parse_schema(&text).classify(format!("schema {spec}"));
    }
    let src = spec
        .rsplit_once('-')
        .and_then(|(d, v)| builtin::source(d, v))
        .ok_or_else(|| Failure::data(format!("schema `{spec}` is neither a file nor a builtin name")))?;
    parse_schema(src).classify(format!("builtin schema {spec}"))
}

/// Schema named on the command line, else the one recorded in a dataset
/// sidecar when it is a builtin.
pub fn schema_for(spec: Option<&str>, raw: &RawDataset, rec: &mut Recorder) -> Outcome<DeviceSchema> {
    match spec {
        Some(s) => load_schema(s, rec),
        None => {
            let name = format!("{}-{}", raw.schema_name, raw.schema_version);
            if builtin::source(&raw.schema_name, &raw.schema_version).is_none() {
                return Err(Failure::usage(format!("dataset schema `{name}` is not builtin; pass --schema")));
            }
            load_schema(&name, rec)
        }
    }
}

pub fn default_serial(schema: &DeviceSchema) -> String {
    format!("{}0001", schema.sn_prefix)
}

/// Serial `n` steps after `first`, keeping the width of its numeric tail.
pub fn nth_serial(first: &str, n: usize) -> Outcome<String> {
    let digits = first.chars().rev().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return Err(Failure::usage(format!("serial `{first}` has no numeric suffix to count from")));
    }
    let (head, tail) = first.split_at(first.len() - digits);
    let start: usize = tail.parse().usage(format!("serial `{first}`"))?;
    Ok(format!("{head}{:0digits$}", start + n))
}

pub fn processed_manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

#[derive(Debug, Clone)]
pub struct Emulator {
    pub fault_rate: f64,
    pub fault_mode: FaultMode,
    pub latency: Latency,
    pub seed: u64,
}

impl Emulator {
    pub fn resolve(r: &mut Resolver, a: EmulatorArgs, seed: u64) -> Outcome<Self> {
        Ok(Self {
            fault_rate: r.or("fault-rate", a.fault_rate, 0.05)?,
            fault_mode: r.parsed("fault-mode", a.fault_mode, "region")?,
            latency: r.parsed("latency", a.latency, "0")?,
            seed: r.or("device-seed", a.device_seed, seed)?,
        })
    }

    pub fn device(&self, schema: &DeviceSchema, serial: &str) -> Outcome<SharedDevice> {
        let spec = ReferenceDeviceSpec::new(schema.clone(), serial, self.seed)
            .with_faults(self.fault_rate, self.fault_mode)
            .with_latency(self.latency);
        let dev = ReferenceDevice::new(spec).usage("emulated device")?;
        Ok(SharedDevice::new(dev))
    }

    pub fn link(&self, schema: &DeviceSchema, serial: &str) -> Outcome<DeviceLink> {
        Ok(DeviceLink::Local(Arc::new(self.device(schema, serial)?)))
    }
}

/// Loads training data from a processed CSV (with its manifest beside it),
/// a raw dataset CSV, or a `.jsonl` calibration log.
pub fn load_training(data: &Path, schema: Option<&str>, rec: &mut Recorder) -> Outcome<ProcessedDataset> {
    rec.input(data);
    if data.extension().is_some_and(|e| e == "jsonl") {
        let spec = schema.ok_or_else(|| Failure::usage("--schema is required for calibration logs"))?;
        let schema = load_schema(spec, rec)?;
        let raw = read_calibration_log(data, &schema).data(format!("reading {}", data.display()))?;
        return fit_transform(&raw, &schema, &PrepOptions::default()).classify("preprocessing calibration log");
    }
    let mpath = processed_manifest_path(data);
    if mpath.is_file() {
        rec.input(&mpath);
        let text = std::fs::read_to_string(&mpath).data(format!("reading {}", mpath.display()))?;
        let manifest = TransformManifest::from_json(&text).classify(format!("manifest {}", mpath.display()))?;
        return ProcessedDataset::read_csv(data, manifest).classify(format!("processed data {}", data.display()));
    }
    let raw = read_dataset(data).classify(format!("reading {}", data.display()))?;
    let schema = schema_for(schema, &raw, rec)?;
    fit_transform(&raw, &schema, &PrepOptions::default()).classify(format!("preprocessing {}", data.display()))
}

/// Macro F1 of `model` on a raw held-out dataset.
pub fn holdout_f1(model: &MlpModel, manifest: &TransformManifest, test: &Path, rec: &mut Recorder) -> Outcome<f64> {
    rec.input(test);
    let raw = read_dataset(test).classify(format!("reading {}", test.display()))?;
    let (data, skipped) = transform_dataset(manifest, &raw);
    if skipped > 0 {
        tracing::warn!(skipped, "held-out records with unseen status codes skipped");
    }
    if data.is_empty() {
        return Err(Failure::data("held-out set has no usable records"));
    }
    let pred = predict_all(model, &data);
    let m = macro_metrics(&data.labels, &pred).data("scoring held-out set")?;
    Ok(m.macro_f1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_counting_keeps_width() {
        assert_eq!(nth_serial("PM-0001", 0).unwrap(), "PM-0001");
        assert_eq!(nth_serial("PM-0009", 3).unwrap(), "PM-0012");
        assert_eq!(nth_serial("X9", 12).unwrap(), "X21");
        assert!(nth_serial("PM-", 1).is_err());
    }

    #[test]
    fn builtin_schema_names() {
        let mut rec = Recorder::new("t");
        assert_eq!(load_schema("bpcuff-v2", &mut rec).unwrap().id(), "bpcuff-v2");
        assert!(load_schema("nosuch-v1", &mut rec).is_err());
    }
}
