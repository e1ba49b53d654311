//! Shared fixtures for the benchmark suite.

use rand::Rng as _;
use twinkit_core::datagen::generate_offline;
use twinkit_core::metalearn::Dims;
use twinkit_core::{builtin, fit_transform, PrepOptions, ProcessedDataset, RawDataset, ReferenceDevice, ReferenceDeviceSpec};

/// Random parameters and a batch of `n` rows for `d`.
pub fn problem(d: Dims, n: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = twinkit_core::seed::rng(seed);
    let p = (0..d.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let xs = (0..n).map(|_| (0..d.input).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let ys = (0..n).map(|_| rng.random_range(0..d.output)).collect();
    (p, xs, ys)
}

/// Fault-injected emulator data for a builtin schema.
pub fn raw(device: &str, n: usize) -> RawDataset {
    let schema = builtin::schema(device, "v1");
    let spec = ReferenceDeviceSpec::new(schema, format!("{}0001", builtin::schema(device, "v1").sn_prefix), 0)
        .with_faults(0.05, twinkit_core::FaultMode::Region);
    generate_offline(&mut ReferenceDevice::new(spec).expect("device"), n, 0.3, 1)
}

pub fn processed(device: &str, n: usize) -> ProcessedDataset {
    fit_transform(&raw(device, n), &builtin::schema(device, "v1"), &PrepOptions::default()).expect("prep")
}
