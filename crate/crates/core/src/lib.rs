//! Digital twins of schema-described devices: data collection from a
//! device, preprocessing, few-shot meta-learning of a response classifier,
//! twin serving at fleet scale, and twin/device fidelity statistics.

pub mod builtin;
pub mod datagen;
pub mod dataprep;
pub mod device;
pub mod endpoint;
pub mod evalstats;
pub mod fleet;
pub mod http;
pub mod metalearn;
pub mod refdev;
pub mod schema;
pub mod seed;
pub mod twin;

pub use datagen::{generate_offline, run_generation, sample_config, GenBudget, GenError, RawDataset, RawRecord};
pub use dataprep::{apply_transform, fit_transform, PrepError, PrepOptions, ProcessedDataset, TransformManifest};
pub use device::{DeviceResponse, StatusFamily};
pub use endpoint::{DeviceLink, Responder, TransportError};
pub use fleet::{launch_fleet, Fleet, FleetConfig, FleetEntry, FleetError};
pub use metalearn::{
    adapt_model, load_model, save_model, train_maml, MlpModel, ModelArtifact, TaskConfig, TrainConfig, TrainReport,
};
pub use refdev::{FaultMode, Latency, ReferenceDevice, ReferenceDeviceSpec, SharedDevice};
pub use schema::{
    diff_schemas, parse_schema, validate_config, DeviceConfig, DeviceSchema, SchemaDelta, SchemaError, ValidationResult,
};
pub use twin::{build_twin, CalibrationKind, CalibrationMode, TwinInstance, TwinOptions};
