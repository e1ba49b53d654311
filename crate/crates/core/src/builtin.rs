//! Example schemas shipped with the toolkit, embedded at build time.
//!
//! * `dosepod`: feature-rich medication dispenser
//! * `pillmate`: mid-range dispenser sharing most of its features
//! * `bpcuff`: two-property blood-pressure cuff
//!
//! Each exists in versions `v1` to `v4`.

use crate::schema::{parse_schema, DeviceSchema};

macro_rules! embed {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../../schemas/", $name, ".json")))),*]
    };
}

pub const SOURCES: &[(&str, &str)] = embed!(
    "dosepod-v1", "dosepod-v2", "dosepod-v3", "dosepod-v4",
    "pillmate-v1", "pillmate-v2", "pillmate-v3", "pillmate-v4",
    "bpcuff-v1", "bpcuff-v2", "bpcuff-v3", "bpcuff-v4",
);

pub const DEVICES: [&str; 3] = ["dosepod", "pillmate", "bpcuff"];
pub const VERSIONS: [&str; 4] = ["v1", "v2", "v3", "v4"];

pub fn source(device: &str, version: &str) -> Option<&'static str> {
    let key = format!("{device}-{version}");
    SOURCES.iter().find(|(k, _)| *k == key).map(|(_, s)| *s)
}

/// Panics on unknown names; the embedded set is fixed.
pub fn schema(device: &str, version: &str) -> DeviceSchema {
    let src = source(device, version).unwrap_or_else(|| panic!("no builtin schema {device}-{version}"));
    parse_schema(src).expect("builtin schemas are valid")
}
