//! Device schema format: typed, range-constrained properties plus the
//! endpoints a device exposes.
//!
//! A schema is a JSON document of the form
//!
//! ```json
//! {
//!   "device_name": "dosepod",
//!   "version_tag": "v1",
//!   "sn_prefix": "DP-",
//!   "properties": [
//!     {"name": "volume", "kind": "integer", "min": 0, "max": 10, "default": 5},
//!     {"name": "language", "kind": "string-enum", "allowed": ["EN", "NO"], "default": "EN"},
//!     {"name": "alarm_enabled", "kind": "boolean", "default": true, "required": false}
//!   ],
//!   "endpoints": [
//!     {"path": "/devices/{sn}/config", "method": "GET", "role": "read-config"},
//!     {"path": "/devices/{sn}/config", "method": "POST", "role": "write-config"}
//!   ]
//! }
//! ```
//!
//! Bounds are inclusive. `required` defaults to `true`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Placeholder that must appear exactly once in every endpoint path.
pub const SN_PLACEHOLDER: &str = "{sn}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropertyKind {
    #[serde(rename = "integer")]
    Integer,
    #[serde(rename = "real")]
    Real,
    #[serde(rename = "boolean")]
    Boolean,
    #[serde(rename = "string-enum")]
    StringEnum,
}

impl PropertyKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, PropertyKind::Integer | PropertyKind::Real)
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PropertyKind::Integer => "integer",
            PropertyKind::Real => "real",
            PropertyKind::Boolean => "boolean",
            PropertyKind::StringEnum => "string-enum",
        };
        f.write_str(s)
    }
}

fn default_required() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub kind: PropertyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed: Vec<String>,
    pub default: Value,
    #[serde(default = "default_required", skip_serializing_if = "is_true")]
    pub required: bool,
}

impl PropertySpec {
    /// Inclusive numeric bounds. Only meaningful for numeric kinds, for
    /// which parsing guarantees both are present.
    pub fn bounds(&self) -> (f64, f64) {
        (self.min.unwrap_or(f64::MIN), self.max.unwrap_or(f64::MAX))
    }

    /// Checks a single value against this property's type and constraint.
    pub fn check(&self, value: &Value) -> Result<(), ViolationReason> {
        match self.kind {
            PropertyKind::Integer => {
                let v = integral(value).ok_or(ViolationReason::TypeMismatch)?;
                self.check_range(v)
            }
            PropertyKind::Real => {
                let v = value.as_f64().ok_or(ViolationReason::TypeMismatch)?;
                self.check_range(v)
            }
            PropertyKind::Boolean => {
                if value.is_boolean() {
                    Ok(())
                } else {
                    Err(ViolationReason::TypeMismatch)
                }
            }
            PropertyKind::StringEnum => {
                let s = value.as_str().ok_or(ViolationReason::TypeMismatch)?;
                if self.allowed.iter().any(|a| a == s) {
                    Ok(())
                } else {
                    Err(ViolationReason::NotAllowed)
                }
            }
        }
    }

    fn check_range(&self, v: f64) -> Result<(), ViolationReason> {
        let (lo, hi) = self.bounds();
        if v < lo || v > hi {
            Err(ViolationReason::OutOfRange)
        } else {
            Ok(())
        }
    }
}

/// Integer JSON numbers, including floats with a zero fraction.
fn integral(value: &Value) -> Option<f64> {
    if let Some(i) = value.as_i64() {
        return Some(i as f64);
    }
    if let Some(u) = value.as_u64() {
        return Some(u as f64);
    }
    let f = value.as_f64()?;
    (f.fract() == 0.0).then_some(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HttpMethod {
    #[serde(rename = "GET")]
    Get,
    #[serde(rename = "POST")]
    Post,
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EndpointRole {
    #[serde(rename = "read-config")]
    ReadConfig,
    #[serde(rename = "write-config")]
    WriteConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub path: String,
    pub method: HttpMethod,
    pub role: EndpointRole,
}

impl EndpointSpec {
    /// Concrete path with the serial number substituted.
    pub fn path_for(&self, serial: &str) -> String {
        self.path.replacen(SN_PLACEHOLDER, serial, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSchema {
    pub device_name: String,
    pub version_tag: String,
    pub sn_prefix: String,
    pub properties: Vec<PropertySpec>,
    pub endpoints: Vec<EndpointSpec>,
}

/// Device state or request payload: property name to JSON value.
pub type DeviceConfig = BTreeMap<String, Value>;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SchemaError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: missing required field `{field}`")]
    MissingField { path: String, field: String },
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: min ({min}) is greater than max ({max}) for property `{name}`")]
    BoundViolation {
        path: String,
        name: String,
        min: f64,
        max: f64,
    },
    #[error("{path}: duplicate property name `{name}`")]
    DuplicateProperty { path: String, name: String },
    #[error("{path}: default of `{name}` violates its constraint ({reason})")]
    Constraint {
        path: String,
        name: String,
        reason: ViolationReason,
    },
}

impl SchemaError {
    /// JSON path of the offending element (`$` for document-level errors).
    pub fn path(&self) -> &str {
        match self {
            SchemaError::Syntax { .. } => "$",
            SchemaError::MissingField { path, .. }
            | SchemaError::Malformed { path, .. }
            | SchemaError::BoundViolation { path, .. }
            | SchemaError::DuplicateProperty { path, .. }
            | SchemaError::Constraint { path, .. } => path,
        }
    }
}

fn malformed(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError::Malformed {
        path: path.into(),
        message: message.into(),
    }
}

fn require<'a>(obj: &'a Map<String, Value>, path: &str, field: &str) -> Result<&'a Value, SchemaError> {
    obj.get(field).ok_or_else(|| SchemaError::MissingField {
        path: path.to_string(),
        field: field.to_string(),
    })
}

fn require_str<'a>(obj: &'a Map<String, Value>, path: &str, field: &str) -> Result<&'a str, SchemaError> {
    require(obj, path, field)?
        .as_str()
        .ok_or_else(|| malformed(format!("{path}.{field}"), "expected a string"))
}

/// Parses and validates a schema document.
pub fn parse_schema(text: &str) -> Result<DeviceSchema, SchemaError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| SchemaError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let root = doc.as_object().ok_or_else(|| malformed("$", "expected an object"))?;

    let device_name = require_str(root, "$", "device_name")?.to_string();
    let version_tag = require_str(root, "$", "version_tag")?.to_string();
    let sn_prefix = match root.get("sn_prefix") {
        None => String::new(),
        Some(v) => v
            .as_str()
            .ok_or_else(|| malformed("$.sn_prefix", "expected a string"))?
            .to_string(),
    };
    if version_tag.is_empty() {
        return Err(malformed("$.version_tag", "must not be empty"));
    }

    let props = require(root, "$", "properties")?
        .as_array()
        .ok_or_else(|| malformed("$.properties", "expected an array"))?;
    let mut properties = Vec::with_capacity(props.len());
    let mut seen = BTreeSet::new();
    for (i, p) in props.iter().enumerate() {
        let path = format!("$.properties[{i}]");
        let prop = parse_property(p, &path)?;
        if !seen.insert(prop.name.clone()) {
            return Err(SchemaError::DuplicateProperty {
                path,
                name: prop.name,
            });
        }
        properties.push(prop);
    }
    if properties.is_empty() {
        return Err(malformed("$.properties", "at least one property is required"));
    }

    let eps = require(root, "$", "endpoints")?
        .as_array()
        .ok_or_else(|| malformed("$.endpoints", "expected an array"))?;
    let mut endpoints = Vec::with_capacity(eps.len());
    for (i, e) in eps.iter().enumerate() {
        let path = format!("$.endpoints[{i}]");
        let ep: EndpointSpec =
            serde_json::from_value(e.clone()).map_err(|err| malformed(path.clone(), err.to_string()))?;
        if ep.path.matches(SN_PLACEHOLDER).count() != 1 {
            return Err(malformed(
                format!("{path}.path"),
                format!("path must contain exactly one `{SN_PLACEHOLDER}` segment"),
            ));
        }
        if !ep.path.starts_with('/') {
            return Err(malformed(format!("{path}.path"), "path must start with `/`"));
        }
        endpoints.push(ep);
    }
    for role in [EndpointRole::ReadConfig, EndpointRole::WriteConfig] {
        if !endpoints.iter().any(|e| e.role == role) {
            return Err(malformed(
                "$.endpoints",
                format!("missing an endpoint with role {}", serde_json::to_string(&role).unwrap()),
            ));
        }
    }

    Ok(DeviceSchema {
        device_name,
        version_tag,
        sn_prefix,
        properties,
        endpoints,
    })
}

fn parse_property(value: &Value, path: &str) -> Result<PropertySpec, SchemaError> {
    let obj = value.as_object().ok_or_else(|| malformed(path, "expected an object"))?;
    let name = require_str(obj, path, "name")?.to_string();
    if name.is_empty() {
        return Err(malformed(format!("{path}.name"), "must not be empty"));
    }
    let kind: PropertyKind = serde_json::from_value(require(obj, path, "kind")?.clone())
        .map_err(|e| malformed(format!("{path}.kind"), e.to_string()))?;
    let default = require(obj, path, "default")?.clone();
    let num = |field: &str| -> Result<Option<f64>, SchemaError> {
        match obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| malformed(format!("{path}.{field}"), "expected a number")),
        }
    };
    let min = num("min")?;
    let max = num("max")?;
    let allowed = match obj.get("allowed") {
        None => Vec::new(),
        Some(v) => serde_json::from_value::<Vec<String>>(v.clone())
            .map_err(|e| malformed(format!("{path}.allowed"), e.to_string()))?,
    };
    let required = match obj.get("required") {
        None => true,
        Some(v) => v
            .as_bool()
            .ok_or_else(|| malformed(format!("{path}.required"), "expected a boolean"))?,
    };

    if kind.is_numeric() {
        if min.is_none() {
            return Err(SchemaError::MissingField {
                path: path.to_string(),
                field: "min".into(),
            });
        }
        if max.is_none() {
            return Err(SchemaError::MissingField {
                path: path.to_string(),
                field: "max".into(),
            });
        }
        let (lo, hi) = (min.unwrap(), max.unwrap());
        if lo > hi {
            return Err(SchemaError::BoundViolation {
                path: path.to_string(),
                name,
                min: lo,
                max: hi,
            });
        }
    } else if min.is_some() || max.is_some() {
        return Err(malformed(path, format!("bounds are not allowed for kind {kind}")));
    }
    if kind == PropertyKind::StringEnum {
        if allowed.is_empty() {
            return Err(malformed(format!("{path}.allowed"), "string-enum needs at least one allowed value"));
        }
        let distinct: BTreeSet<_> = allowed.iter().collect();
        if distinct.len() != allowed.len() {
            return Err(malformed(format!("{path}.allowed"), "allowed values must be distinct"));
        }
    } else if !allowed.is_empty() {
        return Err(malformed(format!("{path}.allowed"), format!("not allowed for kind {kind}")));
    }

    let spec = PropertySpec {
        name,
        kind,
        min,
        max,
        allowed,
        default,
        required,
    };
    if let Err(reason) = spec.check(&spec.default) {
        return Err(SchemaError::Constraint {
            path: format!("{path}.default"),
            name: spec.name,
            reason,
        });
    }
    Ok(spec)
}

impl DeviceSchema {
    pub fn property(&self, name: &str) -> Option<&PropertySpec> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn endpoint(&self, role: EndpointRole) -> Option<&EndpointSpec> {
        self.endpoints.iter().find(|e| e.role == role)
    }

    pub fn property_names(&self) -> impl Iterator<Item = &str> {
        self.properties.iter().map(|p| p.name.as_str())
    }

    /// Every property set to its declared default.
    pub fn default_config(&self) -> DeviceConfig {
        self.properties
            .iter()
            .map(|p| (p.name.clone(), p.default.clone()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// `<device_name>-<version_tag>`
    pub fn id(&self) -> String {
        format!("{}-{}", self.device_name, self.version_tag)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDelta {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub changed: BTreeSet<String>,
}

impl SchemaDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.changed.is_empty()
    }
}

pub fn diff_schemas(old: &DeviceSchema, new: &DeviceSchema) -> SchemaDelta {
    let mut delta = SchemaDelta::default();
    for p in &new.properties {
        match old.property(&p.name) {
            None => {
                delta.added.insert(p.name.clone());
            }
            Some(q) => {
                if q.kind != p.kind || q.min != p.min || q.max != p.max || q.allowed != p.allowed || q.default != p.default
                {
                    delta.changed.insert(p.name.clone());
                }
            }
        }
    }
    for p in &old.properties {
        if new.property(&p.name).is_none() {
            delta.removed.insert(p.name.clone());
        }
    }
    delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationReason {
    Missing,
    UnknownProperty,
    TypeMismatch,
    OutOfRange,
    NotAllowed,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationReason::Missing => "missing",
            ViolationReason::UnknownProperty => "unknown-property",
            ViolationReason::TypeMismatch => "type-mismatch",
            ViolationReason::OutOfRange => "out-of-range",
            ViolationReason::NotAllowed => "not-allowed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub property: String,
    pub reason: ViolationReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationResult {
    Ok,
    Violations(Vec<Violation>),
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, ValidationResult::Ok)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            ValidationResult::Ok => &[],
            ValidationResult::Violations(v) => v,
        }
    }
}

/// Checks a config (or request body) against the schema. Violations are
/// reported in schema property order, unknown keys last.
pub fn validate_config(schema: &DeviceSchema, config: &Map<String, Value>) -> ValidationResult {
    let mut out = Vec::new();
    for p in &schema.properties {
        match config.get(&p.name) {
            None => {
                if p.required {
                    out.push(Violation {
                        property: p.name.clone(),
                        reason: ViolationReason::Missing,
                    });
                }
            }
            Some(v) => {
                if let Err(reason) = p.check(v) {
                    out.push(Violation {
                        property: p.name.clone(),
                        reason,
                    });
                }
            }
        }
    }
    for key in config.keys() {
        if schema.property(key).is_none() {
            out.push(Violation {
                property: key.clone(),
                reason: ViolationReason::UnknownProperty,
            });
        }
    }
    if out.is_empty() {
        ValidationResult::Ok
    } else {
        ValidationResult::Violations(out)
    }
}

/// Convenience for [`DeviceConfig`] maps.
pub fn validate_device_config(schema: &DeviceSchema, config: &DeviceConfig) -> ValidationResult {
    let map: Map<String, Value> = config.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    validate_config(schema, &map)
}
