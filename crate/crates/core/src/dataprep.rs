//! Raw-to-numeric transform. `fit_transform` learns a [`TransformManifest`]
//! from a raw dataset; `apply_transform` replays it on single records.
//!
//! Per cell, in order: strip `%`, `*`, `_`; encode (booleans 0/1, enums by
//! lexicographic code, numerics parsed); null or empty to 0; clamp numerics
//! to schema bounds and rescale them onto [0, 1]. Columns are then filtered by variance and status codes
//! mapped to consecutive class indices.
//!
//! Tokens outside a property's domain get reserved codes: `n` for an enum
//! with `n` allowed tokens, `2` for a boolean. Each numeric property also
//! gets a `<name>#oob` column that is 1 when the raw value had to be
//! clamped or could not be parsed, so clamped outliers stay distinguishable
//! from boundary values.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::datagen::{value_to_cell, RawDataset, RawRecord, TIME_COLUMN};
use crate::schema::{DeviceSchema, PropertyKind};

pub const MANIFEST_VERSION: u32 = 1;
pub const FLAG_SUFFIX: &str = "#oob";

const SPECIAL: [char; 3] = ['%', '*', '_'];

pub fn strip_special(s: &str) -> String {
    s.chars().filter(|c| !SPECIAL.contains(c)).collect::<String>().trim().to_string()
}

pub fn flag_name(property: &str) -> String {
    format!("{property}{FLAG_SUFFIX}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepOptions {
    pub low_variance: f64,
    pub high_variance: Option<f64>,
    pub include_timing: bool,
    pub range_flags: bool,
    /// Map clamped numerics onto [0, 1] by their schema bounds.
    pub scale_numeric: bool,
}

impl Default for PrepOptions {
    fn default() -> Self {
        Self {
            low_variance: 1e-9,
            high_variance: None,
            include_timing: false,
            range_flags: true,
            scale_numeric: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    LowVariance,
    HighVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    pub reason: DropReason,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformManifest {
    pub format_version: u32,
    pub schema_name: String,
    pub schema_version: String,
    pub feature_order: Vec<String>,
    pub dropped_features: Vec<DroppedFeature>,
    pub enum_codes: BTreeMap<String, BTreeMap<String, u32>>,
    pub boolean_features: BTreeSet<String>,
    pub clamp_bounds: BTreeMap<String, (f64, f64)>,
    /// Flag column name to the numeric property it watches.
    pub range_flags: BTreeMap<String, String>,
    #[serde(default)]
    pub scale_numeric: bool,
    pub include_timing: bool,
    pub label_map: BTreeMap<u16, usize>,
    pub label_unmap: Vec<u16>,
}

impl TransformManifest {
    pub fn n_features(&self) -> usize {
        self.feature_order.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_unmap.len()
    }

    pub fn class_of(&self, status: u16) -> Option<usize> {
        self.label_map.get(&status).copied()
    }

    pub fn status_of(&self, class: usize) -> Option<u16> {
        self.label_unmap.get(class).copied()
    }

    /// Schema properties the kept features read from.
    pub fn source_properties(&self) -> BTreeSet<String> {
        self.feature_order
            .iter()
            .filter(|f| !(self.include_timing && f.as_str() == TIME_COLUMN))
            .map(|f| self.range_flags.get(f).cloned().unwrap_or_else(|| f.clone()))
            .collect()
    }

    fn encoder(&self, feature: &str) -> Encoder<'_> {
        if self.include_timing && feature == TIME_COLUMN {
            return Encoder::Timing;
        }
        if let Some(src) = self.range_flags.get(feature) {
            let b = self.clamp_bounds.get(src).copied().unwrap_or((f64::MIN, f64::MAX));
            return Encoder::Flag(src.clone(), b);
        }
        if let Some(codes) = self.enum_codes.get(feature) {
            return Encoder::Enum(codes);
        }
        if self.boolean_features.contains(feature) {
            return Encoder::Bool;
        }
        Encoder::Numeric(
            self.clamp_bounds.get(feature).copied().unwrap_or((f64::MIN, f64::MAX)),
            self.scale_numeric,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PrepError> {
        let m: TransformManifest = serde_json::from_str(text).map_err(|e| PrepError::Manifest(e.to_string()))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(PrepError::Manifest(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }
}

enum Encoder<'a> {
    Timing,
    Flag(String, (f64, f64)),
    Enum(&'a BTreeMap<String, u32>),
    Bool,
    Numeric((f64, f64), bool),
}

/// Parsed numeric cell: value after clamping, and whether the raw value
/// was out of bounds or unparseable.
fn numeric(cell: Option<&str>, (lo, hi): (f64, f64)) -> (f64, bool) {
    let Some(cell) = cell.map(strip_special).filter(|c| !c.is_empty()) else {
        return (0.0, false);
    };
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => {
            if v > hi {
                (hi, true)
            } else if v < lo {
                (lo, true)
            } else {
                (v, false)
            }
        }
        _ => (0.0, true),
    }
}

impl Encoder<'_> {
    fn encode(&self, src: &dyn FeatureSource, feature: &str) -> f64 {
        match self {
            Encoder::Timing => src
                .cell(TIME_COLUMN)
                .and_then(|c| strip_special(&c).parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .unwrap_or(0.0),
            Encoder::Flag(prop, b) => {
                if numeric(src.cell(prop).as_deref(), *b).1 {
                    1.0
                } else {
                    0.0
                }
            }
            Encoder::Enum(codes) => match src.cell(feature).map(|c| strip_special(&c)) {
                None => 0.0,
                Some(c) if c.is_empty() => 0.0,
                Some(c) => f64::from(codes.get(&c).copied().unwrap_or(codes.len() as u32)),
            },
            Encoder::Bool => match src.cell(feature).map(|c| strip_special(&c).to_ascii_lowercase()) {
                None => 0.0,
                Some(c) => match c.as_str() {
                    "" | "false" => 0.0,
                    "true" => 1.0,
                    _ => 2.0,
                },
            },
            Encoder::Numeric(b, scale) => {
                let v = numeric(src.cell(feature).as_deref(), *b).0;
                let (lo, hi) = *b;
                if *scale && lo > f64::MIN && hi < f64::MAX && hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    v
                }
            }
        }
    }
}

/// Read access to raw cell text by column name.
pub trait FeatureSource {
    fn cell(&self, name: &str) -> Option<String>;
}

impl FeatureSource for BTreeMap<String, Value> {
    fn cell(&self, name: &str) -> Option<String> {
        self.get(name).and_then(value_to_cell)
    }
}

impl FeatureSource for Map<String, Value> {
    fn cell(&self, name: &str) -> Option<String> {
        self.get(name).and_then(value_to_cell)
    }
}

impl FeatureSource for RawRecord {
    fn cell(&self, name: &str) -> Option<String> {
        if name == TIME_COLUMN {
            return Some(self.processing_time_ms.to_string());
        }
        self.features.cell(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedDataset {
    pub n_features: usize,
    /// Row-major, `labels.len() * n_features` values.
    pub matrix: Vec<f64>,
    pub labels: Vec<usize>,
    pub manifest: TransformManifest,
}

impl ProcessedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.matrix.chunks_exact(self.n_features.max(1)).take(self.labels.len())
    }

    /// Header `feature_order..., label`.
    pub fn write_csv(&self, path: &Path) -> Result<(), PrepError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| PrepError::Io(e.to_string()))?;
        let mut header = self.manifest.feature_order.clone();
        header.push("label".into());
        w.write_record(&header).map_err(|e| PrepError::Io(e.to_string()))?;
        for (i, row) in self.rows().enumerate() {
            let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            cells.push(self.labels[i].to_string());
            w.write_record(&cells).map_err(|e| PrepError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| PrepError::Io(e.to_string()))
    }

    /// Reads a file written by [`ProcessedDataset::write_csv`]; the header
    /// must match the manifest's feature order.
    pub fn read_csv(path: &Path, manifest: TransformManifest) -> Result<Self, PrepError> {
        let io = |e: csv::Error| PrepError::Io(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(io)?;
        let header: Vec<String> = r.headers().map_err(io)?.iter().map(str::to_string).collect();
        let mut expected = manifest.feature_order.clone();
        expected.push("label".into());
        if header != expected {
            return Err(PrepError::Manifest(format!(
                "{}: header does not match the manifest feature order",
                path.display()
            )));
        }
        let n = manifest.n_features();
        let mut matrix = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(io)?;
            let bad = |c: &str| PrepError::Io(format!("{}: row {}: bad cell `{c}`", path.display(), line + 2));
            for c in rec.iter().take(n) {
                matrix.push(c.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(c))?);
            }
            let l = &rec[n];
            let label = l.parse::<usize>().ok().filter(|v| *v < manifest.n_classes()).ok_or_else(|| bad(l))?;
            labels.push(label);
        }
        Ok(Self {
            n_features: n,
            matrix,
            labels,
            manifest,
        })
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum PrepError {
    #[error("raw dataset is empty")]
    Empty,
    #[error("no feature survived variance filtering")]
    NoFeatures,
    #[error("feature `{0}` has no parseable value")]
    Unparseable(String),
    #[error("need at least 2 distinct status codes, found {0}")]
    DegenerateLabels(usize),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io: {0}")]
    Io(String),
}

fn variance(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn fit_transform(raw: &RawDataset, schema: &DeviceSchema, opts: &PrepOptions) -> Result<ProcessedDataset, PrepError> {
    if raw.records.is_empty() {
        return Err(PrepError::Empty);
    }
    let mut m = TransformManifest {
        format_version: MANIFEST_VERSION,
        schema_name: schema.device_name.clone(),
        schema_version: schema.version_tag.clone(),
        feature_order: Vec::new(),
        dropped_features: Vec::new(),
        enum_codes: BTreeMap::new(),
        boolean_features: BTreeSet::new(),
        clamp_bounds: BTreeMap::new(),
        range_flags: BTreeMap::new(),
        scale_numeric: opts.scale_numeric,
        include_timing: opts.include_timing,
        label_map: BTreeMap::new(),
        label_unmap: Vec::new(),
    };
    let mut candidates = Vec::new();
    let mut flags = Vec::new();
    for p in &schema.properties {
        candidates.push(p.name.clone());
        match p.kind {
            PropertyKind::StringEnum => {
                let tokens: BTreeSet<String> = p.allowed.iter().map(|a| strip_special(a)).collect();
                let codes = tokens.into_iter().enumerate().map(|(i, t)| (t, i as u32)).collect();
                m.enum_codes.insert(p.name.clone(), codes);
            }
            PropertyKind::Boolean => {
                m.boolean_features.insert(p.name.clone());
            }
            PropertyKind::Integer | PropertyKind::Real => {
                m.clamp_bounds.insert(p.name.clone(), p.bounds());
                if opts.range_flags {
                    let f = flag_name(&p.name);
                    m.range_flags.insert(f.clone(), p.name.clone());
                    flags.push(f);
                }
            }
        }
    }
    candidates.extend(flags);
    if opts.include_timing {
        candidates.push(TIME_COLUMN.to_string());
    }

    for p in schema.properties.iter().filter(|p| p.kind.is_numeric()) {
        let cells: Vec<String> = raw
            .records
            .iter()
            .filter_map(|r| r.features.cell(&p.name))
            .map(|c| strip_special(&c))
            .filter(|c| !c.is_empty())
            .collect();
        if !cells.is_empty() && cells.iter().all(|c| c.parse::<f64>().map(|v| !v.is_finite()).unwrap_or(true)) {
            return Err(PrepError::Unparseable(p.name.clone()));
        }
    }

    let codes: BTreeSet<u16> = raw.records.iter().map(|r| r.status_code).collect();
    if codes.len() < 2 {
        return Err(PrepError::DegenerateLabels(codes.len()));
    }
    m.label_unmap = codes.into_iter().collect();
    m.label_map = m.label_unmap.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    let n = raw.records.len();
    let mut kept = Vec::new();
    let mut columns = Vec::new();
    for f in &candidates {
        let enc = m.encoder(f);
        let col: Vec<f64> = raw.records.iter().map(|r| enc.encode(r, f)).collect();
        let var = variance(&col);
        if var < opts.low_variance {
            m.dropped_features.push(DroppedFeature {
                name: f.clone(),
                reason: DropReason::LowVariance,
                variance: var,
            });
        } else if opts.high_variance.is_some_and(|h| var > h) {
            m.dropped_features.push(DroppedFeature {
                name: f.clone(),
                reason: DropReason::HighVariance,
                variance: var,
            });
        } else {
            kept.push(f.clone());
            columns.push(col);
        }
    }
    if kept.is_empty() {
        return Err(PrepError::NoFeatures);
    }
    m.feature_order = kept;
    let width = columns.len();
    let mut matrix = vec![0.0; n * width];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            matrix[i * width + j] = *v;
        }
    }
    let labels = raw.records.iter().map(|r| m.label_map[&r.status_code]).collect();
    Ok(ProcessedDataset {
        n_features: width,
        matrix,
        labels,
        manifest: m,
    })
}

/// Replays the fitted transform on one record. Total: missing features
/// encode as 0 and unseen enum tokens take the reserved code.
pub fn apply_transform(manifest: &TransformManifest, record: &dyn FeatureSource) -> Vec<f64> {
    manifest
        .feature_order
        .iter()
        .map(|f| manifest.encoder(f).encode(record, f))
        .collect()
}

/// Transforms a raw dataset under an existing manifest. Records whose
/// status code the manifest does not know are skipped and counted.
pub fn transform_dataset(manifest: &TransformManifest, raw: &RawDataset) -> (ProcessedDataset, usize) {
    let width = manifest.n_features();
    let mut matrix = Vec::with_capacity(raw.records.len() * width);
    let mut labels = Vec::with_capacity(raw.records.len());
    let mut skipped = 0;
    for r in &raw.records {
        match manifest.class_of(r.status_code) {
            Some(c) => {
                matrix.extend(apply_transform(manifest, r));
                labels.push(c);
            }
            None => skipped += 1,
        }
    }
    (
        ProcessedDataset {
            n_features: width,
            matrix,
            labels,
            manifest: manifest.clone(),
        },
        skipped,
    )
}
