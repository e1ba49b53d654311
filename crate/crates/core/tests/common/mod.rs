#![allow(dead_code)]

use proptest::prelude::*;
use serde_json::{json, Map, Value};
use twinkit_core::schema::{EndpointRole, EndpointSpec, HttpMethod, PropertyKind, PropertySpec};
use twinkit_core::DeviceSchema;

pub fn endpoints() -> Vec<EndpointSpec> {
    vec![
        EndpointSpec {
            path: "/devices/{sn}/config".into(),
            method: HttpMethod::Get,
            role: EndpointRole::ReadConfig,
        },
        EndpointSpec {
            path: "/devices/{sn}/config".into(),
            method: HttpMethod::Post,
            role: EndpointRole::WriteConfig,
        },
    ]
}

pub fn arb_property(name: String) -> impl Strategy<Value = PropertySpec> {
    let integer = (-50i64..50, 0i64..100, 0.0f64..=1.0, any::<bool>()).prop_map(|(lo, span, f, req)| (
        PropertyKind::Integer,
        Some(lo as f64),
        Some((lo + span) as f64),
        vec![],
        json!(lo + (f * span as f64).floor() as i64),
        req,
    ));
    let real = (-100.0f64..100.0, 0.0f64..50.0, 0.0f64..=1.0, any::<bool>())
        .prop_map(|(lo, span, f, req)| {
            let hi = lo + span;
            (PropertyKind::Real, Some(lo), Some(hi), vec![], json!((lo + f * span).clamp(lo, hi)), req)
        });
    let boolean = (any::<bool>(), any::<bool>())
        .prop_map(|(d, req)| (PropertyKind::Boolean, None, None, vec![], json!(d), req));
    let enumeration = (prop::collection::btree_set("[A-Z]{1,4}", 1..5), any::<prop::sample::Index>(), any::<bool>())
        .prop_map(|(set, i, req)| {
            let allowed: Vec<String> = set.into_iter().collect();
            let d = allowed[i.index(allowed.len())].clone();
            (PropertyKind::StringEnum, None, None, allowed, json!(d), req)
        });
    prop_oneof![integer, real, boolean, enumeration].prop_map(move |(kind, min, max, allowed, default, required)| {
        PropertySpec {
            name: name.clone(),
            kind,
            min,
            max,
            allowed,
            default,
            required,
        }
    })
}

/// Valid schemas with 1..=`max_props` properties named from a small pool,
/// so two draws often share names.
pub fn arb_schema(max_props: usize) -> impl Strategy<Value = DeviceSchema> {
    arb_schema_sized(1, max_props)
}

pub fn arb_schema_sized(min_props: usize, max_props: usize) -> impl Strategy<Value = DeviceSchema> {
    let names = prop::sample::subsequence(
        (0..8).map(|i| format!("p{i}")).collect::<Vec<_>>(),
        min_props..=max_props.min(8),
    );
    (names, "[a-z]{3,8}", 1u8..5).prop_flat_map(|(names, device, version)| {
        let props: Vec<_> = names.into_iter().map(arb_property).collect();
        (props, Just(device), Just(version)).prop_map(|(properties, device_name, v)| DeviceSchema {
            device_name,
            version_tag: format!("v{v}"),
            sn_prefix: "TS-".into(),
            properties,
            endpoints: endpoints(),
        })
    })
}

/// How one property of a generated body is filled.
#[derive(Debug, Clone, Copy)]
pub enum Fill {
    Valid(f64),
    OutOfRange(f64),
    WrongType,
    Missing,
}

pub fn arb_fill() -> impl Strategy<Value = Fill> {
    prop_oneof![
        6 => (0.0f64..=1.0).prop_map(Fill::Valid),
        2 => (1.0f64..100.0).prop_map(Fill::OutOfRange),
        1 => Just(Fill::WrongType),
        1 => Just(Fill::Missing),
    ]
}

pub fn fill_value(p: &PropertySpec, fill: Fill) -> Option<Value> {
    let (lo, hi) = p.bounds();
    Some(match (fill, p.kind) {
        (Fill::Missing, _) => return None,
        (Fill::Valid(f), PropertyKind::Integer) => json!((lo + (f * (hi - lo)).floor()) as i64),
        (Fill::Valid(f), PropertyKind::Real) => json!((lo + f * (hi - lo)).clamp(lo, hi)),
        (Fill::Valid(f), PropertyKind::Boolean) => json!(f < 0.5),
        (Fill::Valid(f), PropertyKind::StringEnum) => {
            let i = ((f * p.allowed.len() as f64) as usize).min(p.allowed.len() - 1);
            json!(p.allowed[i])
        }
        (Fill::OutOfRange(d), PropertyKind::Integer) => json!((hi + d.ceil()) as i64),
        (Fill::OutOfRange(d), PropertyKind::Real) => json!(lo - d),
        (Fill::OutOfRange(_), PropertyKind::Boolean) => json!("maybe"),
        (Fill::OutOfRange(_), PropertyKind::StringEnum) => json!("not-a-member"),
        (Fill::WrongType, PropertyKind::Integer | PropertyKind::Real) => json!("seven"),
        (Fill::WrongType, PropertyKind::Boolean | PropertyKind::StringEnum) => json!(3),
    })
}

pub fn body_from(schema: &DeviceSchema, fills: &[Fill], extra: bool) -> Map<String, Value> {
    let mut m = Map::new();
    for (p, f) in schema.properties.iter().zip(fills.iter().cycle()) {
        if let Some(v) = fill_value(p, *f) {
            m.insert(p.name.clone(), v);
        }
    }
    if extra {
        m.insert("zz_unknown".into(), json!(1));
    }
    m
}

/// A schema plus a sequence of request bodies for it.
pub fn arb_schema_and_bodies(n: usize) -> impl Strategy<Value = (DeviceSchema, Vec<Map<String, Value>>)> {
    arb_schema(5).prop_flat_map(move |s| {
        let k = s.properties.len();
        let bodies = prop::collection::vec((prop::collection::vec(arb_fill(), k), prop::bool::weighted(0.1)), 1..=n);
        (Just(s), bodies).prop_map(|(s, raw)| {
            let bodies = raw.iter().map(|(f, extra)| body_from(&s, f, *extra)).collect();
            (s, bodies)
        })
    })
}

/// A small bpcuff-v1 model trained on fault-free emulator data. Good
/// enough to answer both 2xx and 4xx.
pub fn bpcuff_artifact(iters: usize) -> twinkit_core::ModelArtifact {
    use twinkit_core::{builtin, fit_transform, generate_offline, train_maml, PrepOptions, TaskConfig, TrainConfig};
    let schema = builtin::schema("bpcuff", "v1");
    let mut dev = twinkit_core::ReferenceDevice::new(twinkit_core::ReferenceDeviceSpec::new(schema.clone(), "BP-0001", 0))
        .expect("device");
    let raw = generate_offline(&mut dev, 600, 0.3, 1);
    let data = fit_transform(&raw, &schema, &PrepOptions::default()).expect("prep");
    let cfg = TrainConfig {
        max_iterations: iters,
        meta_lr: 0.01,
        ..TrainConfig::train_defaults().with_seed(3)
    };
    let (model, report) = train_maml(&data, &TaskConfig::train_defaults(), &cfg).expect("train");
    twinkit_core::ModelArtifact::new(model, data.manifest.clone(), cfg, Some(&report))
}
