mod common;

use common::arb_schema_and_bodies;
use proptest::prelude::*;
use twinkit_core::{validate_config, FaultMode, ReferenceDevice, ReferenceDeviceSpec};

fn device(schema: &twinkit_core::DeviceSchema, fault_rate: f64, seed: u64) -> ReferenceDevice {
    ReferenceDevice::new(ReferenceDeviceSpec::new(schema.clone(), "TS-0001", seed).with_faults(fault_rate, FaultMode::Stochastic))
        .expect("valid spec")
}

proptest! {
    #[test]
    fn success_iff_valid((schema, bodies) in arb_schema_and_bodies(20), seed in any::<u64>()) {
        let mut dev = device(&schema, 0.0, seed);
        for body in &bodies {
            let resp = dev.post(&serde_json::to_vec(body).unwrap());
            prop_assert_eq!(resp.is_success(), validate_config(&schema, body).is_ok(), "body {:?}", body);
        }
    }

    #[test]
    fn failed_posts_leave_state_alone(
        (schema, bodies) in arb_schema_and_bodies(20),
        fault_rate in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let mut dev = device(&schema, fault_rate, seed);
        for body in &bodies {
            let before = dev.get(None);
            let resp = dev.post(&serde_json::to_vec(body).unwrap());
            if !resp.is_success() {
                prop_assert_eq!(dev.get(None), before);
            }
        }
        let before = dev.get(None);
        prop_assert!(!dev.post(b"not json").is_success());
        prop_assert_eq!(dev.get(None), before);
    }

    #[test]
    fn identical_sequences_identical_responses((schema, bodies) in arb_schema_and_bodies(20), seed in any::<u64>()) {
        let mut a = device(&schema, 0.0, seed);
        let mut b = device(&schema, 0.0, seed ^ 0x5555);
        for body in &bodies {
            let bytes = serde_json::to_vec(body).unwrap();
            prop_assert_eq!(a.post(&bytes), b.post(&bytes));
        }
    }
}
