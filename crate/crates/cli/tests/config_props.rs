//! Property test: serialize -> parse is the identity on valid
//! configurations.

use proptest::prelude::*;
use spdc_cli::config::{parse_config, serialize_config, RunConfig, SweepKind};

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        0u32..8,
        0.05f64..3.0,
        1e-3f64..1e3,
        (-2.0f64..2.0, -2.0f64..2.0),
        (20.0f64..80.0, 100.0f64..2000.0, 0.01f64..0.5),
        (1usize..6, 0.0f64..10.0),
        prop::option::of(prop_oneof![
            Just(SweepKind::Width),
            Just(SweepKind::Order),
            Just(SweepKind::Critical)
        ]),
        0u64..u64::MAX,
    )
        .prop_map(
            |(l, sigma, i0, center, (theta, z, pitch), (half_samples, half_width), kind, seed)| {
                let mut cfg = RunConfig::default();
                cfg.beam.l = l;
                cfg.beam.sigma_mm = sigma;
                cfg.beam.i0 = i0;
                cfg.beam.center_mm = center;
                cfg.crystal.theta_deg = theta;
                cfg.geometry.z_mm = z;
                cfg.geometry.pitch_mm = pitch;
                cfg.filter.samples = 2 * half_samples + 1;
                cfg.filter.half_width_nm = half_width;
                cfg.sweep.kind = kind;
                cfg.run.seed = seed;
                cfg
            },
        )
}

proptest! {
    #[test]
    fn serialize_parse_round_trip(cfg in arb_config()) {
        let text = serialize_config(&cfg);
        let parsed = parse_config(&text).unwrap();
        prop_assert_eq!(parsed, cfg);
    }
}
