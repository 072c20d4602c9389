use footfall_cli::{EngineConfig, EngineKind, Engines, RequestError, SynthRequest};
use proptest::prelude::*;

fn pa(gamma: Vec<f64>) -> SynthRequest {
    let mut req = SynthRequest::new("gravel");
    req.engine = EngineKind::Pa;
    req.gamma = Some(gamma);
    req
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn valid_gamma_sets_the_length(gamma in prop::collection::vec(0.0f64..4.0, 1..200), seed in any::<u64>()) {
        let engines = Engines::new(EngineConfig::default(), None).unwrap();
        let mut req = pa(gamma.clone());
        req.synth_seed = seed;
        let out = engines.render(&req).unwrap();
        prop_assert_eq!(out.audio.len(), gamma.len() * 64);
        prop_assert_eq!(out.gamma.frames(), gamma.len());
        prop_assert!(out.audio.samples().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn first_bad_value_is_named(
        mut gamma in prop::collection::vec(0.0f64..4.0, 1..200),
        pos in any::<prop::sample::Index>(),
        bad in prop_oneof![Just(f64::NAN), Just(f64::INFINITY), -1e6f64..-1e-9],
    ) {
        let engines = Engines::new(EngineConfig::default(), None).unwrap();
        let i = pos.index(gamma.len());
        gamma[i] = bad;
        match engines.render(&pa(gamma)) {
            Err(RequestError::Invalid { field, .. }) => prop_assert_eq!(field, format!("gamma[{i}]")),
            other => prop_assert!(false, "expected a field error, got {:?}", other.map(|r| r.audio.len())),
        }
    }
}
