use footfall_core::dsp::{stft, ControlSignal, Window};
use footfall_core::farnell::{default_recipes, grf_curve, pa_synthesize, GrfParams, SurfaceRecipe};
use proptest::prelude::*;

fn recipe(name: &str) -> SurfaceRecipe {
    default_recipes().into_iter().find(|r| r.name == name).unwrap()
}

/// Strict local maxima of one period, scanning with wrap-around neighbours.
fn maxima_per_period(values: &[f64]) -> usize {
    let n = values.len();
    (0..n)
        .filter(|&k| {
            let prev = values[(k + n - 1) % n];
            let next = values[(k + 1) % n];
            values[k] > prev && values[k] >= next
        })
        .count()
}

#[test]
fn default_walk_is_periodic_with_two_peaks_per_step() {
    let p = GrfParams::default();
    let curve = grf_curve::<f64>(&p, 2.0, 250, 0).unwrap();
    assert_eq!(curve.frames(), 500);
    let v = curve.channel(0);
    let period = 125;
    for k in 0..v.len() - period {
        assert!((v[k] - v[k + period]).abs() < 1e-9);
    }
    assert_eq!(v[0], 0.0);
    assert_eq!(v[period], 0.0);
    for step in v.chunks(period) {
        assert_eq!(maxima_per_period(step), 2);
    }
}

#[test]
fn segment_joins_are_continuous() {
    let p = GrfParams::default();
    let [f1, f2, _] = p.segment_fractions;
    for join in [f1, f1 + f2] {
        let left = p.shape(join - 1e-12);
        let right = p.shape(join + 1e-12);
        assert!((left - right).abs() < 1e-9, "join at {join}: {left} vs {right}");
    }
    assert_eq!(p.shape(0.0), 0.0);
    assert!(p.shape(1.0).abs() < 1e-12);
}

#[test]
fn jitter_is_seeded() {
    let p = GrfParams { jitter: 0.15, ..GrfParams::default() };
    let a = grf_curve::<f64>(&p, 3.0, 250, 11).unwrap();
    let b = grf_curve::<f64>(&p, 3.0, 250, 11).unwrap();
    let c = grf_curve::<f64>(&p, 3.0, 250, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_gamma_is_digital_silence() {
    for r in default_recipes() {
        let out = pa_synthesize::<f64>(&r, &ControlSignal::zeros(250, 1, 250), 3, 16000).unwrap();
        assert_eq!(out.len(), 16000);
        assert!(out.samples().iter().all(|&v| v == 0.0), "{}", r.name);
    }
}

#[test]
fn doubling_gamma_doubles_rms_for_linear_recipes() {
    let gamma = grf_curve::<f64>(&GrfParams::default(), 1.0, 250, 0).unwrap();
    for r in default_recipes().into_iter().filter(|r| r.crackle.is_none()) {
        let a = pa_synthesize::<f64>(&r, &gamma, 8, 16000).unwrap().rms();
        let b = pa_synthesize::<f64>(&r, &gamma.scaled(2.0), 8, 16000).unwrap().rms();
        assert!((b / a - 2.0).abs() < 0.1, "{}: ratio {}", r.name, b / a);
    }
}

#[test]
fn output_is_seed_deterministic() {
    let gamma = grf_curve::<f64>(&GrfParams::default(), 1.0, 250, 0).unwrap();
    let r = recipe("gravel");
    let a = pa_synthesize::<f64>(&r, &gamma, 5, 16000).unwrap();
    let b = pa_synthesize::<f64>(&r, &gamma, 5, 16000).unwrap();
    let c = pa_synthesize::<f64>(&r, &gamma, 6, 16000).unwrap();
    assert_eq!(a.samples(), b.samples());
    assert_ne!(a.samples(), c.samples());
}

#[test]
fn linear_recipes_keep_energy_in_band() {
    let gamma = ControlSignal::new(vec![1.0; 500], 1, 250).unwrap();
    for r in default_recipes().into_iter().filter(|r| r.crackle.is_none()) {
        let out = pa_synthesize::<f64>(&r, &gamma, 1, 16000).unwrap();
        let spec = stft(out.samples(), 1024, 512, Window::Hann).unwrap();
        let (mut inside, mut total) = (0.0, 0.0);
        for frame in &spec.frames {
            for (k, c) in frame.iter().enumerate() {
                let f = k as f64 * 16000.0 / 1024.0;
                let e = c.norm_sqr();
                total += e;
                if f >= r.band_edges[0] && f <= r.band_edges[1] {
                    inside += e;
                }
            }
        }
        assert!(inside / total >= 0.8, "{}: {:.3}", r.name, inside / total);
    }
}

#[test]
fn negative_gamma_is_rejected() {
    let gamma = ControlSignal::new(vec![0.5, -0.1, 0.2], 1, 250).unwrap();
    assert!(pa_synthesize::<f64>(&recipe("dirt"), &gamma, 0, 16000).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn curves_are_bounded_and_non_negative(
        period in 0.2f64..1.5,
        a in 0.1f64..1.0,
        b in 0.1f64..1.0,
        heel in 0.0f64..2.0,
        valley in 0.0f64..2.0,
        ball in 0.0f64..2.0,
        jitter in 0.0f64..0.2,
        seed in 0u64..100,
    ) {
        let total = a + b + 1.0;
        let mut fractions = [a / total, b / total, 0.0];
        fractions[2] = 1.0 - fractions[0] - fractions[1];
        let p = GrfParams { step_period: period, segment_fractions: fractions, levels: [0.0, heel, valley, ball, 0.0], jitter };
        let curve = grf_curve::<f64>(&p, 2.0, 250, seed).unwrap();
        let top = heel.max(valley).max(ball);
        for &v in &curve.values {
            prop_assert!(v >= 0.0 && v <= top + 1e-12, "value {v} outside [0, {top}]");
        }
    }
}
