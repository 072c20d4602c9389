use footfall_core::autodiff::check::check_gradients;
use footfall_core::autodiff::kernels::fir_design;
use footfall_core::autodiff::layers::{gru_cell, GruParams};
use footfall_core::autodiff::{Tape, Tensor, Var};
use footfall_core::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 16;
const TOL: f64 = 1e-4;
const H: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Random signed values kept away from zero, for ops with a kink at 0.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces any tensor to a scalar through fixed random weights so every
/// output entry contributes a distinct sensitivity.
fn weighted_sum(tape: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(v).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let w = tape.constant(random(&mut rng, &shape, -1.0, 1.0));
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

fn run_check<F>(name: &str, make: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>, build: F)
where
    F: Fn(&mut Tape<f64>, &[Var], u64) -> Result<Var>,
{
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = make(&mut rng);
        let report = check_gradients(&inputs, H, 64, |t, v| build(t, v, seed)).unwrap();
        assert!(
            report.max_rel_error < TOL,
            "{name}, seed {seed}: relative error {}",
            report.max_rel_error
        );
    }
}

#[test]
fn elementwise_primitives() {
    run_check(
        "add/sub/mul",
        |r| vec![random(r, &[3, 4], -1.0, 1.0), random(r, &[3, 4], -1.0, 1.0)],
        |t, v, s| {
            let a = t.add(v[0], v[1])?;
            let b = t.sub(a, v[1])?;
            let c = t.mul(b, v[1])?;
            let d = t.scale(c, 1.7);
            weighted_sum(t, d, s)
        },
    );
    run_check("sigmoid", |r| vec![random(r, &[2, 5], -4.0, 4.0)], |t, v, s| {
        let y = t.sigmoid(v[0]);
        weighted_sum(t, y, s)
    });
    run_check("tanh", |r| vec![random(r, &[2, 5], -3.0, 3.0)], |t, v, s| {
        let y = t.tanh(v[0]);
        weighted_sum(t, y, s)
    });
    run_check("softplus", |r| vec![random(r, &[2, 5], -6.0, 6.0)], |t, v, s| {
        let y = t.softplus(v[0]);
        weighted_sum(t, y, s)
    });
    run_check("abs", |r| vec![away_from_zero(r, &[2, 5])], |t, v, s| {
        let y = t.abs(v[0]);
        weighted_sum(t, y, s)
    });
    run_check("log_floor", |r| vec![random(r, &[2, 5], 0.1, 2.0)], |t, v, s| {
        let y = t.log_floor(v[0], 1e-7);
        weighted_sum(t, y, s)
    });
    run_check("square/mean", |r| vec![random(r, &[2, 5], -2.0, 2.0)], |t, v, _| {
        let y = t.square(v[0]);
        Ok(t.mean(y))
    });
}

#[test]
fn structural_primitives() {
    run_check(
        "matmul/add_row",
        |r| {
            vec![
                random(r, &[4, 3], -1.0, 1.0),
                random(r, &[3, 5], -1.0, 1.0),
                random(r, &[1, 5], -1.0, 1.0),
            ]
        },
        |t, v, s| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.add_row(y, v[2])?;
            weighted_sum(t, y, s)
        },
    );
    run_check(
        "rows/cols/concat",
        |r| vec![random(r, &[4, 6], -1.0, 1.0)],
        |t, v, s| {
            let a = t.rows(v[0], 1, 2)?;
            let b = t.rows(v[0], 0, 3)?;
            let c = t.concat_rows(&[a, b])?;
            let d = t.cols(c, 2, 3)?;
            let e = t.cols(c, 0, 4)?;
            let f = t.concat_cols(&[d, e, d])?;
            weighted_sum(t, f, s)
        },
    );
    run_check(
        "gather",
        |r| vec![random(r, &[3, 4], -1.0, 1.0)],
        |t, v, s| {
            let y = t.gather(v[0], &[2, 0, 2, 1, 2])?;
            weighted_sum(t, y, s)
        },
    );
    run_check(
        "frame",
        |r| vec![random(r, &[2, 37], -1.0, 1.0)],
        |t, v, s| {
            let window: Vec<f64> = (0..8).map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / 8.0).cos()).collect();
            let y = t.frame(v[0], &window, 2)?;
            weighted_sum(t, y, s)
        },
    );
}

#[test]
fn spectral_primitives() {
    run_check(
        "fft_magnitude",
        |r| vec![random(r, &[3, 16], -1.0, 1.0)],
        |t, v, s| {
            let y = t.fft_magnitude(v[0])?;
            weighted_sum(t, y, s)
        },
    );
    run_check(
        "fir",
        |r| vec![random(r, &[3, 9], 0.0, 2.0)],
        |t, v, s| {
            let design = fir_design::<f64>(9, 6);
            let y = t.fir(v[0], &design, 6)?;
            weighted_sum(t, y, s)
        },
    );
    run_check(
        "filtered_noise",
        |r| vec![random(r, &[4 * 2, 5], -1.0, 1.0)],
        |t, v, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s + 100);
            let noise = (0..2 * 4 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = t.filtered_noise(v[0], noise, 2, 3)?;
            weighted_sum(t, y, s)
        },
    );
}

#[test]
fn fft_magnitude_sum_for_impulse() {
    let mut imp = vec![0.0; 32];
    imp[5] = 1.0;
    let report = check_gradients(&[Tensor::matrix(1, 32, imp).unwrap()], H, 64, |t, v| {
        let m = t.fft_magnitude(v[0])?;
        Ok(t.sum(m))
    })
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn gru_linear_tanh_chain() {
    run_check(
        "gru+linear+tanh",
        |r| {
            let (i, h, o) = (3, 4, 2);
            vec![
                random(r, &[2, i], -1.0, 1.0),
                random(r, &[2, h], -1.0, 1.0),
                random(r, &[i, 3 * h], -0.8, 0.8),
                random(r, &[h, 2 * h], -0.8, 0.8),
                random(r, &[h, h], -0.8, 0.8),
                random(r, &[1, 3 * h], -0.5, 0.5),
                random(r, &[h, o], -1.0, 1.0),
            ]
        },
        |t, v, s| {
            let p = GruParams {
                w_x: v[2],
                u_zr: v[3],
                u_h: v[4],
                bias: v[5],
            };
            let h1 = gru_cell(t, v[0], v[1], &p)?;
            let h2 = gru_cell(t, v[0], h1, &p)?;
            let y = t.matmul(h2, v[6])?;
            let y = t.tanh(y);
            weighted_sum(t, y, s)
        },
    );
}

#[test]
fn identical_tapes_give_identical_gradients() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tape = Tape::<f32>::new();
        let x = tape.param(random(&mut rng, &[4, 64], -1.0, 1.0).cast());
        let m = tape.fft_magnitude(x).unwrap();
        let l = tape.log_floor(m, 1e-7);
        let s = tape.mean(l);
        let g = tape.backward(s).unwrap();
        g.get(x).unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(build(), build());
}

proptest! {
    #[test]
    fn parseval_holds(data in prop::collection::vec(-1.0f64..1.0, 64)) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 64, data.clone()).unwrap());
        let m = tape.fft_magnitude(x).unwrap();
        let mags = tape.value(m).data();
        // One-sided bins: interior bins count twice.
        let mut spectral = mags[0] * mags[0] + mags[32] * mags[32];
        for k in 1..32 {
            spectral += 2.0 * mags[k] * mags[k];
        }
        let energy: f64 = data.iter().map(|v| v * v).sum::<f64>() * 64.0;
        prop_assert!((spectral - energy).abs() <= 1e-9 * energy.max(1e-12));
    }
}
