//! Central finite-difference verification of tape gradients (f64).

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest per-entry relative error observed.
    pub max_rel_error: f64,
    /// Number of entries compared.
    pub checked: usize,
}

/// Compares analytic gradients of the scalar built by `build` against
/// central differences with step `h`.
///
/// At most `max_entries` entries per input are probed (evenly spaced). The
/// relative error of one entry is `|a - n| / max(|a|, |n|, floor)`, where
/// `floor` is 1e-3 of the largest finite-difference magnitude of that
/// input, so entries that are numerically zero do not dominate.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, max_entries: usize, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut probe = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).expect("gradient of trainable leaf").data().to_vec();
        let len = inputs[i].len();
        let stride = len.div_ceil(max_entries.max(1)).max(1);
        let mut pairs = Vec::new();
        for j in (0..len).step_by(stride) {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + h;
            let up = eval(&probe)?;
            probe[i].data_mut()[j] = orig - h;
            let down = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            if !numeric.is_finite() || !analytic[j].is_finite() {
                return Err(Error::Numerical(format!("non-finite gradient at input {i}, entry {j}")));
            }
            pairs.push((analytic[j], numeric));
        }
        let scale = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        let floor = 1e-3 * scale + 1e-12;
        for (a, n) in pairs {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked,
    })
}
