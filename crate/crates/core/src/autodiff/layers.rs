//! Linear and GRU layers on the tape.
//!
//! GRU convention, with gate columns packed as `[z | r | h]`:
//!
//! ```text
//! z  = σ(x W_z + h U_z + b_z)
//! r  = σ(x W_r + h U_r + b_r)
//! h~ = tanh(x W_h + (r ⊙ h) U_h + b_h)
//! h' = (1 - z) ⊙ h + z ⊙ h~
//! ```
//!
//! Sequences are batched time-major: row `t·B + b` holds item `b` at step `t`.

use rand::Rng;

use super::params::{uniform_init, Bound, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn init_linear<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, input: usize, output: usize, rng: &mut impl Rng) {
    store.insert(format!("{prefix}.w"), uniform_init(rng, input, output));
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[1, output]));
}

pub fn init_gru<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) {
    store.insert(format!("{prefix}.w_x"), uniform_init(rng, input, 3 * hidden));
    store.insert(format!("{prefix}.u_zr"), uniform_init(rng, hidden, 2 * hidden));
    store.insert(format!("{prefix}.u_h"), uniform_init(rng, hidden, hidden));
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[1, 3 * hidden]));
}

/// `x W + b` for `x: [N, in]`.
pub fn linear<T: Scalar>(tape: &mut Tape<T>, bound: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = bound.var(&format!("{prefix}.w"))?;
    let b = bound.var(&format!("{prefix}.b"))?;
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_x: Var,
    pub u_zr: Var,
    pub u_h: Var,
    pub bias: Var,
}

impl GruParams {
    pub fn from_bound(bound: &Bound, prefix: &str) -> Result<Self> {
        Ok(Self {
            w_x: bound.var(&format!("{prefix}.w_x"))?,
            u_zr: bound.var(&format!("{prefix}.u_zr"))?,
            u_h: bound.var(&format!("{prefix}.u_h"))?,
            bias: bound.var(&format!("{prefix}.bias"))?,
        })
    }

    pub fn hidden<T: Scalar>(&self, tape: &Tape<T>) -> usize {
        tape.value(self.u_h).cols()
    }

    fn validate<T: Scalar>(&self, tape: &Tape<T>, input: usize) -> Result<usize> {
        let h = self.hidden(tape);
        let ok = tape.value(self.u_h).shape() == [h, h]
            && tape.value(self.u_zr).shape() == [h, 2 * h]
            && tape.value(self.w_x).shape() == [input, 3 * h]
            && tape.value(self.bias).len() == 3 * h;
        if !ok {
            return Err(Error::contract(format!(
                "GRU parameters {:?}/{:?}/{:?}/{:?} do not match input width {input}",
                tape.value(self.w_x).shape(),
                tape.value(self.u_zr).shape(),
                tape.value(self.u_h).shape(),
                tape.value(self.bias).shape()
            )));
        }
        Ok(h)
    }
}

/// One step given the already-projected input `xp = x W + b` (`[B, 3H]`);
/// `h = None` stands for the zero state.
fn gru_step<T: Scalar>(tape: &mut Tape<T>, xp: Var, h: Option<Var>, p: &GruParams, hidden: usize) -> Result<Var> {
    let xzr = tape.cols(xp, 0, 2 * hidden)?;
    let xh = tape.cols(xp, 2 * hidden, hidden)?;
    match h {
        None => {
            let z = tape.cols(xzr, 0, hidden)?;
            let z = tape.sigmoid(z);
            let cand = tape.tanh(xh);
            tape.mul(z, cand)
        }
        Some(h) => {
            let hu = tape.matmul(h, p.u_zr)?;
            let pre = tape.add(xzr, hu)?;
            let gates = tape.sigmoid(pre);
            let z = tape.cols(gates, 0, hidden)?;
            let r = tape.cols(gates, hidden, hidden)?;
            let rh = tape.mul(r, h)?;
            let rhu = tape.matmul(rh, p.u_h)?;
            let pre_h = tape.add(xh, rhu)?;
            let cand = tape.tanh(pre_h);
            let delta = tape.sub(cand, h)?;
            let step = tape.mul(z, delta)?;
            tape.add(h, step)
        }
    }
}

/// Single GRU update for `x: [B, in]`, `h: [B, H]`.
pub fn gru_cell<T: Scalar>(tape: &mut Tape<T>, x: Var, h: Var, p: &GruParams) -> Result<Var> {
    let hidden = p.validate(tape, tape.value(x).cols())?;
    if tape.value(h).cols() != hidden || tape.value(h).rows() != tape.value(x).rows() {
        return Err(Error::contract(format!(
            "GRU state {:?} for input {:?} and hidden size {hidden}",
            tape.value(h).shape(),
            tape.value(x).shape()
        )));
    }
    let xw = tape.matmul(x, p.w_x)?;
    let xp = tape.add_row(xw, p.bias)?;
    gru_step(tape, xp, Some(h), p, hidden)
}

/// Runs a GRU from the zero state over a time-major `[K·B, in]` sequence and
/// returns all states as `[K·B, H]`.
pub fn gru_sequence<T: Scalar>(tape: &mut Tape<T>, x: Var, batch: usize, p: &GruParams) -> Result<Var> {
    let hidden = p.validate(tape, tape.value(x).cols())?;
    let rows = tape.value(x).rows();
    if batch == 0 || rows % batch != 0 {
        return Err(Error::contract(format!("{rows} sequence rows for batch {batch}")));
    }
    let xw = tape.matmul(x, p.w_x)?;
    let xp = tape.add_row(xw, p.bias)?;
    let mut states = Vec::with_capacity(rows / batch);
    let mut h = None;
    for t in 0..rows / batch {
        let xt = tape.rows(xp, t * batch, batch)?;
        let next = gru_step(tape, xt, h, p, hidden)?;
        states.push(next);
        h = Some(next);
    }
    tape.concat_rows(&states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_gru(tape: &mut Tape<f64>, input: usize, hidden: usize) -> GruParams {
        GruParams {
            w_x: tape.param(Tensor::zeros(&[input, 3 * hidden])),
            u_zr: tape.param(Tensor::zeros(&[hidden, 2 * hidden])),
            u_h: tape.param(Tensor::zeros(&[hidden, hidden])),
            bias: tape.param(Tensor::zeros(&[1, 3 * hidden])),
        }
    }

    #[test]
    fn zero_parameters_halve_the_state() {
        let mut tape = Tape::new();
        let p = zero_gru(&mut tape, 3, 4);
        let x = tape.constant(Tensor::matrix(1, 3, vec![0.3, -2.0, 5.0]).unwrap());
        let h = tape.constant(Tensor::matrix(1, 4, vec![1.0, -0.5, 0.25, 0.0]).unwrap());
        let out = gru_cell(&mut tape, x, h, &p).unwrap();
        assert_eq!(tape.value(out).data(), &[0.5, -0.25, 0.125, 0.0]);
    }

    #[test]
    fn zero_input_and_state_with_zero_bias_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        init_gru(&mut store, "g", 3, 4, &mut rng);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, |_| true);
        let p = GruParams::from_bound(&bound, "g").unwrap();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        let h = tape.constant(Tensor::zeros(&[2, 4]));
        let out = gru_cell(&mut tape, x, h, &p).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sequence_matches_repeated_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::<f64>::new();
        init_gru(&mut store, "g", 3, 5, &mut rng);
        let (batch, steps) = (2, 4);
        let xs: Vec<f64> = (0..batch * steps * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, |_| false);
        let p = GruParams::from_bound(&bound, "g").unwrap();
        let x = tape.constant(Tensor::matrix(batch * steps, 3, xs.clone()).unwrap());
        let seq = gru_sequence(&mut tape, x, batch, &p).unwrap();
        let mut h = tape.constant(Tensor::zeros(&[batch, 5]));
        for t in 0..steps {
            let xt = tape.rows(x, t * batch, batch).unwrap();
            h = gru_cell(&mut tape, xt, h, &p).unwrap();
            let expect = tape.value(h).data().to_vec();
            let got = &tape.value(seq).data()[t * batch * 5..(t + 1) * batch * 5];
            for (a, b) in got.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let mut tape = Tape::new();
        let p = zero_gru(&mut tape, 3, 4);
        let x = tape.constant(Tensor::zeros(&[1, 2]));
        let h = tape.constant(Tensor::zeros(&[1, 4]));
        assert!(matches!(gru_cell(&mut tape, x, h, &p), Err(Error::Contract(_))));
    }
}
