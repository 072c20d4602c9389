use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::kernels;
use super::tensor::Tensor;
use crate::dsp::frame_count;
use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Abs(Var),
    LogFloor(Var, T),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Rows { src: Var, start: usize },
    ConcatRows(Vec<Var>),
    Cols { src: Var, start: usize },
    ConcatCols(Vec<Var>),
    Gather { table: Var, indices: Vec<usize> },
    Frame { src: Var, hop: usize, window: Vec<T> },
    FftMagnitude { src: Var, spectra: Vec<Complex<T>> },
    Fir { src: Var, half: Vec<T> },
    FilteredNoise { ir: Var, noise: Vec<T>, batch: usize, hop: usize },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients of a scalar loss with respect to every trainable leaf.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Append-only record of tensor operations; reverse traversal of the node
/// list is a valid topological order for backpropagation.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Magnitudes at or below this value propagate a zero subgradient.
pub const MAGNITUDE_EPS: f64 = 1e-12;

fn sigmoid<T: Scalar>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    y.max(T::min_positive_value()).min(T::one() - T::epsilon())
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::lit(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::contract(format!("{what}: shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    fn map(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let src = self.value(a);
        let out = Tensor::from_parts(src.shape().to_vec(), src.data().iter().map(|&v| f(v)).collect());
        self.push(out, op, &[a])
    }

    fn zip(&mut self, a: Var, b: Var, op: Op<T>, what: &str, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(va.shape().to_vec(), data);
        Ok(self.push(out, op, &[a, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        if vb.rows() != k || vb.shape().len() != 2 {
            return Err(Error::contract(format!(
                "matmul: {:?} x {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, va.data(), false, vb.data(), false, T::zero(), &mut out);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// Adds a `[1, n]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        let n = va.cols();
        if vr.len() != n {
            return Err(Error::contract(format!(
                "add_row: row of {} values for {} columns",
                vr.len(),
                n
            )));
        }
        let mut data = va.data().to_vec();
        for chunk in data.chunks_exact_mut(n) {
            for (x, &r) in chunk.iter_mut().zip(vr.data()) {
                *x += r;
            }
        }
        let out = Tensor::from_parts(va.shape().to_vec(), data);
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        self.map(a, Op::Scale(a, factor), |x| x * factor)
    }

    /// Logistic sigmoid, clamped strictly inside (0, 1).
    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// Hyperbolic tangent, clamped strictly inside (-1, 1).
    pub fn tanh(&mut self, a: Var) -> Var {
        let bound = T::one() - T::epsilon();
        self.map(a, Op::Tanh(a), |x| x.tanh().max(-bound).min(bound))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, Op::Softplus(a), softplus)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, Op::Abs(a), |x| x.abs())
    }

    /// `ln(max(x, floor))`; zero gradient where the floor is active.
    pub fn log_floor(&mut self, a: Var, floor: T) -> Var {
        self.map(a, Op::LogFloor(a, floor), |x| x.max(floor).ln())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = T::lit(self.value(a).data().iter().map(|v| v.as_f64()).sum::<f64>());
        self.push(Tensor::scalar(total), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let n = src.len().max(1) as f64;
        let m = T::lit(src.data().iter().map(|v| v.as_f64()).sum::<f64>() / n);
        self.push(Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        Ok(self.mean(sq))
    }

    /// Rows `[start, start + count)` of a matrix.
    pub fn rows(&mut self, src: Var, start: usize, count: usize) -> Result<Var> {
        let v = self.value(src);
        let cols = v.cols();
        if start + count > v.rows() {
            return Err(Error::contract(format!(
                "rows {start}..{} of {}",
                start + count,
                v.rows()
            )));
        }
        let data = v.data()[start * cols..(start + count) * cols].to_vec();
        Ok(self.push(Tensor::from_parts(vec![count, cols], data), Op::Rows { src, start }, &[src]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat_rows of nothing"));
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::contract("concat_rows: column counts differ"));
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        Ok(self.push(Tensor::from_parts(vec![rows, cols], data), Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Columns `[start, start + count)` of a matrix.
    pub fn cols(&mut self, src: Var, start: usize, count: usize) -> Result<Var> {
        let v = self.value(src);
        let (rows, cols) = (v.rows(), v.cols());
        if start + count > cols {
            return Err(Error::contract(format!("cols {start}..{} of {cols}", start + count)));
        }
        let mut data = Vec::with_capacity(rows * count);
        for r in 0..rows {
            data.extend_from_slice(&v.data()[r * cols + start..r * cols + start + count]);
        }
        Ok(self.push(Tensor::from_parts(vec![rows, count], data), Op::Cols { src, start }, &[src]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat_cols of nothing"));
        };
        let rows = self.value(first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::contract("concat_cols: row counts differ"));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Tensor::from_parts(vec![rows, total], data), Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Row lookup: output row `i` is `table[indices[i]]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let v = self.value(table);
        let cols = v.cols();
        if let Some(&bad) = indices.iter().find(|&&i| i >= v.rows()) {
            return Err(Error::contract(format!("gather index {bad} of {} rows", v.rows())));
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(v.row(i));
        }
        let out = Tensor::from_parts(vec![indices.len(), cols], data);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            &[table],
        ))
    }

    /// Windowed framing of each row of `[B, L]` signals into
    /// `[B·F, window.len()]`, using the library-wide frame count policy.
    pub fn frame(&mut self, src: Var, window: &[T], hop: usize) -> Result<Var> {
        let v = self.value(src);
        let n = window.len();
        if hop == 0 || hop > n {
            return Err(Error::contract(format!("frame hop {hop} for length {n}")));
        }
        let (batch, len) = (v.rows(), v.cols());
        let f = frame_count(len, n, hop);
        let mut data = vec![T::zero(); batch * f * n];
        for b in 0..batch {
            let signal = v.row(b);
            for k in 0..f {
                let start = k * hop;
                let out = &mut data[(b * f + k) * n..(b * f + k + 1) * n];
                let avail = len.saturating_sub(start).min(n);
                for j in 0..avail {
                    out[j] = signal[start + j] * window[j];
                }
            }
        }
        let out = Tensor::from_parts(vec![batch * f, n], data);
        Ok(self.push(
            out,
            Op::Frame {
                src,
                hop,
                window: window.to_vec(),
            },
            &[src],
        ))
    }

    /// `|FFT(row)|` for each row; output has `N/2 + 1` bins.
    pub fn fft_magnitude(&mut self, src: Var) -> Result<Var> {
        let v = self.value(src);
        let n = v.cols();
        if !n.is_power_of_two() {
            return Err(Error::contract(format!("fft_magnitude frame length {n} is not a power of two")));
        }
        let rows = v.rows();
        let half = n / 2 + 1;
        let fft = FftPlanner::<T>::new().plan_fft_forward(n);
        let mut spectra = Vec::with_capacity(rows * half);
        let mut mags = Vec::with_capacity(rows * half);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for r in 0..rows {
            for (c, &x) in buf.iter_mut().zip(v.row(r)) {
                *c = Complex::new(x, T::zero());
            }
            fft.process(&mut buf);
            for c in &buf[..half] {
                spectra.push(*c);
                mags.push(c.norm());
            }
        }
        let out = Tensor::from_parts(vec![rows, half], mags);
        Ok(self.push(out, Op::FftMagnitude { src, spectra }, &[src]))
    }

    /// Linear-phase FIR taps from per-row half-spectrum magnitudes.
    ///
    /// `half` is the `(c + 1) × n_bands` map from magnitudes to taps at
    /// distance `d = 0..=c` from the center; output rows are `2c + 1` long
    /// and mirror-symmetric bit-for-bit.
    pub fn fir(&mut self, src: Var, half: &[T], centre: usize) -> Result<Var> {
        let v = self.value(src);
        let bands = v.cols();
        if half.len() != (centre + 1) * bands {
            return Err(Error::contract("fir: design matrix does not match band count"));
        }
        let out = kernels::fir_forward(v.data(), v.rows(), bands, half, centre);
        let out = Tensor::from_parts(vec![v.rows(), 2 * centre + 1], out);
        Ok(self.push(
            out,
            Op::Fir {
                src,
                half: half.to_vec(),
            },
            &[src],
        ))
    }

    /// Frame-wise filtered noise. `ir` is `[K·B, M]` in time-major row order
    /// (`t·B + b`), `noise` holds `B` consecutive streams of `K·hop` samples.
    /// Output `[B, K·hop]`; each frame's hop of noise is convolved with that
    /// frame's (center-aligned) response and overlap-added.
    pub fn filtered_noise(&mut self, ir: Var, noise: Vec<T>, batch: usize, hop: usize) -> Result<Var> {
        let v = self.value(ir);
        let (rows, taps) = (v.rows(), v.cols());
        if batch == 0 || rows % batch != 0 || taps % 2 == 0 {
            return Err(Error::contract(format!(
                "filtered_noise: {rows} responses of {taps} taps for batch {batch}"
            )));
        }
        let frames = rows / batch;
        if noise.len() != batch * frames * hop {
            return Err(Error::contract(format!(
                "filtered_noise: {} noise samples, need {}",
                noise.len(),
                batch * frames * hop
            )));
        }
        let out = kernels::filtered_noise_forward(v.data(), &noise, batch, frames, hop, taps);
        let out = Tensor::from_parts(vec![batch, frames * hop], out);
        Ok(self.push(out, Op::FilteredNoise { ir, noise, batch, hop }, &[ir]))
    }

    /// Reverse-mode sweep from a scalar `loss`. Every trainable leaf gets a
    /// gradient; leaves the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            } else if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    /// Accumulation buffer for `v`, created as zeros on first use; `None`
    /// when `v` does not need a gradient.
    fn buffer<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> Option<&'g mut Tensor<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape())))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(Tensor::from_parts(self.nodes[v.0].value.shape().to_vec(), g.into_data()))
            }
        }
    }

    fn elementwise(&self, grads: &mut [Option<Tensor<T>>], a: Var, g: &Tensor<T>, f: impl Fn(T, usize) -> T) {
        if !self.nodes[a.0].requires_grad {
            return;
        }
        let data = g.data().iter().enumerate().map(|(i, &gi)| f(gi, i)).collect();
        self.accumulate(grads, a, Tensor::from_parts(g.shape().to_vec(), data));
    }

    fn propagate(&self, i: usize, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if let Some(buf) = self.buffer(grads, *a) {
                    gemm(m, n, k, g.data(), false, vb.data(), true, T::one(), buf.data_mut());
                }
                if let Some(buf) = self.buffer(grads, *b) {
                    gemm(k, m, n, va.data(), true, g.data(), false, T::one(), buf.data_mut());
                }
            }
            Op::Add(a, b) => {
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
                self.accumulate(grads, *a, g);
            }
            Op::Sub(a, b) => {
                self.elementwise(grads, *b, &g, |gi, _| -gi);
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.elementwise(grads, *a, &g, |gi, j| gi * vb[j]);
                self.elementwise(grads, *b, &g, |gi, j| gi * va[j]);
            }
            Op::AddRow(a, row) => {
                if let Some(buf) = self.buffer(grads, *row) {
                    let n = buf.len();
                    let mut sums = vec![0.0f64; n];
                    for chunk in g.data().chunks_exact(n) {
                        for (s, &v) in sums.iter_mut().zip(chunk) {
                            *s += v.as_f64();
                        }
                    }
                    for (dst, s) in buf.data_mut().iter_mut().zip(sums) {
                        *dst += T::lit(s);
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::Scale(a, factor) => self.elementwise(grads, *a, &g, |gi, _| gi * *factor),
            Op::Sigmoid(a) => self.elementwise(grads, *a, &g, |gi, j| gi * y[j] * (T::one() - y[j])),
            Op::Tanh(a) => self.elementwise(grads, *a, &g, |gi, j| gi * (T::one() - y[j] * y[j])),
            Op::Softplus(a) => {
                let x = self.value(*a).data();
                self.elementwise(grads, *a, &g, |gi, j| gi * sigmoid(x[j]));
            }
            Op::Abs(a) => {
                let x = self.value(*a).data();
                self.elementwise(grads, *a, &g, |gi, j| {
                    if x[j] > T::zero() {
                        gi
                    } else if x[j] < T::zero() {
                        -gi
                    } else {
                        T::zero()
                    }
                });
            }
            Op::LogFloor(a, floor) => {
                let x = self.value(*a).data();
                self.elementwise(grads, *a, &g, |gi, j| if x[j] > *floor { gi / x[j] } else { T::zero() });
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                self.elementwise(grads, *a, &g, |gi, j| T::lit(2.0) * x[j] * gi);
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::full(&shape, g.item()));
            }
            Op::Mean(a) => {
                let src = self.value(*a);
                let n = T::from_usize_lossy(src.len().max(1));
                let shape = src.shape().to_vec();
                self.accumulate(grads, *a, Tensor::full(&shape, g.item() / n));
            }
            Op::Rows { src, start } => {
                if let Some(buf) = self.buffer(grads, *src) {
                    let off = start * buf.cols();
                    for (dst, &v) in buf.data_mut()[off..off + g.len()].iter_mut().zip(g.data()) {
                        *dst += v;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if let Some(buf) = self.buffer(grads, *p) {
                        for (dst, &v) in buf.data_mut().iter_mut().zip(&g.data()[off..off + len]) {
                            *dst += v;
                        }
                    }
                    off += len;
                }
            }
            Op::Cols { src, start } => {
                if let Some(buf) = self.buffer(grads, *src) {
                    let cols = buf.cols();
                    let count = g.cols();
                    for r in 0..g.rows() {
                        let dst = &mut buf.data_mut()[r * cols + start..r * cols + start + count];
                        for (d, &v) in dst.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut off = 0;
                for p in parts {
                    let width = self.value(*p).cols();
                    if let Some(buf) = self.buffer(grads, *p) {
                        for r in 0..g.rows() {
                            let src = &g.data()[r * total + off..r * total + off + width];
                            for (d, &v) in buf.data_mut()[r * width..(r + 1) * width].iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                    }
                    off += width;
                }
            }
            Op::Gather { table, indices } => {
                if let Some(buf) = self.buffer(grads, *table) {
                    let cols = buf.cols();
                    for (r, &idx) in indices.iter().enumerate() {
                        for (d, &v) in buf.data_mut()[idx * cols..(idx + 1) * cols].iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Frame { src, hop, window } => {
                if let Some(buf) = self.buffer(grads, *src) {
                    let n = window.len();
                    let (batch, len) = (buf.rows(), buf.cols());
                    let f = frame_count(len, n, *hop);
                    for b in 0..batch {
                        for k in 0..f {
                            let start = k * hop;
                            let avail = len.saturating_sub(start).min(n);
                            let grow = g.row(b * f + k);
                            let dst = &mut buf.data_mut()[b * len + start..b * len + start + avail];
                            for j in 0..avail {
                                dst[j] += grow[j] * window[j];
                            }
                        }
                    }
                }
            }
            Op::FftMagnitude { src, spectra } => {
                if let Some(buf) = self.buffer(grads, *src) {
                    let n = buf.cols();
                    let half = n / 2 + 1;
                    let eps = T::lit(MAGNITUDE_EPS);
                    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n);
                    let mut work = vec![Complex::new(T::zero(), T::zero()); n];
                    for r in 0..buf.rows() {
                        work.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
                        for k in 0..half {
                            let x = spectra[r * half + k];
                            let m = y[r * half + k];
                            if m > eps {
                                work[k] = x * (g.data()[r * half + k] / m);
                            }
                        }
                        ifft.process(&mut work);
                        for (d, c) in buf.data_mut()[r * n..(r + 1) * n].iter_mut().zip(&work) {
                            *d += c.re;
                        }
                    }
                }
            }
            Op::Fir { src, half } => {
                if let Some(buf) = self.buffer(grads, *src) {
                    let bands = buf.cols();
                    let rows = buf.rows();
                    kernels::fir_backward(g.data(), rows, bands, half, buf.data_mut());
                }
            }
            Op::FilteredNoise { ir, noise, batch, hop } => {
                if let Some(buf) = self.buffer(grads, *ir) {
                    let taps = buf.cols();
                    let frames = buf.rows() / batch;
                    kernels::filtered_noise_backward(g.data(), noise, *batch, frames, *hop, taps, buf.data_mut());
                }
            }
        }
    }
}
