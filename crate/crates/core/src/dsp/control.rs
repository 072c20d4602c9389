use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A `K × d` control-rate signal, stored row-major.
///
/// Serializes to the interchange JSON `{control_rate, dims, values}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ControlSignal<T: Scalar> {
    pub control_rate: u32,
    pub dims: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> ControlSignal<T> {
    pub fn new(values: Vec<T>, dims: usize, control_rate: u32) -> Result<Self> {
        let s = Self {
            control_rate,
            dims,
            values,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(frames: usize, dims: usize, control_rate: u32) -> Self {
        Self {
            control_rate,
            dims,
            values: vec![T::zero(); frames * dims],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.control_rate == 0 {
            return Err(Error::contract("control signal needs dims > 0 and control_rate > 0"));
        }
        if self.values.len() % self.dims != 0 {
            return Err(Error::contract(format!(
                "{} values do not divide into rows of {}",
                self.values.len(),
                self.dims
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite control value at index {i}")));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.values.len() / self.dims.max(1)
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.values[k * self.dims..(k + 1) * self.dims]
    }

    /// Column `c` as a sequence.
    pub fn channel(&self, c: usize) -> Vec<T> {
        self.values.iter().skip(c).step_by(self.dims).copied().collect()
    }

    /// Frames `[start, start + len)`, zero-padded past the end.
    pub fn window(&self, start: usize, len: usize) -> Self {
        let mut values = vec![T::zero(); len * self.dims];
        let end = (start + len).min(self.frames());
        if start < end {
            values[..(end - start) * self.dims].copy_from_slice(&self.values[start * self.dims..end * self.dims]);
        }
        Self {
            control_rate: self.control_rate,
            dims: self.dims,
            values,
        }
    }

    /// Same signal scaled by `gain`.
    pub fn scaled(&self, gain: T) -> Self {
        Self {
            control_rate: self.control_rate,
            dims: self.dims,
            values: self.values.iter().map(|v| *v * gain).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ControlSignal<U> {
        ControlSignal {
            control_rate: self.control_rate,
            dims: self.dims,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.control_rate as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}
