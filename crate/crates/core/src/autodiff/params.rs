use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TENSOR_FORMAT_VERSION: u32 = 1;

/// Named parameter tensors, ordered by name so every traversal (binding,
/// optimizer updates, serialization) is deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T: Scalar> {
    tensors: BTreeMap<String, Tensor<T>>,
}

/// Parameters recorded on one tape.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl FromIterator<(String, Var)> for Bound {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Bound {
            vars: iter.into_iter().collect(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn contains_prefix(&self, prefix: &str) -> bool {
        self.tensors.keys().any(|k| k.starts_with(prefix))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Parameters whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore<T> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamStore<T>) {
        self.tensors.extend(other.tensors);
    }

    /// Records every parameter on `tape`; names for which `trainable`
    /// returns false become constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: impl Fn(&str) -> bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable(name) {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` matrix of shape `[fan_in, fan_out]`.
pub fn uniform_init<T: Scalar>(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::lit(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_parts(vec![fan_in, fan_out], data)
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    format_version: u32,
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

/// Writes `[u64 LE header length][JSON header][packed LE f32 payload]`.
/// Offsets and lengths in the header are in bytes relative to the payload.
pub fn write_tensors<T: Scalar>(
    mut out: impl Write,
    params: &ParamStore<T>,
    meta: serde_json::Value,
) -> Result<()> {
    let mut entries = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, t) in params.iter() {
        let length = t.len() * 4;
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            length,
        });
        offset += length;
    }
    let header = serde_json::to_vec(&TensorHeader {
        format_version: TENSOR_FORMAT_VERSION,
        tensors: entries,
        meta,
    })?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let mut payload = Vec::with_capacity(offset);
    for (_, t) in params.iter() {
        for v in t.data() {
            payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out.write_all(&payload)?;
    Ok(())
}

pub fn read_tensors<T: Scalar>(mut input: impl Read) -> Result<(ParamStore<T>, serde_json::Value)> {
    let mut len = [0u8; 8];
    input
        .read_exact(&mut len)
        .map_err(|_| Error::Checkpoint("truncated header length".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 28 {
        return Err(Error::Checkpoint(format!("implausible header length {len}")));
    }
    let mut header = vec![0u8; len];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let header: TensorHeader =
        serde_json::from_slice(&header).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != TENSOR_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "tensor format version {} is not supported",
            header.format_version
        )));
    }
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    let mut params = ParamStore::new();
    for e in header.tensors {
        let count: usize = e.shape.iter().product();
        if e.length != count * 4 || e.offset + e.length > payload.len() {
            return Err(Error::Checkpoint(format!("tensor {} has inconsistent extent", e.name)));
        }
        let data = payload[e.offset..e.offset + e.length]
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        params.insert(e.name, Tensor::from_parts(e.shape, data));
    }
    Ok((params, header.meta))
}
