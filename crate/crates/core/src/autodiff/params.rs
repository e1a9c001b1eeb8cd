//! Named parameter tensors with stable ordering, gradient accumulators,
//! and a bit-exact binary serialization format.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::tensor::TensorValue;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RANPPAR\0";
const VERSION: u8 = 1;

/// Ordered store of named parameters plus per-parameter gradient
/// accumulators. Insertion order is the canonical order used for
/// serialization and flattening.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<TensorValue>,
    grads: Vec<TensorValue>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: TensorValue) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name {name:?}")));
        }
        self.index.insert(name.clone(), self.values.len());
        self.grads.push(TensorValue::zeros(value.shape().clone()));
        self.values.push(value);
        self.names.push(name);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&TensorValue> {
        self.index
            .get(name)
            .map(|&i| &self.values[i])
            .ok_or_else(|| Error::contract(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut TensorValue> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.values[i]),
            None => Err(Error::contract(format!("unknown parameter {name:?}"))),
        }
    }

    pub fn grad(&self, name: &str) -> Result<&TensorValue> {
        self.index
            .get(name)
            .map(|&i| &self.grads[i])
            .ok_or_else(|| Error::contract(format!("unknown parameter {name:?}")))
    }

    /// Adds `g` into the accumulator for `name`. Shapes must match.
    pub fn accumulate_grad(&mut self, name: &str, g: &TensorValue) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name:?}")))?;
        if g.shape() != self.values[i].shape() {
            return Err(Error::shape(format!(
                "gradient shape {:?} does not match parameter {name:?} shape {:?}",
                g.shape().dims(),
                self.values[i].shape().dims()
            )));
        }
        let acc = self.grads[i].data_mut();
        for (a, &b) in acc.iter_mut().zip(g.data()) {
            *a += b;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v = 0.0;
            }
        }
    }

    /// (name, value, grad) triples in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorValue, &TensorValue)> {
        self.names
            .iter()
            .zip(self.values.iter().zip(self.grads.iter()))
            .map(|(n, (v, g))| (n.as_str(), v, g))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// In-place update of every parameter: f(name, value, grad).
    pub fn update(&mut self, mut f: impl FnMut(&str, &mut TensorValue, &TensorValue)) {
        for i in 0..self.values.len() {
            f(&self.names[i], &mut self.values[i], &self.grads[i]);
        }
    }

    pub fn flat_len(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for v in &self.values {
            out.extend_from_slice(v.data());
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::contract(format!(
                "flat vector length {} does not match store size {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut offset = 0;
        for v in &mut self.values {
            let n = v.data().len();
            v.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn flatten_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for g in &self.grads {
            out.extend_from_slice(g.data());
        }
        out
    }

    /// Human-readable (name, coordinate) label for a flat index.
    pub fn describe_flat_index(&self, mut idx: usize) -> String {
        for (name, v) in self.names.iter().zip(&self.values) {
            let n = v.data().len();
            if idx < n {
                return format!("{name}[{idx}]");
            }
            idx -= n;
        }
        format!("<out of range {idx}>")
    }

    /// Writes the store as (name, rank, dims..., little-endian f64 payload)
    /// records behind a magic header and version byte.
    pub fn serialize<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for (name, value) in self.names.iter().zip(&self.values) {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            let dims = value.shape().dims();
            w.write_all(&(dims.len() as u32).to_le_bytes())?;
            for &d in dims {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn deserialize<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("bad parameter file magic"));
        }
        let mut version = [0u8; 1];
        read_exact(r, &mut version)?;
        if version[0] != VERSION {
            return Err(Error::format(format!(
                "unsupported parameter file version {}",
                version[0]
            )));
        }
        let count = read_u64(r)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            read_exact(r, &mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::format("parameter name is not valid UTF-8"))?;
            let rank = read_u32(r)? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(read_u64(r)? as usize);
            }
            let n: usize = dims.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                read_exact(r, &mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            store.insert(name, TensorValue::new(dims, data)?)?;
        }
        Ok(store)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format(format!("truncated parameter file: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
