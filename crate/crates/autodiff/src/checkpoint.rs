//! Versioned binary container for named `f32` arrays.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "KMSP" | version | array count
//! per array: name length | name bytes (UTF-8) | rank | dims... | f32 values (LE)
//! ```
//!
//! Integer metadata is stored bit-cast into the `f32` slots (see
//! [`NamedArray::from_u32s`]) so it round-trips exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{AutodiffError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"KMSP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedArray {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor<f32>) -> Self {
        Self {
            name: name.into(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        Tensor::new(self.shape.clone(), self.data.clone())
    }

    pub fn from_u32s(name: impl Into<String>, values: &[u32]) -> Self {
        Self {
            name: name.into(),
            shape: vec![values.len()],
            data: values.iter().map(|v| f32::from_bits(*v)).collect(),
        }
    }

    pub fn as_u32s(&self) -> Vec<u32> {
        self.data.iter().map(|v| v.to_bits()).collect()
    }
}

/// All parameters of `store`, each name prefixed with `prefix`.
pub fn arrays_from_store(store: &ParamStore<f32>, prefix: &str) -> Vec<NamedArray> {
    store
        .iter()
        .map(|(name, t)| NamedArray::from_tensor(format!("{prefix}{name}"), t))
        .collect()
}

/// Rebuilds a store from the arrays whose names start with `prefix`, in file order.
pub fn store_from_arrays(arrays: &[NamedArray], prefix: &str) -> Result<ParamStore<f32>> {
    let mut store = ParamStore::new();
    for a in arrays.iter().filter(|a| a.name.starts_with(prefix)) {
        store.insert(&a.name[prefix.len()..], a.to_tensor()?)?;
    }
    Ok(store)
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| AutodiffError::Checkpoint(format!("{what} {v} exceeds u32")))
}

pub fn write_arrays(w: &mut impl Write, arrays: &[NamedArray]) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, to_u32(arrays.len(), "array count")?)?;
    for a in arrays {
        let n: usize = a.shape.iter().product();
        if n != a.data.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "array {} has shape {:?} but {} values",
                a.name,
                a.shape,
                a.data.len()
            )));
        }
        put_u32(w, to_u32(a.name.len(), "name length")?)?;
        w.write_all(a.name.as_bytes())?;
        put_u32(w, to_u32(a.shape.len(), "rank")?)?;
        for &d in &a.shape {
            put_u32(w, to_u32(d, "dimension")?)?;
        }
        let mut buf = Vec::with_capacity(4 * n);
        for v in &a.data {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_arrays(r: &mut impl Read) -> Result<Vec<NamedArray>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| AutodiffError::Checkpoint("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(AutodiffError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(AutodiffError::Checkpoint(format!(
            "format version {version} not supported (expected {FORMAT_VERSION})"
        )));
    }
    let count = get_u32(r)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = get_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| AutodiffError::Checkpoint("array name is not UTF-8".into()))?;
        let rank = get_u32(r)? as usize;
        let shape = (0..rank)
            .map(|_| get_u32(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; 4 * n];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        out.push(NamedArray { name, shape, data });
    }
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, arrays: &[NamedArray]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_arrays(&mut w, arrays)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<NamedArray>> {
    read_arrays(&mut BufReader::new(File::open(path)?))
}
