//! Named dense tensors and the NTC1 container format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "NTC1" | u32 version = 1 | u32 tensor_count
//! per tensor: u16 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 ndim
//!             | ndim × u32 extents | row-major payload
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"NTC1";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

/// Named, shaped, row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    name: String,
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let name = name.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Shape(format!("tensor {name:?} has invalid dims {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "tensor {name:?} dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { name, dims, data })
    }

    pub fn zeros(name: impl Into<String>, dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(name, dims, vec![T::zero(); len])
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(name: impl Into<String>, value: T) -> Self {
        Tensor {
            name: name.into(),
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(name: impl Into<String>, data: Vec<T>) -> Result<Self> {
        let len = data.len();
        Self::new(name, vec![len], data)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(self.name, dims, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            name: self.name.clone(),
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            name: self.name.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Returns the contiguous block of the outermost axis belonging to
    /// `group_index` when that axis is split into `group_count` equal groups.
    pub fn slice_channel_group(&self, group_index: usize, group_count: usize) -> Result<Self> {
        let channels = self.dims[0];
        if group_count == 0 || channels % group_count != 0 {
            return Err(Error::Shape(format!(
                "channel extent {channels} of {:?} not divisible into {group_count} groups",
                self.name
            )));
        }
        if group_index >= group_count {
            return Err(Error::Shape(format!(
                "group index {group_index} out of range for {group_count} groups"
            )));
        }
        let per_group = channels / group_count;
        let inner: usize = self.dims[1..].iter().product();
        let start = group_index * per_group * inner;
        let mut dims = self.dims.clone();
        dims[0] = per_group;
        Ok(Tensor {
            name: format!("{}.group{group_index}", self.name),
            dims,
            data: self.data[start..start + per_group * inner].to_vec(),
        })
    }
}

/// Ordered collection of named f32 tensors, as stored in an NTC1 file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightBundle {
    tensors: BTreeMap<String, Tensor<f32>>,
}

impl WeightBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tensors(tensors: impl IntoIterator<Item = Tensor<f32>>) -> Result<Self> {
        let mut bundle = Self::new();
        for t in tensors {
            bundle.insert(t)?;
        }
        Ok(bundle)
    }

    /// Adds a tensor; duplicate names are rejected.
    pub fn insert(&mut self, tensor: Tensor<f32>) -> Result<()> {
        if self.tensors.contains_key(tensor.name()) {
            return Err(Error::Format(format!("duplicate tensor name {:?}", tensor.name())));
        }
        self.tensors.insert(tensor.name().to_owned(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<f32>> {
        self.get(name)
            .ok_or_else(|| Error::Topology(format!("missing tensor {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<f32>> {
        self.tensors.values()
    }

    pub fn into_tensors(self) -> impl Iterator<Item = Tensor<f32>> {
        self.tensors.into_values()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in self.tensors.values() {
            let name = t.name().as_bytes();
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[DTYPE_F32, t.dims().len() as u8])?;
            for &d in t.dims() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()
    }

    /// Parses an NTC1 stream without any topology check.
    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r, "version")?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r, "tensor count")?;
        let mut bundle = WeightBundle::new();
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len, "name length")?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut name, "name")?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let mut head = [0u8; 2];
            read_exact(&mut r, &mut head, "dtype")?;
            let [dtype, ndim] = head;
            if dtype != DTYPE_F32 {
                return Err(Error::Format(format!("tensor {name:?}: unsupported dtype {dtype}")));
            }
            if ndim == 0 {
                return Err(Error::Format(format!("tensor {name:?}: zero dimensions")));
            }
            let mut dims = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                dims.push(read_u32(&mut r, "extent")? as usize);
            }
            if dims.contains(&0) {
                return Err(Error::Format(format!("tensor {name:?}: zero extent in {dims:?}")));
            }
            let len = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Format(format!("tensor {name:?}: size overflow")))?;
            let mut raw = vec![0u8; len];
            read_exact(&mut r, &mut raw, "payload")?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::CorruptData(format!(
                    "tensor {name:?} has non-finite value at index {pos}"
                )));
            }
            bundle.insert(Tensor::new(name, dims, data)?)?;
        }
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing) {
            Ok(0) => Ok(bundle),
            Ok(_) => Err(Error::Format("trailing bytes after last tensor".into())),
            Err(e) => Err(Error::Format(format!("read error after last tensor: {e}"))),
        }
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated file while reading {what}: {e}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn save_bundle(bundle: &WeightBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    bundle
        .write_to(BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

/// Loads any NTC1 file without checking it against the network topology.
pub fn load_raw(path: impl AsRef<Path>) -> Result<WeightBundle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    WeightBundle::read_from(BufReader::new(file))
}

/// Loads network parameters and validates every tensor against the convnet topology.
pub fn load_bundle(path: impl AsRef<Path>) -> Result<WeightBundle> {
    let bundle = load_raw(path)?;
    crate::convnet::topology::validate(&bundle)?;
    Ok(bundle)
}

pub fn tensor_slice_channel_group<T: Scalar>(
    t: &Tensor<T>,
    group_index: usize,
    group_count: usize,
) -> Result<Tensor<T>> {
    t.slice_channel_group(group_index, group_count)
}
