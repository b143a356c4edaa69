//! Versioned container of JSON metadata plus named `f32` tensors.
//!
//! Layout (little-endian): magic `CTLT`, `u32` version (1), `u32` metadata length, metadata
//! JSON bytes, `u32` tensor count, then per tensor a `u16` name length, name bytes, `u8`
//! rank, `rank` × `u64` dims and the row-major values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::Value;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"CTLT";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub metadata: Value,
    pub tensors: Vec<NamedTensor>,
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::TruncatedRecord(what.to_string()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

impl TensorFile {
    pub fn new(metadata: Value) -> Self {
        Self {
            metadata,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        if name.len() > u16::MAX as usize || shape.len() > u8::MAX as usize {
            return Err(Error::invalid(format!("tensor {name:?} name or rank too large")));
        }
        self.tensors.push(NamedTensor { name, shape, data });
        Ok(())
    }

    pub fn push_array1(&mut self, name: &str, a: &Array1<f32>) -> Result<()> {
        self.push(name, vec![a.len()], a.to_vec())
    }

    pub fn push_array2(&mut self, name: &str, a: &Array2<f32>) -> Result<()> {
        self.push(name, a.shape().to_vec(), a.iter().copied().collect())
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::invalid(format!("missing tensor {name:?}")))
    }

    pub fn array1(&self, name: &str) -> Result<Array1<f32>> {
        let t = self.get(name)?;
        if t.shape.len() != 1 {
            return Err(Error::invalid(format!("tensor {name:?} has rank {}", t.shape.len())));
        }
        Ok(Array1::from(t.data.clone()))
    }

    pub fn array2(&self, name: &str) -> Result<Array2<f32>> {
        let t = self.get(name)?;
        if t.shape.len() != 2 {
            return Err(Error::invalid(format!("tensor {name:?} has rank {}", t.shape.len())));
        }
        Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
            .map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.metadata)?;
        w.write_all(&TENSOR_MAGIC)?;
        w.write_all(&TENSOR_VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u16).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&[t.shape.len() as u8])?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "header")?;
        if magic != TENSOR_MAGIC {
            return Err(Error::BadMagic {
                expected: TENSOR_MAGIC,
                found: magic,
            });
        }
        let version = read_u32(&mut r, "header")?;
        if version != TENSOR_VERSION {
            return Err(Error::VersionMismatch {
                expected: TENSOR_VERSION,
                found: version,
            });
        }
        let meta_len = read_u32(&mut r, "metadata length")? as usize;
        let mut meta = vec![0u8; meta_len];
        read_exact(&mut r, &mut meta, "metadata")?;
        let metadata: Value = serde_json::from_slice(&meta)?;
        let count = read_u32(&mut r, "tensor count")?;
        let mut tensors = Vec::with_capacity(count as usize);
        for i in 0..count {
            let what = format!("tensor {i}");
            let mut b2 = [0u8; 2];
            read_exact(&mut r, &mut b2, &what)?;
            let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
            read_exact(&mut r, &mut name, &what)?;
            let name = String::from_utf8(name).map_err(|e| Error::invalid(e.to_string()))?;
            let mut rank = [0u8; 1];
            read_exact(&mut r, &mut rank, &what)?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                let mut b8 = [0u8; 8];
                read_exact(&mut r, &mut b8, &what)?;
                shape.push(u64::from_le_bytes(b8) as usize);
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            read_exact(&mut r, &mut raw, &what)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.into_inner().map_err(|e| Error::Io(e.into_error()))?.sync_all()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
