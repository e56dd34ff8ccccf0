//! Directory-based tensor storage: raw little-endian payloads plus a TOML manifest.
//!
//! ```text
//! <dir>/manifest.toml   # [[tensor]] name, dtype, shape, file, offset
//! <dir>/tensors.bin     # concatenated payloads
//! ```
//!
//! The same layout is used for frozen encoder weights, checkpoints, knowledge
//! vectors, video clips (`u8`) and exported features.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
const DATA_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlobDType {
    F32,
    U8,
}

impl BlobDType {
    fn size(self) -> usize {
        match self {
            BlobDType::F32 => 4,
            BlobDType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: BlobDType,
    pub shape: Vec<usize>,
    pub file: String,
    pub offset: u64,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    #[serde(default, rename = "tensor")]
    pub tensors: Vec<TensorEntry>,
}

pub struct BlobWriter {
    dir: PathBuf,
    data: fs::File,
    offset: u64,
    manifest: Manifest,
}

impl BlobWriter {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let data_path = dir.join(DATA_FILE);
        let data = fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        Ok(Self {
            dir,
            data,
            offset: 0,
            manifest: Manifest::default(),
        })
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.manifest.meta.insert(key.to_string(), value.to_string());
    }

    fn push(&mut self, name: &str, dtype: BlobDType, shape: &[usize], bytes: &[u8]) -> Result<()> {
        if self.manifest.tensors.iter().any(|t| t.name == name) {
            return Err(Error::Invalid(format!("duplicate tensor name `{name}`")));
        }
        let numel: usize = shape.iter().product();
        if numel * dtype.size() != bytes.len() {
            return Err(Error::shape(name, numel * dtype.size(), bytes.len()));
        }
        self.data
            .write_all(bytes)
            .map_err(|e| Error::io(self.dir.join(DATA_FILE), e))?;
        self.manifest.tensors.push(TensorEntry {
            name: name.to_string(),
            dtype,
            shape: shape.to_vec(),
            file: DATA_FILE.to_string(),
            offset: self.offset,
        });
        self.offset += bytes.len() as u64;
        Ok(())
    }

    pub fn add_f32(&mut self, name: &str, shape: &[usize], values: &[f32]) -> Result<()> {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.push(name, BlobDType::F32, shape, &bytes)
    }

    pub fn add_u8(&mut self, name: &str, shape: &[usize], values: &[u8]) -> Result<()> {
        self.push(name, BlobDType::U8, shape, values)
    }

    /// Stores any float tensor as `f32`.
    pub fn add_tensor(&mut self, name: &str, t: &Tensor) -> Result<()> {
        let shape = t.dims().to_vec();
        let values = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        self.add_f32(name, &shape, &values)
    }

    pub fn finish(mut self) -> Result<()> {
        self.data
            .flush()
            .map_err(|e| Error::io(self.dir.join(DATA_FILE), e))?;
        let text = toml::to_string(&self.manifest)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub struct BlobReader {
    dir: PathBuf,
    manifest: Manifest,
}

impl BlobReader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(Self { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.manifest.meta.get(key).map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.manifest.tensors.iter().any(|t| t.name == name)
    }

    pub fn entry(&self, name: &str) -> Result<&TensorEntry> {
        self.manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "missing tensor `{name}` in {}",
                    self.dir.join(MANIFEST_FILE).display()
                ))
            })
    }

    fn raw(&self, entry: &TensorEntry) -> Result<Vec<u8>> {
        let path = self.dir.join(&entry.file);
        let mut f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        f.seek(SeekFrom::Start(entry.offset))
            .map_err(|e| Error::io(&path, e))?;
        let mut buf = vec![0u8; entry.numel() * entry.dtype.size()];
        f.read_exact(&mut buf).map_err(|e| Error::io(&path, e))?;
        Ok(buf)
    }

    pub fn f32(&self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        let entry = self.entry(name)?;
        if entry.dtype != BlobDType::F32 {
            return Err(Error::Invalid(format!("tensor `{name}` is not f32")));
        }
        let raw = self.raw(entry)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok((entry.shape.clone(), values))
    }

    pub fn u8(&self, name: &str) -> Result<(Vec<usize>, Vec<u8>)> {
        let entry = self.entry(name)?;
        if entry.dtype != BlobDType::U8 {
            return Err(Error::Invalid(format!("tensor `{name}` is not u8")));
        }
        Ok((entry.shape.clone(), self.raw(entry)?))
    }

    /// Loads a float tensor, checking its shape when `expected` is given.
    pub fn tensor(
        &self,
        name: &str,
        expected: Option<&[usize]>,
        dtype: DType,
        device: &Device,
    ) -> Result<Tensor> {
        let (shape, values) = self.f32(name)?;
        if let Some(expected) = expected {
            if expected != shape.as_slice() {
                return Err(Error::shape(
                    name,
                    format!("{expected:?}"),
                    format!("{shape:?}"),
                ));
            }
        }
        Ok(Tensor::from_vec(values, shape, device)?.to_dtype(dtype)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BlobWriter::create(dir.path()).unwrap();
        w.meta("kind", "test");
        w.add_f32("a", &[2, 2], &[1.0, -2.0, 3.5, 0.25]).unwrap();
        w.add_u8("b", &[3], &[7, 8, 9]).unwrap();
        w.finish().unwrap();

        let r = BlobReader::open(dir.path()).unwrap();
        assert_eq!(r.meta("kind"), Some("test"));
        assert_eq!(r.f32("a").unwrap(), (vec![2, 2], vec![1.0, -2.0, 3.5, 0.25]));
        assert_eq!(r.u8("b").unwrap(), (vec![3], vec![7, 8, 9]));
        assert!(r.f32("b").is_err());
        assert!(r.f32("missing").is_err());
        let t = r.tensor("a", Some(&[2, 2]), DType::F64, &Device::Cpu).unwrap();
        assert_eq!(t.dtype(), DType::F64);
        assert!(r.tensor("a", Some(&[4]), DType::F32, &Device::Cpu).is_err());
    }

    #[test]
    fn size_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BlobWriter::create(dir.path()).unwrap();
        assert!(w.add_f32("a", &[3], &[1.0]).is_err());
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(BlobReader::open(dir.path()), Err(Error::Io { .. })));
    }
}
