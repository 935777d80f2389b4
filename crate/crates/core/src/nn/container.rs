//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "UDNM"
//! version    u32
//! kind       u32 length + UTF-8
//! header     u64 length + UTF-8 JSON (vocabularies, hyperparameters)
//! count      u64
//! count × {  name u32 length + UTF-8, trainable u8,
//!            rank u32, rank × u64 dims, f64 data in row-major order }
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::graph::Tensor;
use super::params::ParamStore;

pub const MAGIC: &[u8; 4] = b"UDNM";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("expected a {expected} model, found {found}")]
    Kind { expected: String, found: String },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug)]
pub struct Container {
    pub kind: String,
    pub header: serde_json::Value,
    pub params: ParamStore,
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R, max: usize) -> Result<String, ContainerError> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n > max {
        return Err(ContainerError::Malformed(format!("string of {} bytes", n)));
    }
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| ContainerError::Malformed(e.to_string()))
}

impl Container {
    pub fn new(kind: &str, header: serde_json::Value, params: ParamStore) -> Self {
        Container {
            kind: kind.to_string(),
            header,
            params,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ContainerError> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        write_str(&mut w, &self.kind)?;
        let header = serde_json::to_vec(&self.header)?;
        w.write_u64::<LittleEndian>(header.len() as u64)?;
        w.write_all(&header)?;
        w.write_u64::<LittleEndian>(self.params.len() as u64)?;
        for id in self.params.ids() {
            write_str(&mut w, self.params.name(id))?;
            w.write_u8(self.params.is_trainable(id) as u8)?;
            let t = self.params.value(id);
            w.write_u32::<LittleEndian>(2)?;
            w.write_u64::<LittleEndian>(t.nrows() as u64)?;
            w.write_u64::<LittleEndian>(t.ncols() as u64)?;
            for &x in t.iter() {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ContainerError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(ContainerError::Version(version));
        }
        let kind = read_str(&mut r, 1 << 10)?;
        let hlen = r.read_u64::<LittleEndian>()? as usize;
        let mut header = vec![0; hlen];
        r.read_exact(&mut header)?;
        let header = serde_json::from_slice(&header)?;
        let count = r.read_u64::<LittleEndian>()?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = read_str(&mut r, 1 << 16)?;
            let trainable = r.read_u8()? != 0;
            let rank = r.read_u32::<LittleEndian>()?;
            if rank != 2 {
                return Err(ContainerError::Malformed(format!("tensor {} has rank {}", name, rank)));
            }
            let rows = r.read_u64::<LittleEndian>()? as usize;
            let cols = r.read_u64::<LittleEndian>()? as usize;
            let mut data = vec![0.0; rows * cols];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            let t = Tensor::from_shape_vec((rows, cols), data).map_err(|e| ContainerError::Malformed(e.to_string()))?;
            params.insert(&name, t, trainable);
        }
        Ok(Container { kind, header, params })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn checksum(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ContainerError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, ContainerError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), ContainerError> {
        if self.kind != kind {
            return Err(ContainerError::Kind {
                expected: kind.to_string(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_preserves_names_shapes_and_flags() {
        let mut p = ParamStore::new();
        p.insert("a.w", array![[1.0, -2.5], [3.0, 0.125], [1e-300, f64::MAX]], true);
        p.insert("frozen", array![[7.0]], false);
        let c = Container::new("test", serde_json::json!({"dim": 3}), p);
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"UDNM");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        let back = Container::read_from(&bytes[..]).unwrap();
        assert_eq!(back.kind, "test");
        assert_eq!(back.header["dim"], 3);
        let id = back.params.id("a.w").unwrap();
        assert_eq!(back.params.value(id), c.params.value(c.params.id("a.w").unwrap()));
        assert!(!back.params.is_trainable(back.params.id("frozen").unwrap()));
        assert_eq!(back.checksum(), c.checksum());
        assert!(back.expect_kind("other").is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Container::read_from(&b"NOPE...."[..]), Err(ContainerError::BadMagic)));
    }
}
