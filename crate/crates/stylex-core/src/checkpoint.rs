//! Flat binary container for named parameter arrays.
//!
//! Layout: magic bytes `STYX`, a little-endian `u32` version, then one
//! record per array: name length (`u32`), name bytes, rank (`u32`), extents
//! (`u64` each), and the raw little-endian `f32` data. Records run to end of
//! file. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::CheckpointError;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"STYX";
pub const VERSION: u32 = 1;

/// An ordered set of named arrays (weights, running statistics, metadata).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    entries: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.get(name)
            .ok_or_else(|| CheckpointError::MissingEntry(name.to_string()))
    }

    /// Scalar metadata stored as a single-element array.
    pub fn require_scalar(&self, name: &str) -> Result<f32, CheckpointError> {
        let t = self.require(name)?;
        if t.numel() != 1 {
            return Err(CheckpointError::EntryShape {
                name: name.to_string(),
                got: t.shape().to_vec(),
                want: vec![1],
            });
        }
        Ok(t.data()[0])
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), CheckpointError> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for (name, tensor) in &self.entries {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
            for &e in tensor.shape() {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| CheckpointError::Truncated("magic"))?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = read_u32(r).ok_or(CheckpointError::Truncated("version"))?;
        if version != VERSION {
            return Err(CheckpointError::BadVersion(version));
        }
        let mut entries = Vec::new();
        loop {
            let name_len = match read_u32(r) {
                Some(v) => v as usize,
                None => break, // clean EOF between records
            };
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)
                .map_err(|_| CheckpointError::Truncated("name"))?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| CheckpointError::Truncated("name utf-8"))?;
            let rank = read_u32(r).ok_or(CheckpointError::Truncated("rank"))? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(r).ok_or(CheckpointError::Truncated("extent"))? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = vec![0.0f32; numel];
            let mut buf = [0u8; 4];
            for v in data.iter_mut() {
                r.read_exact(&mut buf).map_err(|_| CheckpointError::ShortData {
                    name: name.clone(),
                    expected: numel,
                })?;
                *v = f32::from_le_bytes(buf);
            }
            let tensor = Tensor::new(shape, data).map_err(|_| CheckpointError::ShortData {
                name: name.clone(),
                expected: numel,
            })?;
            entries.push((name, tensor));
        }
        Ok(Self { entries })
    }

    /// Write atomically: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("ckpt")
        ));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_u32(r: &mut impl Read) -> Option<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).ok()?;
    Some(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Option<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).ok()?;
    Some(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut c = Container::new();
        c.insert(
            "encoder.stem.weight",
            Tensor::new(vec![2, 1, 3, 3], (0..18).map(|v| v as f32 * 0.1 - 0.7).collect())
                .unwrap(),
        );
        c.insert("meta.epoch", Tensor::scalar(7.0));
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = Container::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(c, back);
        // Bit-exact: re-serialized bytes are identical.
        let mut buf2 = Vec::new();
        back.write_to(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut buf = Vec::new();
        Container::new().write_to(&mut buf).unwrap();
        buf[0] = b'X';
        let err = Container::read_from(&mut buf.as_slice()).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic(_)));
    }

    #[test]
    fn bad_version_is_rejected() {
        let mut buf = Vec::new();
        Container::new().write_to(&mut buf).unwrap();
        buf[4] = 99;
        let err = Container::read_from(&mut buf.as_slice()).unwrap_err();
        assert!(matches!(err, CheckpointError::BadVersion(_)));
    }

    #[test]
    fn truncated_data_is_rejected() {
        let mut c = Container::new();
        c.insert("w", Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        let err = Container::read_from(&mut buf.as_slice()).unwrap_err();
        assert!(matches!(err, CheckpointError::ShortData { .. }));
    }
}
