//! Versioned binary container shared by model files and labeled datasets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BENV"
//! 4       1     version (1)
//! 5       4     u32 manifest length M
//! 9       M     UTF-8 JSON manifest
//! 9+M     P     tensor payload: contiguous f32 values, tensors in registry order
//! 9+M+P   4     CRC32 (IEEE) of bytes [0, 9+M+P)
//! ```
//!
//! The manifest is a JSON object with a `tensors` array of
//! `{"name", "shape", "offset"}` records, where `offset` is the byte offset of the
//! tensor inside the payload. Every other key belongs to the file kind.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BENV";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 9;
const CRC_LEN: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// A decoded container: kind-specific manifest fields plus the tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub meta: Map<String, Value>,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn new(meta: Map<String, Value>) -> Self {
        Container {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Manifest(format!("missing tensor `{name}`")))
    }

    /// Looks up a tensor and checks its shape.
    pub fn tensor_shaped(&self, name: &str, shape: &[usize]) -> Result<&[f32]> {
        let t = self.tensor(name)?;
        if t.shape != shape {
            return Err(Error::ShapeMismatch {
                expected: format!("{name} {shape:?}"),
                actual: format!("{:?}", t.shape),
            });
        }
        Ok(&t.data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut registry = Vec::with_capacity(self.tensors.len());
        let mut offset = 0usize;
        for t in &self.tensors {
            registry.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
            });
            offset += t.data.len() * 4;
        }
        let mut manifest = self.meta.clone();
        manifest.insert(
            "tensors".into(),
            serde_json::to_value(&registry).expect("registry serializes"),
        );
        let manifest = serde_json::to_vec(&Value::Object(manifest)).expect("manifest serializes");

        let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + offset + CRC_LEN);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Container> {
        let magic_len = bytes.len().min(MAGIC.len());
        if bytes[..magic_len] != MAGIC[..magic_len] {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let mlen = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        let payload_start = HEADER_LEN + mlen;
        if bytes.len() < payload_start {
            return Err(Error::Truncated(format!(
                "manifest declares {mlen} bytes, file ends first"
            )));
        }
        let manifest: Value = serde_json::from_slice(&bytes[HEADER_LEN..payload_start])
            .map_err(|e| Error::Manifest(e.to_string()))?;
        let Value::Object(mut meta) = manifest else {
            return Err(Error::Manifest("manifest is not a JSON object".into()));
        };
        let registry: Vec<TensorEntry> = match meta.remove("tensors") {
            Some(v) => serde_json::from_value(v).map_err(|e| Error::Manifest(e.to_string()))?,
            None => return Err(Error::Manifest("missing tensor registry".into())),
        };

        let mut expected_offset = 0usize;
        for entry in &registry {
            if entry.offset != expected_offset {
                return Err(Error::Manifest(format!(
                    "tensor `{}` at offset {} but payload is contiguous at {}",
                    entry.name, entry.offset, expected_offset
                )));
            }
            expected_offset += entry.len() * 4;
        }
        let payload_len = expected_offset;
        let total = payload_start + payload_len + CRC_LEN;
        if bytes.len() < total {
            return Err(Error::Truncated(format!(
                "expected {total} bytes, file has {}",
                bytes.len()
            )));
        }
        if bytes.len() > total {
            return Err(Error::Manifest(format!(
                "{} trailing bytes after checksum",
                bytes.len() - total
            )));
        }
        let body = &bytes[..total - CRC_LEN];
        let stored = u32::from_le_bytes(bytes[total - CRC_LEN..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }

        let payload = &bytes[payload_start..payload_start + payload_len];
        let tensors = registry
            .into_iter()
            .map(|e| {
                let raw = &payload[e.offset..e.offset + e.len() * 4];
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                Tensor {
                    name: e.name,
                    shape: e.shape,
                    data,
                }
            })
            .collect();
        Ok(Container { meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Container> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Container::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut meta = Map::new();
        meta.insert("kind".into(), Value::from("test"));
        let mut c = Container::new(meta);
        c.push("a", &[2, 3], vec![1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 7.0]);
        c.push("b", &[1], vec![42.0]);
        c
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.encode();
        assert_eq!(&bytes[..4], b"BENV");
        assert_eq!(bytes[4], 1);
        let back = Container::decode(&bytes).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn distinct_errors() {
        let bytes = sample().encode();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Container::decode(&bad), Err(Error::BadMagic)));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Container::decode(&bad),
            Err(Error::UnsupportedVersion(9))
        ));

        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(Container::decode(cut), Err(Error::Truncated(_))));
        assert!(matches!(Container::decode(&bytes[..6]), Err(Error::Truncated(_))));

        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 8] ^= 0x40;
        assert!(matches!(
            Container::decode(&bad),
            Err(Error::ChecksumMismatch { .. })
        ));
    }
}
