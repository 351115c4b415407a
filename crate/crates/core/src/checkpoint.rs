//! Model files: one line of JSON metadata followed by little-endian f32
//! parameter arrays.
//!
//! Binary layout after the header line: `u32` array count, then per array a
//! `u32` name length, the UTF-8 name, a `u32` rank, `u32` dimensions and the
//! values.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numcore::{ParamSet, Scalar, Tensor};

pub const FORMAT: &str = "codesum-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Extractor,
    Abstracter,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Extractor => "extractor",
            ModelKind::Abstracter => "abstracter",
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: ModelKind,
    hyperparameters: serde_json::Value,
    vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub hyperparameters: serde_json::Value,
    pub vocabulary: Vocabulary,
    pub params: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_params<H: Serialize, F: Scalar>(
        kind: ModelKind,
        hyperparameters: &H,
        vocabulary: Vocabulary,
        params: &ParamSet<F>,
    ) -> Result<Self> {
        Ok(Self {
            kind,
            hyperparameters: serde_json::to_value(hyperparameters)
                .map_err(|e| Error::Config(format!("cannot serialize hyperparameters: {e}")))?,
            vocabulary,
            params: params.iter().map(|p| (p.name.clone(), p.value.cast())).collect(),
        })
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::CorruptCheckpoint(format!(
                "expected an {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn hyperparameters<H: DeserializeOwned>(&self) -> Result<H> {
        serde_json::from_value(self.hyperparameters.clone())
            .map_err(|e| Error::CorruptCheckpoint(format!("bad hyperparameters: {e}")))
    }

    pub fn values<F: Scalar>(&self) -> Vec<(String, Tensor<F>)> {
        self.params.iter().map(|(n, t)| (n.clone(), t.cast())).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT.to_owned(),
            version: VERSION,
            kind: self.kind,
            hyperparameters: self.hyperparameters.clone(),
            vocabulary: self.vocabulary.tokens().to_vec(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        u32le(&mut out, self.params.len());
        for (name, t) in &self.params {
            u32le(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            u32le(&mut out, t.shape().len());
            for &d in t.shape() {
                u32le(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::CorruptCheckpoint("missing header line".into()))?;
        let raw: serde_json::Value = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| Error::CorruptCheckpoint(format!("header is not JSON: {e}")))?;
        if raw.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
            return Err(Error::CorruptCheckpoint("not a model checkpoint".into()));
        }
        let found = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CorruptCheckpoint("header has no version".into()))?;
        if found != u64::from(VERSION) {
            return Err(Error::Version {
                found: found as u32,
                expected: VERSION,
            });
        }
        let header: Header =
            serde_json::from_value(raw).map_err(|e| Error::CorruptCheckpoint(format!("bad header: {e}")))?;

        let mut r = Reader { bytes, pos: nl + 1 };
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::CorruptCheckpoint("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("parameter {name:?} is too large")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::CorruptCheckpoint("size overflow".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            kind: header.kind,
            hyperparameters: header.hyperparameters,
            vocabulary: Vocabulary::from_tokens(header.vocabulary)?,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let vocab = Vocabulary::from_tokens(vec!["get".into(), "é".into()]).unwrap();
        Checkpoint {
            kind: ModelKind::Extractor,
            hyperparameters: serde_json::json!({"hidden_dim": 4}),
            vocabulary: vocab,
            params: vec![
                ("a".into(), Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE]).unwrap()),
                ("b".into(), Tensor::new(vec![3], vec![0.0, -0.0, 7.0]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let bytes = sample().to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.vocabulary, sample().vocabulary);
    }

    #[test]
    fn truncation_and_version() {
        let bytes = sample().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() - 13, 5] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::CorruptCheckpoint(_))
            ));
        }
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = std::str::from_utf8(&bytes[..nl]).unwrap().replacen("\"version\":1", "\"version\":2", 1);
        let mut bumped = header.into_bytes();
        bumped.extend_from_slice(&bytes[nl..]);
        assert!(matches!(
            Checkpoint::from_bytes(&bumped),
            Err(Error::Version { found: 2, expected: 1 })
        ));
    }
}
