//! Versioned binary container of named f64 tensors.
//!
//! Layout: the 8-byte magic `AOITCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header, then every tensor's
//! values as little-endian `f64` in header order. Values never pass through
//! text, so a save/load round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use aoitraj_core::nn::{Param, Parameters};
use aoitraj_core::predictor::{FeatureSet, Normalizer, RAW_COLUMNS};

pub const MAGIC: &[u8; 8] = b"AOITCKPT";
pub const FORMAT_VERSION: u32 = 1;

const NORM_MEAN: &str = "normalizer.mean";
const NORM_STD: &str = "normalizer.std";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}, expected {FORMAT_VERSION}")]
    Version(u32),
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("truncated tensor data")]
    Truncated,
    #[error("checkpoint holds a {found} model, expected {expected}")]
    Kind { expected: String, found: String },
    #[error("tensor {0} missing from checkpoint")]
    Missing(String),
    #[error("tensor {name}: shape {found:?} in checkpoint, model expects {expected:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint has tensors the model lacks: {0:?}")]
    Unused(Vec<String>),
    #[error("unknown feature set {0:?}")]
    Features(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    features: String,
    hidden: usize,
    tensors: Vec<TensorEntry>,
}

/// A model's parameters with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub features: FeatureSet,
    pub hidden: usize,
    pub tensors: Vec<(TensorEntry, Vec<f64>)>,
}

impl Checkpoint {
    pub fn from_model<M: Parameters>(
        kind: &str,
        features: FeatureSet,
        hidden: usize,
        norm: &Normalizer,
        model: &M,
    ) -> Self {
        let mut tensors = vec![
            (TensorEntry { name: NORM_MEAN.into(), shape: vec![RAW_COLUMNS] }, norm.mean.to_vec()),
            (TensorEntry { name: NORM_STD.into(), shape: vec![RAW_COLUMNS] }, norm.std.to_vec()),
        ];
        model.visit("", &mut |name, p: &Param| {
            tensors.push((TensorEntry { name, shape: p.value.shape().to_vec() }, p.value.data().to_vec()));
        });
        Checkpoint { kind: kind.into(), features, hidden, tensors }
    }

    fn tensor(&self, name: &str) -> Option<&(TensorEntry, Vec<f64>)> {
        self.tensors.iter().find(|(e, _)| e.name == name)
    }

    pub fn normalizer(&self) -> Result<Normalizer> {
        let get = |n: &str| -> Result<[f64; RAW_COLUMNS]> {
            let (e, v) = self.tensor(n).ok_or_else(|| CheckpointError::Missing(n.into()))?;
            v.as_slice().try_into().map_err(|_| CheckpointError::Shape {
                name: n.into(),
                expected: vec![RAW_COLUMNS],
                found: e.shape.clone(),
            })
        };
        Ok(Normalizer { mean: get(NORM_MEAN)?, std: get(NORM_STD)? })
    }

    /// Copies every tensor into `model`, whose architecture must match
    /// exactly.
    pub fn load_into<M: Parameters>(&self, kind: &str, model: &mut M) -> Result<()> {
        if self.kind != kind {
            return Err(CheckpointError::Kind { expected: kind.into(), found: self.kind.clone() });
        }
        let mut err = None;
        let mut used = vec![NORM_MEAN.to_string(), NORM_STD.to_string()];
        model.visit_mut("", &mut |name, p| {
            if err.is_some() {
                return;
            }
            match self.tensor(&name) {
                None => err = Some(CheckpointError::Missing(name)),
                Some((e, _)) if e.shape != p.value.shape() => {
                    err = Some(CheckpointError::Shape {
                        name,
                        expected: p.value.shape().to_vec(),
                        found: e.shape.clone(),
                    })
                }
                Some((_, v)) => {
                    p.value.data_mut().copy_from_slice(v);
                    p.grad.fill(0.0);
                    used.push(name);
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let unused: Vec<String> =
            self.tensors.iter().map(|(e, _)| e.name.clone()).filter(|n| !used.contains(n)).collect();
        if !unused.is_empty() {
            return Err(CheckpointError::Unused(unused));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            features: self.features.name().into(),
            hidden: self.hidden,
            tensors: self.tensors.iter().map(|(e, _)| e.clone()).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, v) in &self.tensors {
            let mut buf = Vec::with_capacity(v.len() * 8);
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut v4 = [0u8; 4];
        r.read_exact(&mut v4).map_err(|_| CheckpointError::Truncated)?;
        let version = u32::from_le_bytes(v4);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut l8 = [0u8; 8];
        r.read_exact(&mut l8).map_err(|_| CheckpointError::Truncated)?;
        let len = u64::from_le_bytes(l8) as usize;
        if r.len() < len {
            return Err(CheckpointError::Truncated);
        }
        let header: Header = serde_json::from_slice(&r[..len])?;
        r = &r[len..];
        let features = FeatureSet::from_name(&header.features)
            .ok_or_else(|| CheckpointError::Features(header.features.clone()))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if r.len() < n * 8 {
                return Err(CheckpointError::Truncated);
            }
            let v = r[..n * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            r = &r[n * 8..];
            tensors.push((e, v));
        }
        if !r.is_empty() {
            return Err(CheckpointError::Truncated);
        }
        Ok(Checkpoint { kind: header.kind, features, hidden: header.hidden, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aoitraj_core::predictor::{DiModel, MtModel};

    fn norm() -> Normalizer {
        let mut n = Normalizer::identity();
        n.mean[3] = 0.1 + 0.2;
        n.std[7] = 1.0 / 3.0;
        n
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = aoitraj_core::rng::stream(1, 0);
        let m = MtModel::new(FeatureSet::SEC, 6, &mut rng);
        let c = Checkpoint::from_model("mt", FeatureSet::SEC, 6, &norm(), &m);
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let mut m2 = MtModel::new(FeatureSet::SEC, 6, &mut aoitraj_core::rng::stream(2, 0));
        back.load_into("mt", &mut m2).unwrap();
        let bits = |m: &MtModel| {
            let mut v = Vec::new();
            m.visit("", &mut |_, p| v.extend(p.value.data().iter().map(|x| x.to_bits())));
            v
        };
        assert_eq!(bits(&m), bits(&m2));
        let n = back.normalizer().unwrap();
        assert_eq!(n.mean.map(f64::to_bits), norm().mean.map(f64::to_bits));
        assert_eq!(n.std.map(f64::to_bits), norm().std.map(f64::to_bits));
    }

    #[test]
    fn rejects_corruption_and_mismatch() {
        let mut rng = aoitraj_core::rng::stream(1, 0);
        let m = DiModel::new(FeatureSet::S, 4, &mut rng);
        let c = Checkpoint::from_model("di", FeatureSet::S, 4, &norm(), &m);
        let bytes = c.to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic)));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(CheckpointError::Version(2))));
        let mut other = DiModel::new(FeatureSet::S, 5, &mut rng);
        assert!(matches!(c.load_into("di", &mut other), Err(CheckpointError::Shape { .. })));
        assert!(matches!(c.load_into("mt", &mut other), Err(CheckpointError::Kind { .. })));
        let mut ctx = DiModel::new(FeatureSet::SEC, 4, &mut rng);
        assert!(c.load_into("di", &mut ctx).is_err());
    }
}
