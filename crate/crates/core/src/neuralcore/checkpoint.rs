//! Binary checkpoint format: a versioned header, a JSON metadata block
//! (model config plus vocab hashes), then named parameter blocks as raw
//! little-endian f64.

use super::nn::ModelConfig;
use super::store::ParameterStore;
use super::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"S2A\x01";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("metadata error: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("vocabulary hash mismatch for `{key}`: checkpoint has {stored}, current is {actual}")]
    VocabHashMismatch { key: String, stored: String, actual: String },
    #[error("parameter set mismatch: {0}")]
    ParamMismatch(String),
}

/// Everything needed to rebuild the owning model around the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Which model this is ("sum" or "apm").
    pub kind: String,
    pub config: ModelConfig,
    /// Free-form pinned strings: vocab hashes, view, coupling flags.
    pub extra: BTreeMap<String, String>,
}

impl CheckpointMeta {
    /// Compares a stored hash entry against the current value.
    pub fn verify_hash(&self, key: &str, actual: &str) -> Result<(), CheckpointError> {
        match self.extra.get(key) {
            Some(stored) if stored == actual => Ok(()),
            Some(stored) => Err(CheckpointError::VocabHashMismatch {
                key: key.to_string(),
                stored: stored.clone(),
                actual: actual.to_string(),
            }),
            None => Err(CheckpointError::Corrupt(format!("missing hash entry `{key}`"))),
        }
    }
}

pub fn save(
    path: &Path,
    meta: &CheckpointMeta,
    store: &ParameterStore,
) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());

    let meta_json = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_json);

    let ids = store.ids();
    buf.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for id in ids {
        let name = store.name(id).as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        let value = store.value(id);
        buf.extend_from_slice(&(value.shape().len() as u32).to_le_bytes());
        for d in value.shape() {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.data.len() {
            return Err(CheckpointError::Corrupt("unexpected end of file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load(path: &Path) -> Result<(CheckpointMeta, Vec<(String, Tensor)>), CheckpointError> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut r = Reader { data: &data, pos: 0 };

    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let meta_len = r.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;

    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("non-utf8 parameter name".into()))?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = r.take(n * 8)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, values)
            .map_err(|e| CheckpointError::Corrupt(format!("parameter {name}: {e}")))?;
        params.push((name, tensor));
    }
    Ok((meta, params))
}

/// Copies loaded tensors into an already-constructed store; the name sets
/// must match exactly.
pub fn restore_into(
    store: &mut ParameterStore,
    params: Vec<(String, Tensor)>,
) -> Result<(), CheckpointError> {
    if params.len() != store.len() {
        return Err(CheckpointError::ParamMismatch(format!(
            "checkpoint has {} parameters, model has {}",
            params.len(),
            store.len()
        )));
    }
    for (name, tensor) in params {
        let id = store
            .id_of(&name)
            .ok_or_else(|| CheckpointError::ParamMismatch(format!("unknown parameter {name}")))?;
        if store.value(id).shape() != tensor.shape() {
            return Err(CheckpointError::ParamMismatch(format!(
                "parameter {name} shape {:?} vs {:?}",
                tensor.shape(),
                store.value(id).shape()
            )));
        }
        store.set_value(id, tensor);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");

        let mut store = ParameterStore::new();
        store.register("a.w", Tensor::new(vec![2, 3], vec![1.5, -2.0, 0.25, 3.0, 4.0, -0.125]).unwrap());
        store.register("a.b", Tensor::new(vec![1, 3], vec![0.0, 1.0, 2.0]).unwrap());

        let mut extra = BTreeMap::new();
        extra.insert("vocab_hash".to_string(), "abc123".to_string());
        let meta = CheckpointMeta { kind: "sum".into(), config: ModelConfig::default(), extra };

        save(&path, &meta, &store).unwrap();
        let (loaded_meta, params) = load(&path).unwrap();
        assert_eq!(loaded_meta, meta);

        let mut fresh = ParameterStore::new();
        fresh.register("a.w", Tensor::zeros(vec![2, 3]));
        fresh.register("a.b", Tensor::zeros(vec![1, 3]));
        restore_into(&mut fresh, params).unwrap();
        assert_eq!(fresh.content_hash(), store.content_hash());
    }

    #[test]
    fn refuses_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn hash_verification() {
        let mut extra = BTreeMap::new();
        extra.insert("vocab_hash".to_string(), "abc".to_string());
        let meta = CheckpointMeta { kind: "sum".into(), config: ModelConfig::default(), extra };
        assert!(meta.verify_hash("vocab_hash", "abc").is_ok());
        assert!(matches!(
            meta.verify_hash("vocab_hash", "def"),
            Err(CheckpointError::VocabHashMismatch { .. })
        ));
    }
}
