//! Checkpoint file.
//!
//! ```text
//! magic "TCNC" | u32 version | u32 n | n bytes config JSON | u32 tensors
//! per tensor: u16 name length | name | u8 ndim | u32 dims… | f64 values…
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TCNC";
pub const CHECKPOINT_VERSION: u32 = 1;

fn encode<T: Scalar>(model: &Model<T>) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (spec, p) in model.specs().iter().zip(model.params()) {
        out.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.push(p.ndim() as u8);
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(Error::Truncated { expected: self.pos.saturating_add(n), actual: self.bytes.len() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

fn decode<T: Scalar>(bytes: &[u8]) -> Result<Model<T>> {
    if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found: bytes[..bytes.len().min(4)].to_vec() });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(n)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let count = r.u32()? as usize;
    let reference = Model::<T>::new(config.clone(), 0)?;
    if count != reference.specs().len() {
        return Err(Error::Checkpoint(format!("{count} tensors, config needs {}", reference.specs().len())));
    }
    let mut params = Vec::with_capacity(count);
    for spec in reference.specs() {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if name != spec.name {
            return Err(Error::Checkpoint(format!("found tensor {name:?} where {:?} was expected", spec.name)));
        }
        let ndim = r.take(1)?[0] as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != spec.shape {
            return Err(Error::Checkpoint(format!("{name} has shape {shape:?}, expected {:?}", spec.shape)));
        }
        let numel: usize = shape.iter().product();
        let data = r
            .take(numel * 8)?
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        params.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Model::from_params(config, params)
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &Model<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

/// Load a checkpoint. With `expected`, the stored config must match it.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Model<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = decode::<T>(&bytes)?;
    if let Some(cfg) = expected {
        if cfg != model.config() {
            return Err(Error::Checkpoint(format!(
                "config mismatch: checkpoint has {:?}, caller expects {:?}",
                model.config(),
                cfg
            )));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig { input_features: 3, kernel: 2, n_classes: 4, ..Default::default() }.with_filters(vec![5, 5])
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = Model::<f64>::new(cfg(), 17).unwrap();
        save_checkpoint(&path, &model).unwrap();
        let back: Model<f64> = load_checkpoint(&path, Some(&cfg())).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_mismatch_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = Model::<f64>::new(cfg(), 17).unwrap();
        save_checkpoint(&path, &model).unwrap();
        let other = ModelConfig { kernel: 3, ..cfg() };
        assert!(matches!(load_checkpoint::<f64>(&path, Some(&other)), Err(Error::Checkpoint(_))));

        let bytes = encode(&model).unwrap();
        assert!(matches!(decode::<f64>(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode::<f64>(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode::<f64>(&bad), Err(Error::Checkpoint(_))));
        let mut long = bytes;
        long.push(0);
        assert!(decode::<f64>(&long).is_err());
    }
}
