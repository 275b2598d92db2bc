//! `CSP1` container for preprocessed samples.
//!
//! Magic `CSP1`, little-endian `u16` dims `(pairs, time, subcarriers)`, then
//! little-endian `f64` values ordered pair-major, time next, subcarrier
//! innermost. The label lives in the dataset manifest.

use std::fs;
use std::path::{Path, PathBuf};

use super::PreprocessedSample;
use crate::csi::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CSP_MAGIC: [u8; 4] = *b"CSP1";
const HEADER_LEN: usize = 10;

pub type Dataset<T> = Vec<PreprocessedSample<T>>;

pub fn encode_sample<T: Scalar>(data: &Tensor<T>) -> Result<Vec<u8>> {
    if data.ndim() != 3 {
        return Err(Error::shape("encode_sample", format!("expected 3-D, got {:?}", data.shape())));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * data.len());
    out.extend_from_slice(&CSP_MAGIC);
    for (name, v) in [("pairs", data.dim(0)), ("time", data.dim(1)), ("subcarriers", data.dim(2))] {
        let v = u16::try_from(v).map_err(|_| Error::DimensionOverflow { name, value: v })?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in data.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    Ok(out)
}

pub fn decode_sample<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.len() < 4 || bytes[..4] != CSP_MAGIC {
        return Err(Error::BadMagic { expected: CSP_MAGIC, found: bytes[..bytes.len().min(4)].to_vec() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let field = |i: usize| usize::from(u16::from_le_bytes([bytes[4 + 2 * i], bytes[5 + 2 * i]]));
    let dims = [field(0), field(1), field(2)];
    for (name, v) in ["pairs", "time", "subcarriers"].into_iter().zip(dims) {
        if v == 0 {
            return Err(Error::ZeroDimension(name));
        }
    }
    let n: usize = dims.iter().product();
    let expected = HEADER_LEN + 8 * n;
    if bytes.len() != expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Tensor::new(dims.to_vec(), data)
}

pub fn save_sample<T: Scalar>(path: impl AsRef<Path>, data: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_sample(data)?).map_err(|e| Error::io(path, e))
}

pub fn load_sample<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sample(&bytes)
}

/// Load every `CSP1` file listed in a manifest.
pub fn load_dataset<T: Scalar>(manifest_path: impl AsRef<Path>) -> Result<(DatasetManifest, Dataset<T>)> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let samples = manifest
        .entries()
        .iter()
        .map(|e| PreprocessedSample::new(load_sample(DatasetManifest::resolve(base, e))?, e.label))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Write samples as `sample#####.csp` under `dir` plus `dir/manifest.csv`.
/// `ids` supplies `(pair_id, trial_id)` per sample.
pub fn save_dataset<T: Scalar>(
    dir: impl AsRef<Path>,
    samples: &[PreprocessedSample<T>],
    ids: impl Fn(usize) -> (u32, u32),
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = PathBuf::from(format!("sample{i:05}.csp"));
        save_sample(dir.join(&name), &s.data)?;
        let (pair_id, trial_id) = ids(i);
        entries.push(ManifestEntry { path: name, label: s.label, pair_id, trial_id });
    }
    let manifest = dir.join("manifest.csv");
    DatasetManifest::new(entries)?.save(&manifest)?;
    Ok(manifest)
}

/// Label histogram, indexed by class id.
pub fn class_counts<T>(samples: &[PreprocessedSample<T>]) -> Vec<usize> {
    let mut counts = vec![0; crate::csi::NUM_CLASSES];
    for s in samples {
        counts[s.label.id()] += 1;
    }
    counts
}
