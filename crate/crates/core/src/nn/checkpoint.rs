use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::matrix::{DenseMatrix, Scalar};
use crate::nn::store::ParamStore;

/// Single-file model container: magic, manifest length, JSON manifest, then
/// raw little-endian float payloads in manifest order. Round-trips byte-exactly.
const MAGIC: &[u8; 8] = b"DQCKPT01";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    dtype: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    #[serde(default)]
    frozen: bool,
}

/// Write parameter values (not optimizer state) plus caller metadata.
pub fn save_store<T: Scalar, W: Write>(
    writer: &mut W,
    store: &ParamStore<T>,
    meta: &serde_json::Value,
) -> Result<()> {
    let tensors: Vec<TensorEntry> = store
        .iter()
        .map(|(name, p)| TensorEntry {
            name: name.clone(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            frozen: p.frozen,
        })
        .collect();
    let manifest = Manifest {
        format_version: 1,
        dtype: T::DTYPE.to_string(),
        meta: meta.clone(),
        tensors,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    writer.write_all(MAGIC)?;
    writer.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    writer.write_all(&manifest_bytes)?;
    for (_, p) in store.iter() {
        for v in p.value.as_slice() {
            writer.write_all(&v.to_le_bytes8())?;
        }
    }
    Ok(())
}

/// Read a container back; returns a fresh store (optimizer state reset) and
/// the stored metadata.
pub fn load_store<T: Scalar, R: Read>(reader: &mut R) -> Result<(ParamStore<T>, serde_json::Value)> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Schema("bad checkpoint magic".into()));
    }
    let mut len_bytes = [0u8; 8];
    reader.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    reader.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.format_version != 1 {
        return Err(Error::Schema(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }
    if manifest.dtype != T::DTYPE {
        return Err(Error::Schema(format!(
            "checkpoint dtype is {}, expected {}",
            manifest.dtype,
            T::DTYPE
        )));
    }
    let width = T::byte_width();
    let mut store = ParamStore::new();
    for entry in &manifest.tensors {
        let count = entry.rows * entry.cols;
        let mut raw = vec![0u8; count * width];
        reader.read_exact(&mut raw)?;
        let data: Vec<T> = raw.chunks_exact(width).map(T::from_le_bytes8).collect();
        let tensor = DenseMatrix::from_vec(entry.rows, entry.cols, data)?;
        tensor.ensure_finite(&entry.name)?;
        store.insert(&entry.name, tensor);
        if entry.frozen {
            store.freeze(&entry.name)?;
        }
    }
    Ok((store, manifest.meta))
}

pub fn save_store_to_path<T: Scalar>(
    path: &Path,
    store: &ParamStore<T>,
    meta: &serde_json::Value,
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    save_store(&mut writer, store, meta)?;
    writer.flush()?;
    Ok(())
}

pub fn load_store_from_path<T: Scalar>(path: &Path) -> Result<(ParamStore<T>, serde_json::Value)> {
    let mut reader = BufReader::new(File::open(path)?);
    load_store(&mut reader)
}
