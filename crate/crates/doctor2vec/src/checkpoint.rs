//! Binary weight checkpoints: a magic tag, a JSON header carrying the
//! configuration hash and a metric snapshot, then named parameter
//! blocks as raw little-endian doubles. Weights restore bitwise; loads
//! verify every name and shape before touching any parameter.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use numcore::ParamSet64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{D2vError, Result};

const MAGIC: &[u8; 8] = b"D2VCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    /// Which model family wrote the file.
    pub model_kind: String,
    /// Hash of the full run configuration, for pairing weights with
    /// the settings that produced them.
    pub config_hash: String,
    /// Snapshot of selection metrics at save time.
    pub metrics: BTreeMap<String, f64>,
}

/// Sixteen hex characters of SHA-256 over the given text.
pub fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn bad(detail: impl Into<String>) -> D2vError {
    D2vError::Checkpoint(detail.into())
}

/// Writes header and all parameters to a temporary file, then renames
/// it over the target so a crash cannot leave a half-written file.
pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, params: &ParamSet64) -> Result<()> {
    let tmp = path.with_extension("ckpt-partial");
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        out.write_all(MAGIC)?;
        let header_json = serde_json::to_vec(header)?;
        out.write_all(&(header_json.len() as u32).to_le_bytes())?;
        out.write_all(&header_json)?;
        out.write_all(&(params.len() as u32).to_le_bytes())?;
        for (name, tensor) in params.iter() {
            let name_bytes = name.as_bytes();
            out.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
            out.write_all(name_bytes)?;
            let dims = tensor.dims().to_vec();
            out.write_all(&(dims.len() as u32).to_le_bytes())?;
            for d in &dims {
                out.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in tensor.data().iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| bad("file truncated"))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| bad("file truncated"))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_header(r: &mut impl Read) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("file too short for magic"))?;
    if &magic != MAGIC {
        return Err(bad("magic mismatch; not a checkpoint file"));
    }
    let header_len = read_u32(r)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(|_| bad("header truncated"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| bad(format!("header not valid JSON: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "format version {} unsupported (expected {})",
            header.format_version, CHECKPOINT_VERSION
        )));
    }
    Ok(header)
}

/// Header without the weights, for inspection.
pub fn peek_checkpoint(path: &Path) -> Result<CheckpointHeader> {
    let mut r = BufReader::new(fs::File::open(path)?);
    read_header(&mut r)
}

/// Reads the file, verifies the model kind and that the blocks exactly
/// cover `params` with matching shapes, then applies every tensor.
pub fn load_checkpoint(
    path: &Path,
    expect_kind: &str,
    params: &ParamSet64,
) -> Result<CheckpointHeader> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let header = read_header(&mut r)?;
    if header.model_kind != expect_kind {
        return Err(bad(format!(
            "model kind {:?} does not match expected {:?}",
            header.model_kind, expect_kind
        )));
    }
    let n_blocks = read_u32(r.by_ref())? as usize;
    let mut blocks: BTreeMap<String, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for _ in 0..n_blocks {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|_| bad("block name truncated"))?;
        let name = String::from_utf8(name_bytes).map_err(|_| bad("block name not UTF-8"))?;
        let n_dims = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            dims.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = dims.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf).map_err(|_| bad(format!("data truncated in block {name}")))?;
            data.push(f64::from_le_bytes(buf));
        }
        if blocks.insert(name.clone(), (dims, data)).is_some() {
            return Err(bad(format!("duplicate block {name}")));
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(D2vError::Io)? != 0 {
        return Err(bad("trailing bytes after final block"));
    }

    if blocks.len() != params.len() {
        return Err(bad(format!(
            "{} blocks for {} parameters",
            blocks.len(),
            params.len()
        )));
    }
    let mut snapshot = Vec::with_capacity(params.len());
    for (name, tensor) in params.iter() {
        let (dims, data) = blocks
            .get(name)
            .ok_or_else(|| bad(format!("missing block {name}")))?;
        if dims != &tensor.dims().to_vec() {
            return Err(bad(format!(
                "block {name} has shape {:?}, parameter expects {:?}",
                dims,
                tensor.dims()
            )));
        }
        snapshot.push((name.to_string(), data.clone()));
    }
    params.restore(&snapshot)?;
    Ok(header)
}
