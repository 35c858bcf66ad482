//! Repo-wide weight file format: magic bytes `RLTG1\0`, a length-prefixed
//! JSON manifest (tensor name, shape, dtype, byte offset into the payload),
//! then raw little-endian f32 payloads. Round-trips are bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkit::Matrix;

pub const MAGIC: &[u8; 6] = b"RLTG1\0";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: [usize; 2],
    dtype: String,
    offset: usize,
}

/// Writes named tensors in order. Offsets are relative to the start of the
/// payload section.
pub fn save(path: &Path, tensors: &[(String, &Matrix)]) -> Result<()> {
    let mut manifest = Vec::with_capacity(tensors.len());
    let mut payload = Vec::new();
    for (name, t) in tensors {
        manifest.push(ManifestEntry {
            name: name.clone(),
            shape: [t.rows(), t.cols()],
            dtype: "f32".to_string(),
            offset: payload.len(),
        });
        payload.extend_from_slice(&t.to_le_bytes());
    }
    let manifest_bytes = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Weights(format!("manifest encode: {e}")))?;

    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(manifest_bytes.len() as u32).to_le_bytes())?;
    file.write_all(&manifest_bytes)?;
    file.write_all(&payload)?;
    Ok(())
}

/// Reads every tensor, preserving file order.
pub fn load(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Weights(format!(
            "{} is not a weight file (bad magic)",
            path.display()
        )));
    }
    let mlen = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let manifest_start = MAGIC.len() + 4;
    let payload_start = manifest_start + mlen;
    if bytes.len() < payload_start {
        return Err(Error::Weights("truncated manifest".into()));
    }
    let manifest: Vec<ManifestEntry> =
        serde_json::from_slice(&bytes[manifest_start..payload_start])
            .map_err(|e| Error::Weights(format!("manifest decode: {e}")))?;
    let payload = &bytes[payload_start..];

    let mut out = Vec::with_capacity(manifest.len());
    for entry in manifest {
        if entry.dtype != "f32" {
            return Err(Error::Weights(format!(
                "tensor `{}` has unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let n_bytes = entry.shape[0] * entry.shape[1] * 4;
        let end = entry.offset + n_bytes;
        if end > payload.len() {
            return Err(Error::Weights(format!(
                "tensor `{}` extends past end of payload",
                entry.name
            )));
        }
        let m = Matrix::from_le_bytes(
            entry.shape[0],
            entry.shape[1],
            &payload[entry.offset..end],
        )?;
        out.push((entry.name, m));
    }
    Ok(out)
}

/// Load helper that returns a lookup-by-name view with shape validation.
pub struct TensorSet {
    tensors: Vec<(String, Matrix)>,
}

impl TensorSet {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self {
            tensors: load(path)?,
        })
    }

    pub fn from_tensors(tensors: Vec<(String, Matrix)>) -> Self {
        Self { tensors }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
    }

    pub fn take(&mut self, name: &str) -> Result<Matrix> {
        let idx = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))?;
        Ok(self.tensors.remove(idx).1)
    }

    pub fn take_expect(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let t = self.take(name)?;
        if t.shape() != (rows, cols) {
            return Err(Error::Weights(format!(
                "tensor `{name}` has shape {:?}, expected ({rows}, {cols})",
                t.shape()
            )));
        }
        Ok(t)
    }
}
