use std::path::Path;

use super::net::ApcModel;
use super::ApcConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"APC1";

/// `APC1`, u32 LE JSON length, JSON config, u64 LE parameter count, f64 LE parameters.
pub fn encode_checkpoint(model: &ApcModel) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(model.config())?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.n_params() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<ApcModel> {
    let bad = |msg: &str| Error::format(path, msg);
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing APC1 magic"));
    }
    let jlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let rest = &bytes[8..];
    if rest.len() < jlen + 8 {
        return Err(bad("truncated config block"));
    }
    let cfg: ApcConfig = serde_json::from_slice(&rest[..jlen])
        .map_err(|e| bad(&format!("bad config JSON: {e}")))?;
    let count = u64::from_le_bytes(rest[jlen..jlen + 8].try_into().unwrap()) as usize;
    let payload = &rest[jlen + 8..];
    if payload.len() != count.saturating_mul(8) {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            expected: count.saturating_mul(8),
            found: payload.len(),
        });
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ApcModel::from_params(&cfg, params)
}

pub fn load_checkpoint(path: &Path) -> Result<ApcModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(path, &bytes)
}
