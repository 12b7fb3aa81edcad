//! Binary container shared by checkpoints and dataset caches:
//!
//! ```text
//! magic[4] | version u32 | meta_len u64 | meta JSON | count u64 | count × f64 | sha256[32]
//! ```
//!
//! All integers and floats are little-endian; the digest covers every
//! preceding byte.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn encode<M: Serialize>(magic: [u8; 4], version: u32, meta: &M, blob: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(meta)?;
    let mut out = Vec::with_capacity(4 + 4 + 8 + json.len() + 8 + 8 * blob.len() + 32);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    for v in blob {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode<M: DeserializeOwned>(bytes: &[u8], magic: [u8; 4], version: u32, what: &str) -> Result<(M, Vec<f64>)> {
    let err = |m: String| Error::Checkpoint(format!("{what}: {m}"));
    if bytes.len() < 4 + 4 + 8 + 8 + 32 {
        return Err(err(format!("file is truncated ({} bytes)", bytes.len())));
    }
    if bytes[..4] != magic {
        return Err(err(format!(
            "bad magic bytes {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if found != version {
        return Err(err(format!(
            "format version {found} is not supported (expected {version})"
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(err("checksum mismatch: file is truncated or corrupted".into()));
    }
    let meta_len = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let meta_end = 16usize
        .checked_add(meta_len)
        .filter(|&e| e + 8 <= body.len())
        .ok_or_else(|| err("metadata length exceeds file size".into()))?;
    let meta: M = serde_json::from_slice(&body[16..meta_end]).map_err(|e| err(format!("bad metadata: {e}")))?;
    let count = u64::from_le_bytes(body[meta_end..meta_end + 8].try_into().expect("8 bytes")) as usize;
    let payload = &body[meta_end + 8..];
    if payload.len() != count * 8 {
        return Err(err(format!(
            "expected {count} values ({} bytes), found {} bytes",
            count * 8,
            payload.len()
        )));
    }
    let blob = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((meta, blob))
}

pub fn write<M: Serialize>(path: &Path, magic: [u8; 4], version: u32, meta: &M, blob: &[f64]) -> Result<()> {
    let bytes = encode(magic, version, meta, blob)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read<M: DeserializeOwned>(path: &Path, magic: [u8; 4], version: u32) -> Result<(M, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, magic, version, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const M: [u8; 4] = *b"TEST";

    #[test]
    fn round_trip_is_bit_exact() {
        let blob = vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300];
        let bytes = encode(M, 1, &"meta", &blob).unwrap();
        let (meta, back): (String, Vec<f64>) = decode(&bytes, M, 1, "t").unwrap();
        assert_eq!(meta, "meta");
        assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            blob.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode(M, 1, &1u32, &[1.0, 2.0]).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<u32>(&bad, M, 1, "t")
            .unwrap_err()
            .to_string()
            .contains("magic"));
        assert!(decode::<u32>(&bytes, M, 2, "t")
            .unwrap_err()
            .to_string()
            .contains("version"));
        assert!(decode::<u32>(&bytes[..bytes.len() - 9], M, 1, "t").is_err());
        let mut flip = bytes.clone();
        flip[30] ^= 1;
        assert!(decode::<u32>(&flip, M, 1, "t").is_err());
    }
}
