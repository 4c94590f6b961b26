//! Encoded-vector file format: versioned header, entry count, hidden_dim,
//! then little-endian f32 h and c per entry.

use anyhow::{bail, Context, Result};
use privview_core::seqnet::EncodedVector;
use std::io::Write;
use std::path::Path;

pub const VECTOR_HEADER: &[u8] = b"privview-vec v1\n";

pub fn write_vectors(path: &Path, hidden_dim: usize, vectors: &[EncodedVector<f32>]) -> Result<()> {
    let mut buf = Vec::with_capacity(VECTOR_HEADER.len() + 12 + vectors.len() * hidden_dim * 8);
    buf.extend_from_slice(VECTOR_HEADER);
    buf.extend_from_slice(&(hidden_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
    for v in vectors {
        for x in v.h.iter().chain(&v.c) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_vectors(path: &Path) -> Result<(usize, Vec<EncodedVector<f32>>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() < VECTOR_HEADER.len() + 12 || &bytes[..VECTOR_HEADER.len()] != VECTOR_HEADER {
        bail!("malformed vector file: missing privview-vec v1 header");
    }
    let mut pos = VECTOR_HEADER.len();
    let hidden_dim = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    let count = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    if hidden_dim == 0 {
        bail!("malformed vector file: zero hidden_dim");
    }
    let expected = pos + count * hidden_dim * 8;
    if bytes.len() != expected {
        bail!(
            "malformed vector file: {} bytes, expected {expected} for {count} vectors of dim {hidden_dim}",
            bytes.len()
        );
    }
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut h = Vec::with_capacity(hidden_dim);
        let mut c = Vec::with_capacity(hidden_dim);
        for part in [&mut h, &mut c] {
            for _ in 0..hidden_dim {
                part.push(f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()));
                pos += 4;
            }
        }
        vectors.push(EncodedVector { h, c });
    }
    Ok((hidden_dim, vectors))
}
