//! KVD: a flat little-endian dump of per-layer, per-head KV caches.
//!
//! ```text
//! magic "KVD1" | version u32 = 1 | n_layers u32 | h_kv u32 | d_h u32
//! per layer: seq_len u32
//!   per head: positions [u32; seq_len] | K [f32; seq_len * d_h] | V [f32; seq_len * d_h]
//! ```
//!
//! Matrices are row-major. Payloads are binary32, so values written from `f64` are
//! rounded once; a loaded file re-encodes to identical bytes.

use std::fs;
use std::path::Path;

use super::{HeadCache, LayerCache};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"KVD1";
pub const VERSION: u32 = 1;

pub fn save_kvd(caches: &[LayerCache], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_kvd(caches)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_kvd(path: impl AsRef<Path>) -> Result<Vec<LayerCache>> {
    let bytes = fs::read(path)?;
    decode_kvd(&bytes)
}

fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value)
        .map_err(|_| Error::DimensionMismatch(format!("{what} {value} does not fit in u32")))
}

pub fn encode_kvd(caches: &[LayerCache]) -> Result<Vec<u8>> {
    let h_kv = caches.first().map_or(0, LayerCache::num_heads);
    let d_h = caches.iter().find_map(LayerCache::head_dim).unwrap_or(0);
    for layer in caches {
        if layer.num_heads() != h_kv {
            return Err(Error::DimensionMismatch(format!(
                "layer {} has {} heads, expected {h_kv}",
                layer.layer_index,
                layer.num_heads()
            )));
        }
        if let Some(dim) = layer.head_dim() {
            if dim != d_h {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} has head dim {dim}, expected {d_h}",
                    layer.layer_index
                )));
            }
        }
    }

    let payload: usize = caches
        .iter()
        .map(|l| 4 + l.num_heads() * l.seq_len() * (4 + 8 * d_h))
        .sum();
    let mut out = Vec::with_capacity(20 + payload);
    out.extend_from_slice(MAGIC);
    for word in [VERSION, to_u32(caches.len(), "layer count")?, to_u32(h_kv, "head count")?, to_u32(d_h, "head dim")?] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for layer in caches {
        out.extend_from_slice(&to_u32(layer.seq_len(), "sequence length")?.to_le_bytes());
        for head in &layer.heads {
            for &p in head.positions() {
                out.extend_from_slice(&to_u32(p, "position")?.to_le_bytes());
            }
            for m in [head.k(), head.v()] {
                for &x in m.data() {
                    out.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::TruncatedPayload);
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32_matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows.checked_mul(cols).ok_or(Error::TruncatedPayload)?;
        let bytes = self.take(n.checked_mul(4).ok_or(Error::TruncatedPayload)?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Matrix::new(rows, cols, data)
    }
}

pub fn decode_kvd(bytes: &[u8]) -> Result<Vec<LayerCache>> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedPayload);
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { bytes: &bytes[4..] };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n_layers = r.u32()? as usize;
    let h_kv = r.u32()? as usize;
    let d_h = r.u32()? as usize;
    if h_kv > 0 && d_h == 0 {
        return Err(Error::DimensionMismatch("head dim 0 with non-zero head count".into()));
    }

    let mut layers = Vec::with_capacity(n_layers.min(1 << 12));
    for layer_index in 0..n_layers {
        let seq_len = r.u32()? as usize;
        let mut heads = Vec::with_capacity(h_kv.min(1 << 12));
        for h in 0..h_kv {
            let raw = r.take(seq_len.checked_mul(4).ok_or(Error::TruncatedPayload)?)?;
            let positions: Vec<usize> = raw
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
                .collect();
            if positions.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::DimensionMismatch(format!(
                    "layer {layer_index} head {h}: positions not strictly increasing"
                )));
            }
            let k = r.f32_matrix(seq_len, d_h)?;
            let v = r.f32_matrix(seq_len, d_h)?;
            heads.push(HeadCache::new(k, v, positions)?);
        }
        layers.push(LayerCache::new(layer_index, heads)?);
    }
    if !r.bytes.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} bytes beyond the payload declared by the header",
            r.bytes.len()
        )));
    }
    Ok(layers)
}
