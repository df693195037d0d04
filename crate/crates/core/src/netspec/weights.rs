//! Weight blob: 8-byte magic `CENNWT01`, little-endian `u64` value count, then
//! that many little-endian `f64` values.
//!
//! Values are laid out layer by layer in network order. A conv layer stores
//! kernels `[out][in][row][col]` followed by its `out` biases; an fc layer
//! stores `[out][in]` followed by its biases. Other layers store nothing.

use std::path::Path;

use crate::error::{Error, Result};

use super::{LayerOp, NetworkSpec};

pub const WEIGHT_MAGIC: &[u8; 8] = b"CENNWT01";

pub fn write_weight_blob(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * values.len());
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_weight_blob(bytes: &[u8], origin: &str) -> Result<Vec<f64>> {
    if bytes.len() < 16 || &bytes[..8] != WEIGHT_MAGIC {
        return Err(Error::parse(origin, "not a weight blob (bad magic)"));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != count.saturating_mul(8) {
        return Err(Error::parse(
            origin,
            format!("header declares {count} values but {} bytes follow", body.len()),
        ));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Fills `net`'s weights from a blob, checking the count layer by layer so a
/// mismatch names the first layer that does not fit.
pub fn load_weights(path: &Path, net: &NetworkSpec) -> Result<NetworkSpec> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = read_weight_blob(&bytes, &path.display().to_string())?;
    let mut offset = 0usize;
    for l in &net.layers {
        let need = l.weight_count();
        if need == 0 {
            continue;
        }
        let have = values.len().saturating_sub(offset);
        if have < need {
            let expected = match &l.op {
                LayerOp::Conv(_) => format!("{}x{}x3x3 kernels + {} biases", l.out_maps, l.in_maps, l.out_maps),
                _ => format!("{}x{} matrix + {} biases", l.out_maps, l.fc_inputs(), l.out_maps),
            };
            return Err(Error::WeightShape {
                layer: l.name.clone(),
                expected,
                actual: format!("{have} values remaining"),
            });
        }
        offset += need;
    }
    if offset != values.len() {
        let last = net.layers.iter().rev().find(|l| l.weight_count() > 0);
        return Err(Error::WeightShape {
            layer: last.map_or_else(|| net.name.clone(), |l| l.name.clone()),
            expected: format!("{offset} values in total"),
            actual: format!("{} values", values.len()),
        });
    }
    let mut out = net.clone();
    out.set_flat_weights(&values)?;
    Ok(out)
}

pub fn save_weights(path: &Path, net: &NetworkSpec) -> Result<()> {
    std::fs::write(path, write_weight_blob(&net.flat_weights())).map_err(|e| Error::io(path, e))
}
