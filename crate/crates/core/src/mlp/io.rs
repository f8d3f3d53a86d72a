//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "WCMLP\0\0\0"
//! version  u32
//! hlen     u32      length of the JSON header
//! header   hlen bytes {operation, layer_sizes, metadata}
//! mean     f64 * inputs
//! std      f64 * inputs
//! layers   per layer: weights (row-major, inputs x outputs) then bias, f64
//! sha256   32 bytes over everything above
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dense, MlpError, MlpModel, TrainingMetadata};
use crate::ops::OperationKind;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"WCMLP\0\0\0";
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    operation: OperationKind,
    layer_sizes: Vec<usize>,
    metadata: TrainingMetadata,
}

pub fn save_model<W: Write>(mut out: W, model: &MlpModel) -> Result<(), MlpError> {
    let header = serde_json::to_vec(&Header {
        operation: model.operation,
        layer_sizes: model.layer_sizes(),
        metadata: model.metadata.clone(),
    })
    .map_err(|e| MlpError::Corrupt(e.to_string()))?;
    let mut buf = Vec::with_capacity(
        16 + header.len() + 8 * (model.parameter_count() + 2 * model.input_dim()) + DIGEST_LEN,
    );
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    let floats = model
        .input_mean
        .iter()
        .chain(model.input_std.iter())
        .copied()
        .chain(model.parameters());
    for v in floats {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MlpError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| MlpError::Corrupt("file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MlpError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, MlpError> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| MlpError::Corrupt("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_model<R: Read>(mut input: R) -> Result<MlpModel, MlpError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(MlpError::Corrupt("not a model file".into()));
    }
    let mut cur = Cursor {
        bytes: &bytes,
        pos: MAGIC.len(),
    };
    let version = cur.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(MlpError::Version {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    if bytes.len() < MAGIC.len() + 8 + DIGEST_LEN {
        return Err(MlpError::Corrupt("file is truncated".into()));
    }
    let body_end = bytes.len() - DIGEST_LEN;
    if Sha256::digest(&bytes[..body_end])[..] != bytes[body_end..] {
        return Err(MlpError::Corrupt("checksum mismatch".into()));
    }
    cur.bytes = &bytes[..body_end];

    let hlen = cur.u32()? as usize;
    let header: Header =
        serde_json::from_slice(cur.take(hlen)?).map_err(|e| MlpError::Corrupt(format!("header: {e}")))?;
    let sizes = &header.layer_sizes;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(MlpError::Corrupt(format!("bad layer sizes {sizes:?}")));
    }
    let inputs = sizes[0];
    let mean = Array1::from(cur.f64s(inputs)?);
    let std = Array1::from(cur.f64s(inputs)?);
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for w in sizes.windows(2) {
        let weights = Array2::from_shape_vec((w[0], w[1]), cur.f64s(w[0] * w[1])?)
            .map_err(|e| MlpError::Corrupt(e.to_string()))?;
        let bias = Array1::from(cur.f64s(w[1])?);
        layers.push((weights, bias));
    }
    if cur.pos != cur.bytes.len() {
        return Err(MlpError::Corrupt("trailing bytes after parameters".into()));
    }
    let mut model = MlpModel::from_parts(header.operation, layers, mean, std, header.metadata.target_space)
        .map_err(|e| MlpError::Corrupt(e.to_string()))?;
    model.metadata = header.metadata;
    debug_assert!(model
        .layers
        .iter()
        .all(|l: &Dense| l.bias.len() == l.weights.ncols()));
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::TargetSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = MlpModel::new_random(OperationKind::Lstm, &[11, 7, 5, 1], TargetSpace::Log, &mut rng);
        m.input_mean = Array1::linspace(-3.0, 3.0, 11);
        m.input_std = Array1::linspace(0.5, 9.0, 11);
        m.metadata.test_mape = Some(0.0731);
        m
    }

    fn bytes(m: &MlpModel) -> Vec<u8> {
        let mut buf = Vec::new();
        save_model(&mut buf, m).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let back = load_model(bytes(&m).as_slice()).unwrap();
        assert_eq!(back, m);
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 1.7).collect();
        assert_eq!(
            back.forward(&x).unwrap().to_bits(),
            m.forward(&x).unwrap().to_bits()
        );
    }

    #[test]
    fn rejects_other_versions() {
        let mut buf = bytes(&model());
        buf[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            load_model(buf.as_slice()),
            Err(MlpError::Version {
                found: 7,
                expected: 1
            })
        ));
    }

    #[test]
    fn detects_corruption_and_truncation() {
        let good = bytes(&model());
        let mut flipped = good.clone();
        let mid = good.len() / 2;
        flipped[mid] ^= 0x10;
        assert!(matches!(
            load_model(flipped.as_slice()),
            Err(MlpError::Corrupt(_))
        ));
        for cut in [0, 5, 12, 40, good.len() - 1] {
            assert!(
                matches!(load_model(&good[..cut]), Err(MlpError::Corrupt(_))),
                "cut {cut}"
            );
        }
    }
}
