//! Binary model file.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic            8 bytes   "TFMSEPNN"
//! version          u32       1
//! layer count      u32       number of entries in layer_sizes (L + 1)
//! layer sizes      u64 × (L + 1)
//! hidden act.      u8        1 = sigmoid, 0 = identity
//! output act.      u8
//! feature mean     f64
//! feature std      f64
//! log epsilon      f64
//! seed             u64
//! per layer i:     weights f64 × (in·out), row-major [in × out]
//!                  bias    f64 × out
//! ```
//!
//! Nothing may follow the last bias.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Dense, MlpModel};
use crate::error::{Error, Result};
use crate::spectral::FeatureStats;

pub const MAGIC: &[u8; 8] = b"TFMSEPNN";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layer_sizes.len() as u32).to_le_bytes());
    for &size in &model.layer_sizes {
        out.extend_from_slice(&(size as u64).to_le_bytes());
    }
    out.push(model.hidden_activation.code());
    out.push(model.output_activation.code());
    let stats = &model.feature_stats;
    for v in [stats.mean, stats.std, stats.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.seed.to_le_bytes());
    for layer in &model.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(Error::Format(format!(
                "model file truncated at byte {} (needed {n} more)",
                self.pos
            ))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(too_large)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn too_large() -> Error {
    Error::Format("model dimensions overflow".into())
}

pub fn decode_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let count = cur.u32()? as usize;
    if count < 2 || count > cur.remaining() / 8 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut layer_sizes = Vec::with_capacity(count);
    for _ in 0..count {
        let size = usize::try_from(cur.u64()?).map_err(|_| too_large())?;
        if size == 0 {
            return Err(Error::Format("zero-width layer".into()));
        }
        layer_sizes.push(size);
    }
    let activation = |code: u8| {
        Activation::from_code(code)
            .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))
    };
    let hidden_activation = activation(cur.u8()?)?;
    let output_activation = activation(cur.u8()?)?;
    let feature_stats = FeatureStats {
        mean: cur.f64()?,
        std: cur.f64()?,
        epsilon: cur.f64()?,
    };
    let seed = cur.u64()?;

    let mut layers = Vec::with_capacity(count - 1);
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let n = fan_in.checked_mul(fan_out).ok_or_else(too_large)?;
        let weights = Array2::from_shape_vec((fan_in, fan_out), cur.f64s(n)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        let bias = Array1::from_vec(cur.f64s(fan_out)?);
        layers.push(Dense { weights, bias });
    }
    if cur.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} unexpected trailing bytes",
            cur.remaining()
        )));
    }
    let finite = layers
        .iter()
        .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()));
    if !finite {
        return Err(Error::Format("model contains non-finite parameters".into()));
    }
    Ok(MlpModel {
        layer_sizes,
        layers,
        hidden_activation,
        output_activation,
        feature_stats,
        seed,
    })
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MlpModel {
        let stats = FeatureStats {
            mean: -3.25,
            std: 1.75,
            epsilon: 1e-10,
        };
        let mut m = MlpModel::init(&[6, 5, 5, 6], stats, 99).unwrap();
        m.layers_mut()[0].bias.fill(0.125);
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = encode_model(&m);
        assert_eq!(
            bytes.len(),
            8 + 4 + 4 + 4 * 8 + 2 + 3 * 8 + 8 + m.parameter_count() * 8
        );
        assert_eq!(decode_model(&bytes).unwrap(), m);
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = encode_model(&model());
        for cut in [0, 5, 12, 40, bytes.len() - 1] {
            assert!(matches!(decode_model(&bytes[..cut]), Err(Error::Format(_))));
        }
    }

    #[test]
    fn unknown_version_named() {
        let mut bytes = encode_model(&model());
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        match decode_model(&bytes) {
            Err(Error::Format(msg)) => assert!(msg.contains("version 7"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_and_bad_magic() {
        let mut bytes = encode_model(&model());
        bytes.push(0);
        assert!(matches!(decode_model(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_model(&model());
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tfm");
        let m = model();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert!(matches!(
            load_model(dir.path().join("missing.tfm")),
            Err(Error::Io { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn any_model_round_trips(
            sizes in proptest::collection::vec(1usize..7, 2..5),
            seed in 0u64..1_000,
            mean in -10.0f64..10.0,
            std in 0.01f64..10.0,
        ) {
            let stats = FeatureStats { mean, std, epsilon: 1e-10 };
            let m = MlpModel::init(&sizes, stats, seed).unwrap();
            proptest::prop_assert_eq!(decode_model(&encode_model(&m)).unwrap(), m);
        }
    }
}
