//! Model file layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "INSMCNN1"
//! version      u32
//! checksum     u64      first 8 bytes of SHA-256 of the layer-plan descriptor
//! input_width  u32
//! seed         u64
//! n_tensors    u32
//! n_tensors × { len: u64, values: len × f64 }   in layer-plan order
//! ```

use std::path::Path;

use super::{CnnModel, LayerPlan};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"INSMCNN1";
pub const MODEL_VERSION: u32 = 1;

pub fn model_to_bytes(model: &CnnModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + model.params.len() * 8 + model.plan.tensors.len() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&model.plan.checksum().to_le_bytes());
    out.extend_from_slice(&(model.plan.input_width as u32).to_le_bytes());
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&(model.plan.tensors.len() as u32).to_le_bytes());
    for t in &model.plan.tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in &model.params[t.range()] {
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
        let end = end.ok_or_else(|| Error::IncompatibleModel(format!("file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a model file. When `expected_width` is given the file must have
/// been trained for that many input features.
pub fn model_from_bytes(bytes: &[u8], expected_width: Option<usize>) -> Result<CnnModel> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MODEL_MAGIC {
        return Err(Error::IncompatibleModel("not a model file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::IncompatibleModel(format!("file version {version}, expected {MODEL_VERSION}")));
    }
    let checksum = c.u64()?;
    let width = c.u32()? as usize;
    if let Some(w) = expected_width {
        if w != width {
            return Err(Error::IncompatibleModel(format!(
                "model takes {width} input features, configuration has {w}"
            )));
        }
    }
    let plan = LayerPlan::new(width).map_err(|e| Error::IncompatibleModel(e.to_string()))?;
    if plan.checksum() != checksum {
        return Err(Error::IncompatibleModel("layer-plan checksum mismatch".into()));
    }
    let seed = c.u64()?;
    let n = c.u32()? as usize;
    if n != plan.tensors.len() {
        return Err(Error::IncompatibleModel(format!("{n} tensors, plan has {}", plan.tensors.len())));
    }
    let mut params = Vec::with_capacity(plan.num_params());
    for t in &plan.tensors {
        let len = c.u64()? as usize;
        if len != t.len() {
            return Err(Error::IncompatibleModel(format!("{} has {len} values, expected {}", t.name, t.len())));
        }
        let raw = c.take(len.checked_mul(8).ok_or_else(|| Error::IncompatibleModel("tensor too large".into()))?)?;
        params.extend(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))));
    }
    if c.pos != bytes.len() {
        return Err(Error::IncompatibleModel(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(CnnModel { plan, params, seed })
}

pub fn save_model(model: &CnnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>, expected_width: Option<usize>) -> Result<CnnModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes, expected_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let model = CnnModel::new(20, 77).unwrap();
        save_model(&model, &path).unwrap();
        let back = load_model(&path, Some(20)).unwrap();
        assert_eq!(back.seed, 77);
        assert!(back.params.iter().zip(&model.params).all(|(a, b)| a.to_bits() == b.to_bits()));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (p, q) = (model.forward(&x).unwrap(), back.forward(&x).unwrap());
            assert_eq!(p.map(f64::to_bits), q.map(f64::to_bits));
        }
    }

    #[test]
    fn truncated_file() {
        let bytes = model_to_bytes(&CnnModel::new(20, 1).unwrap());
        for cut in [0, 7, 30, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(model_from_bytes(&bytes[..cut], None), Err(Error::IncompatibleModel(_))));
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(model_from_bytes(&long, None).is_err());
    }

    #[test]
    fn width_mismatch_and_corruption() {
        let bytes = model_to_bytes(&CnnModel::new(20, 1).unwrap());
        assert!(matches!(model_from_bytes(&bytes, Some(31)), Err(Error::IncompatibleModel(_))));
        assert!(model_from_bytes(&bytes, Some(20)).is_ok());
        let mut bad = bytes.clone();
        bad[12] ^= 1; // inside the checksum
        assert!(matches!(model_from_bytes(&bad, None), Err(Error::IncompatibleModel(_))));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(model_from_bytes(&bad, None).is_err());
    }
}
