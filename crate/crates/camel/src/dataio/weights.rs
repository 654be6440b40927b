//! `CAMELWTS` files: config hash plus every named parameter as 32-bit floats.

use camel_core::diffcore::Tensor;
use camel_core::model::{Camel, ModelError};

use super::binary::{put_f32s, put_u32, Reader};
use super::FormatError;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"CAMELWTS";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub config_hash: [u8; 32],
    pub tensors: Vec<NamedTensor>,
}

impl WeightsFile {
    pub fn from_model(model: &Camel, config_hash: [u8; 32]) -> Self {
        let tensors = model
            .params()
            .iter()
            .map(|(name, t)| NamedTensor {
                name: name.to_string(),
                dims: t.shape().iter().map(|&d| d as u32).collect(),
                data: t.data().iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Self { config_hash, tensors }
    }

    /// Copies every tensor into `model`, which must have exactly these parameters.
    pub fn load_into(&self, model: &mut Camel) -> Result<(), ModelError> {
        let named = self.tensors.iter().map(|t| {
            let shape = t.dims.iter().map(|&d| d as usize).collect();
            let data = t.data.iter().map(|&v| v as f64).collect();
            (t.name.clone(), Tensor::new(shape, data).expect("validated on read"))
        });
        model.params_mut().load_named(named.collect::<Vec<_>>())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        put_u32(&mut out, WEIGHTS_VERSION);
        out.extend_from_slice(&self.config_hash);
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_u32(&mut out, t.name.len() as u32);
            out.extend_from_slice(t.name.as_bytes());
            put_u32(&mut out, t.dims.len() as u32);
            for &d in &t.dims {
                put_u32(&mut out, d);
            }
            put_f32s(&mut out, &t.data);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(buf);
        r.header(WEIGHTS_MAGIC, WEIGHTS_VERSION)?;
        let config_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let n = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| FormatError::BadName)?;
            let rank = r.u32()? as usize;
            let mut dims = Vec::new();
            for _ in 0..rank {
                dims.push(r.u32()?);
            }
            let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
            let numel = numel.ok_or(FormatError::Truncated { offset: buf.len() })?;
            let data = r.f32s(numel)?;
            tensors.push(NamedTensor { name, dims, data });
        }
        r.finish()?;
        Ok(Self { config_hash, tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use camel_core::model::{CueSpec, ModelConfig};

    fn model() -> Camel {
        Camel::new(
            ModelConfig {
                cues: vec![CueSpec { id: 0, width: 5 }, CueSpec { id: 1, width: 3 }],
                d_model: 4,
                d_fuse: 4,
                d_emb: 4,
                layers: 1,
                heads: 2,
                d_ff: 8,
                gaffe_d_ff: 8,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn every_parameter_once_and_byte_stable() {
        let m = model();
        let w = WeightsFile::from_model(&m, [7; 32]);
        assert_eq!(w.tensors.len(), m.params().len());
        let bytes = w.to_bytes();
        let back = WeightsFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_bytes(), bytes);
        let mut m2 = model();
        back.load_into(&mut m2).unwrap();
        assert_eq!(WeightsFile::from_model(&m2, [7; 32]).to_bytes(), bytes);
    }

    #[test]
    fn corrupt_and_truncated() {
        let bytes = WeightsFile::from_model(&model(), [0; 32]).to_bytes();
        let mut bad = bytes.clone();
        bad[3] ^= 1;
        assert_eq!(WeightsFile::from_bytes(&bad), Err(FormatError::BadMagic));
        assert!(matches!(
            WeightsFile::from_bytes(&bytes[..bytes.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));
    }

    #[test]
    fn missing_tensor_rejected_on_load() {
        let mut w = WeightsFile::from_model(&model(), [0; 32]);
        w.tensors.pop();
        assert!(matches!(
            w.load_into(&mut model()),
            Err(ModelError::MissingParameter { .. })
        ));
    }
}
