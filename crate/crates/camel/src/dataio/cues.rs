//! `CAMELCUE` files: one cue, fixed width, keyed by `(frame, det_index)`.

use std::collections::BTreeSet;

use super::binary::{put_f32s, put_u32, put_u64, Reader};
use super::FormatError;

pub const CUE_MAGIC: &[u8; 8] = b"CAMELCUE";
pub const CUE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CueRecord {
    pub frame: u32,
    /// Position of the detection among its frame's lines in the detection file.
    pub det_index: u32,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueStore {
    pub cue_id: u32,
    pub width: u32,
    pub records: Vec<CueRecord>,
}

impl CueStore {
    pub fn new(cue_id: u32, width: u32) -> Self {
        Self {
            cue_id,
            width,
            records: Vec::new(),
        }
    }

    fn check(&self) -> Result<(), FormatError> {
        let mut keys = BTreeSet::new();
        for r in &self.records {
            if r.values.len() != self.width as usize {
                return Err(FormatError::WidthMismatch {
                    expected: self.width as usize,
                    actual: r.values.len(),
                });
            }
            if !keys.insert((r.frame, r.det_index)) {
                return Err(FormatError::DuplicateKey {
                    frame: r.frame,
                    det_index: r.det_index,
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        self.check()?;
        let mut out = Vec::with_capacity(32 + self.records.len() * (8 + 4 * self.width as usize));
        out.extend_from_slice(CUE_MAGIC);
        put_u32(&mut out, CUE_VERSION);
        put_u32(&mut out, self.cue_id);
        put_u32(&mut out, self.width);
        put_u64(&mut out, self.records.len() as u64);
        for r in &self.records {
            put_u32(&mut out, r.frame);
            put_u32(&mut out, r.det_index);
            put_f32s(&mut out, &r.values);
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(buf);
        r.header(CUE_MAGIC, CUE_VERSION)?;
        let cue_id = r.u32()?;
        let width = r.u32()?;
        let count = r.u64()?;
        let mut store = CueStore::new(cue_id, width);
        for _ in 0..count {
            let frame = r.u32()?;
            let det_index = r.u32()?;
            let values = r.f32s(width as usize)?;
            store.records.push(CueRecord {
                frame,
                det_index,
                values,
            });
        }
        r.finish()?;
        store.check()?;
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CueStore {
        CueStore {
            cue_id: 1,
            width: 3,
            records: vec![
                CueRecord {
                    frame: 1,
                    det_index: 0,
                    values: vec![0.5, -1.0, 2.0],
                },
                CueRecord {
                    frame: 1,
                    det_index: 1,
                    values: vec![0.0, 1e-7, f32::MAX],
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(CueStore::from_bytes(&bytes).unwrap(), sample());
    }

    #[test]
    fn corrupt_magic() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert_eq!(CueStore::from_bytes(&bytes), Err(FormatError::BadMagic));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[8] = 9;
        assert!(matches!(
            CueStore::from_bytes(&bytes),
            Err(FormatError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn truncated_payload() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(
            CueStore::from_bytes(&bytes[..bytes.len() - 2]),
            Err(FormatError::Truncated { .. })
        ));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let mut s = sample();
        s.records[1].det_index = 0;
        assert!(matches!(s.to_bytes(), Err(FormatError::DuplicateKey { .. })));
    }
}
