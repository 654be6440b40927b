//! On-disk formats: MOT text files, cue stores, weights and run configuration.

mod binary;
pub mod config;
pub mod cues;
pub mod mot;
pub mod sequence;
pub mod weights;

pub use config::{config_hash, HeuristicsConfig, RunConfig};
pub use cues::{CueRecord, CueStore};
pub use mot::{emit_mot, emit_tracks, parse_mot, MotRecord, ParseError};
pub use weights::WeightsFile;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("{count} trailing bytes")]
    TrailingBytes { count: usize },
    #[error("record width {actual}, expected {expected}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("duplicate record for frame {frame}, detection {det_index}")]
    DuplicateKey { frame: u32, det_index: u32 },
    #[error("tensor name is not UTF-8")]
    BadName,
}
