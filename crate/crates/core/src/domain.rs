//! Tracking data model: boxes, detections with their cue sets, tracklets with a
//! bounded feature bank.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Cue 0: normalised box plus confidence.
pub const BOX_CUE: usize = 0;
/// Cue 1: appearance embedding.
pub const APPEARANCE_CUE: usize = 1;
/// Cue 2: pose keypoints relative to the box.
pub const KEYPOINT_CUE: usize = 2;

pub const BOX_CUE_WIDTH: usize = 5;
pub const DEFAULT_JOINTS: usize = 17;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("degenerate box (width {width}, height {height})")]
    DegenerateBox { width: f64, height: f64 },
    #[error("expected {expected} joints, got {actual}")]
    JointCountMismatch { expected: usize, actual: usize },
    #[error("frame {frame} does not follow last bank frame {last}")]
    NonMonotonicFrame { frame: u32, last: u32 },
    #[error("image size must be positive")]
    BadImageSize,
}

/// Axis-aligned box in pixels, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite()
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Intersection over union; 0 when either box is empty.
    pub fn iou(&self, other: &BBox) -> f64 {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = (self.x + self.w).min(other.x + other.w);
        let y2 = (self.y + self.h).min(other.y + other.h);
        let inter = (x2 - x1).max(0.0) * (y2 - y1).max(0.0);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

/// Fixed-width numeric vector for one cue of one detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueTensor {
    pub cue_id: usize,
    pub values: Vec<f64>,
}

impl CueTensor {
    pub fn new(cue_id: usize, values: Vec<f64>) -> Self {
        Self { cue_id, values }
    }

    pub fn width(&self) -> usize {
        self.values.len()
    }
}

/// One observed object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
    /// Present cues keyed by cue id. Cue 0 is always present.
    pub cues: BTreeMap<usize, CueTensor>,
    /// Ground-truth identity, only known for training and oracle runs.
    pub gt_identity: Option<i64>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, confidence: f64) -> Self {
        Self {
            frame,
            bbox,
            confidence,
            cues: BTreeMap::new(),
            gt_identity: None,
        }
    }

    pub fn with_cue(mut self, cue: CueTensor) -> Self {
        self.cues.insert(cue.cue_id, cue);
        self
    }

    pub fn cue(&self, cue_id: usize) -> Option<&CueTensor> {
        self.cues.get(&cue_id)
    }
}

/// `[cx / W, cy / H, w / W, h / H, confidence]`.
pub fn encode_box_cue(d: &Detection, image_w: f64, image_h: f64) -> Result<CueTensor, DomainError> {
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(DomainError::BadImageSize);
    }
    let b = &d.bbox;
    if !b.is_valid() {
        return Err(DomainError::DegenerateBox {
            width: b.w,
            height: b.h,
        });
    }
    let (cx, cy) = b.center();
    Ok(CueTensor::new(
        BOX_CUE,
        alloc::vec![cx / image_w, cy / image_h, b.w / image_w, b.h / image_h, d.confidence],
    ))
}

/// Flattened `(x_rel, y_rel, score)` per joint, coordinates relative to `bbox`.
pub fn encode_keypoint_cue(
    joints: &[(f64, f64, f64)],
    bbox: &BBox,
    expected_joints: usize,
) -> Result<CueTensor, DomainError> {
    if joints.len() != expected_joints {
        return Err(DomainError::JointCountMismatch {
            expected: expected_joints,
            actual: joints.len(),
        });
    }
    if !bbox.is_valid() {
        return Err(DomainError::DegenerateBox {
            width: bbox.w,
            height: bbox.h,
        });
    }
    let values = joints
        .iter()
        .flat_map(|&(x, y, s)| [(x - bbox.x) / bbox.w, (y - bbox.y) / bbox.h, s])
        .collect();
    Ok(CueTensor::new(KEYPOINT_CUE, values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Tentative,
    Active,
    Paused,
    Terminated,
}

/// One identity with the detections of its `W` most recent matched frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub identity: u64,
    /// Oldest first.
    pub bank: Vec<Detection>,
    pub state: TrackState,
    /// Matches after initialisation.
    pub hits: u32,
    pub last_matched_frame: u32,
}

impl Tracklet {
    pub fn new(identity: u64, first: Detection, state: TrackState) -> Self {
        Self {
            identity,
            last_matched_frame: first.frame,
            bank: alloc::vec![first],
            state,
            hits: 0,
        }
    }

    pub fn last(&self) -> &Detection {
        self.bank.last().expect("tracklet bank is never empty")
    }

    /// Appends `d`, evicting the oldest entry once the bank exceeds `capacity`.
    pub fn bank_push(&mut self, d: Detection, capacity: usize) -> Result<(), DomainError> {
        if let Some(last) = self.bank.last() {
            if d.frame <= last.frame {
                return Err(DomainError::NonMonotonicFrame {
                    frame: d.frame,
                    last: last.frame,
                });
            }
        }
        self.last_matched_frame = d.frame;
        self.bank.push(d);
        if self.bank.len() > capacity {
            let excess = self.bank.len() - capacity;
            self.bank.drain(..excess);
        }
        Ok(())
    }
}

/// One `(frame, identity, box)` line of a tracking result or ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: u32,
    pub id: i64,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Everything one association step looks at.
#[derive(Debug, Clone, Default)]
pub struct ActiveSet {
    pub tracklets: Vec<Tracklet>,
    pub detections: Vec<Detection>,
}
