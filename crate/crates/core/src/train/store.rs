use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::TrainError;
use crate::association::{hungarian, CostMatrix};
use crate::domain::{Detection, TrackRecord};

/// Detections of one frame with their labels and pairwise box overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub frame: u32,
    /// `gt_identity` is the label; `None` marks background.
    pub detections: Vec<Detection>,
    /// Row-major `n × n` IoU between the frame's detections.
    pub pair_iou: Vec<f64>,
}

impl LabeledFrame {
    pub fn new(frame: u32, detections: Vec<Detection>) -> Self {
        let n = detections.len();
        let mut pair_iou = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                pair_iou[i * n + j] = detections[i].bbox.iou(&detections[j].bbox);
            }
        }
        Self {
            frame,
            detections,
            pair_iou,
        }
    }

    pub fn iou(&self, i: usize, j: usize) -> f64 {
        self.pair_iou[i * self.detections.len() + j]
    }
}

/// One labelled video, frames in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub name: String,
    pub frames: Vec<LabeledFrame>,
}

impl Video {
    pub fn new(name: String, mut frames: Vec<LabeledFrame>) -> Self {
        frames.sort_by_key(|f| f.frame);
        Self { name, frames }
    }

    /// For the frame at `index`: every identity seen within the previous `max_age`
    /// frames, with its last `capacity` labelled detections (oldest first).
    pub fn histories(&self, index: usize, capacity: usize, max_age: u32) -> Vec<(i64, Vec<&Detection>)> {
        let t = self.frames[index].frame;
        let mut banks: BTreeMap<i64, Vec<&Detection>> = BTreeMap::new();
        let mut recent: BTreeSet<i64> = BTreeSet::new();
        for f in self.frames[..index].iter().rev() {
            let age = t - f.frame;
            for d in &f.detections {
                let Some(label) = d.gt_identity else { continue };
                if age <= max_age {
                    recent.insert(label);
                }
                if !recent.contains(&label) {
                    continue;
                }
                let bank = banks.entry(label).or_default();
                if bank.len() < capacity {
                    bank.push(d);
                }
            }
        }
        banks
            .into_iter()
            .map(|(label, mut bank)| {
                bank.reverse();
                (label, bank)
            })
            .collect()
    }

    /// Whether the frame at `index` holds a labelled detection whose identity has history.
    pub fn has_pair(&self, index: usize, max_age: u32) -> bool {
        let f = &self.frames[index];
        let labels: BTreeSet<i64> = f.detections.iter().filter_map(|d| d.gt_identity).collect();
        self.frames[..index]
            .iter()
            .rev()
            .take_while(|p| f.frame - p.frame <= max_age)
            .any(|p| {
                p.detections
                    .iter()
                    .any(|d| d.gt_identity.is_some_and(|l| labels.contains(&l)))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingStore {
    pub videos: Vec<Video>,
}

/// Labels every detection with the identity of its IoU-closest ground-truth box
/// (per-frame Hungarian on IoU); detections overlapping nothing become background.
pub fn preprocess(name: String, gt: &[TrackRecord], detections: Vec<Detection>) -> Result<Video, TrainError> {
    let mut gt_frames: BTreeMap<u32, Vec<&TrackRecord>> = BTreeMap::new();
    for r in gt {
        gt_frames.entry(r.frame).or_default().push(r);
    }
    let mut det_frames: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        det_frames.entry(d.frame).or_default().push(d);
    }
    if !det_frames.is_empty() && !gt_frames.is_empty() && !det_frames.keys().any(|f| gt_frames.contains_key(f)) {
        return Err(TrainError::FrameMismatch);
    }
    let mut frames = Vec::with_capacity(det_frames.len());
    for (frame, mut dets) in det_frames {
        for d in &mut dets {
            d.gt_identity = None;
        }
        if let Some(g) = gt_frames.get(&frame) {
            let data = dets
                .iter()
                .flat_map(|d| g.iter().map(move |r| 1.0 - d.bbox.iou(&r.bbox)))
                .collect();
            let c = CostMatrix::new(dets.len(), g.len(), data).expect("dimensions agree");
            for m in hungarian(&c).expect("IoU costs are finite").matches {
                if m.cost < 1.0 {
                    dets[m.track].gt_identity = Some(g[m.det].id);
                }
            }
        }
        frames.push(LabeledFrame::new(frame, dets));
    }
    Ok(Video::new(name, frames))
}
