//! Upper-bound probes with ground-truth access: identity by GT overlap, and the
//! per-frame best fixed-weight blend of motion and appearance costs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::association::{hungarian, Assignment, AssociationError, CostMatrix};
use crate::domain::{BBox, Detection, TrackRecord, Tracklet};
use crate::heuristics::KalmanConfig;
use crate::metrics::{association_accuracy, Tally};
use crate::tracker::{ema_costs, kf_costs, Gate, Scorer, TrackerError};

pub const ORACLE_IOU_THRESHOLD: f64 = 0.5;

/// `0, 0.05, ..., 1`.
pub fn lambda_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

/// GT identity for each detection: Hungarian on IoU, pairs under the threshold dropped.
pub fn association_oracle_step(dets: &[BBox], gt: &[(i64, BBox)], iou_threshold: f64) -> Vec<Option<i64>> {
    let mut out = alloc::vec![None; dets.len()];
    if dets.is_empty() || gt.is_empty() {
        return out;
    }
    let data = dets
        .iter()
        .flat_map(|d| gt.iter().map(move |(_, g)| 1.0 - d.iou(g)))
        .collect();
    let c = CostMatrix::new(dets.len(), gt.len(), data).expect("dimensions agree");
    for m in hungarian(&c).expect("IoU costs are finite").matches {
        if 1.0 - m.cost >= iou_threshold {
            out[m.track] = Some(gt[m.det].0);
        }
    }
    out
}

/// Whole-sequence association oracle: every detection overlapping a GT box takes its identity.
pub fn association_oracle_sequence(frames: &[(u32, Vec<Detection>)], gt: &[TrackRecord]) -> Vec<TrackRecord> {
    let mut gt_by_frame: BTreeMap<u32, Vec<(i64, BBox)>> = BTreeMap::new();
    for r in gt {
        gt_by_frame.entry(r.frame).or_default().push((r.id, r.bbox));
    }
    let mut out = Vec::new();
    for (frame, dets) in frames {
        let Some(g) = gt_by_frame.get(frame) else { continue };
        let boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
        for (d, id) in dets
            .iter()
            .zip(association_oracle_step(&boxes, g, ORACLE_IOU_THRESHOLD))
        {
            if let Some(id) = id {
                out.push(TrackRecord {
                    frame: *frame,
                    id,
                    bbox: d.bbox,
                    confidence: d.confidence,
                });
            }
        }
    }
    out.sort_by_key(|r| (r.frame, r.id));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionChoice {
    pub lambda: f64,
    pub assignment: Assignment,
    pub tally: Tally,
}

/// Tries every grid weight and keeps the one with the most correct matches; ties go
/// to the smaller weight.
pub fn fusion_oracle_step(
    motion: &CostMatrix,
    appearance: &CostMatrix,
    track_labels: &[Option<i64>],
    det_labels: &[Option<i64>],
    grid: &[f64],
) -> Result<FusionChoice, AssociationError> {
    let mut best: Option<FusionChoice> = None;
    for &lambda in grid {
        let c = CostMatrix::blend(motion, appearance, lambda)?;
        let assignment = hungarian(&c)?;
        let tally = association_accuracy(track_labels, det_labels, &assignment.pairs());
        if best.as_ref().is_none_or(|b| tally.correct > b.tally.correct) {
            best = Some(FusionChoice {
                lambda,
                assignment,
                tally,
            });
        }
    }
    best.ok_or(AssociationError::Ragged)
}

/// Tracker scorer that hands back the blend chosen by the fusion oracle.
#[derive(Debug, Clone)]
pub struct FusionOracleScorer {
    pub alpha: f64,
    pub kalman: KalmanConfig,
    pub max_cost: f64,
    pub grid: Vec<f64>,
}

impl Default for FusionOracleScorer {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            kalman: KalmanConfig::default(),
            max_cost: 0.9,
            grid: lambda_grid(),
        }
    }
}

impl Scorer for FusionOracleScorer {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], frame: u32) -> Result<CostMatrix, TrackerError> {
        let m = kf_costs(self.kalman, tracklets, dets, frame)?;
        let a = ema_costs(self.alpha, tracklets, dets);
        let tl: Vec<_> = tracklets.iter().map(|t| t.last().gt_identity).collect();
        let dl: Vec<_> = dets.iter().map(|d| d.gt_identity).collect();
        let choice = fusion_oracle_step(&m, &a, &tl, &dl, &self.grid)?;
        Ok(CostMatrix::blend(&m, &a, choice.lambda)?)
    }

    fn gate(&self) -> Gate {
        Gate::MaxCost(self.max_cost)
    }
}
