//! Online tracking loop: confidence filter, scoring, assignment, bank updates and
//! tracklet life cycles.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::association::{
    build_cost_matrix, distance_to_similarity, hungarian, Assignment, AssociationError, CostMatrix,
};
use crate::domain::{Detection, DomainError, TrackRecord, TrackState, Tracklet, APPEARANCE_CUE};
use crate::heuristics::{
    appearance_cost, ema_from_history, fused_cost, kf_predict_from_history, motion_cost, HeuristicError, KalmanConfig,
};
use crate::model::{Camel, ModelError, ObjectSequence};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackerError {
    #[error("frame {frame} does not follow frame {last}")]
    NonMonotonicFrame { frame: u32, last: u32 },
    #[error("invalid lifecycle config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifecycleConfig {
    pub det_conf_min: f64,
    pub init_conf_min: f64,
    pub sim_threshold: f64,
    pub min_hits: u32,
    pub max_pause_frames: u32,
    pub bank_capacity: usize,
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        Self {
            det_conf_min: 0.4,
            init_conf_min: 0.4,
            sim_threshold: 0.1,
            min_hits: 0,
            max_pause_frames: 60,
            bank_capacity: 50,
        }
    }
}

impl LifecycleConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.det_conf_min) || !unit(self.init_conf_min) || !unit(self.sim_threshold) {
            return Err(TrackerError::InvalidConfig("thresholds must lie in [0, 1]"));
        }
        if self.init_conf_min < self.det_conf_min {
            return Err(TrackerError::InvalidConfig(
                "init_conf_min must be at least det_conf_min",
            ));
        }
        if self.max_pause_frames < 1 || self.bank_capacity < 1 {
            return Err(TrackerError::InvalidConfig(
                "max_pause_frames and bank_capacity must be positive",
            ));
        }
        Ok(())
    }
}

/// How a scorer's costs are turned into keep/drop decisions after matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// Costs are embedding distances; keep pairs whose cosine reaches the config threshold.
    Similarity,
    /// Keep pairs with cost at most this value.
    MaxCost(f64),
}

/// Produces the `tracklets × detections` cost matrix for one frame.
pub trait Scorer {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], frame: u32) -> Result<CostMatrix, TrackerError>;
    fn gate(&self) -> Gate;
}

pub struct CamelScorer<'m> {
    pub model: &'m Camel,
}

impl Scorer for CamelScorer<'_> {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], frame: u32) -> Result<CostMatrix, TrackerError> {
        let t_cur = frame as i64;
        let mut objects: Vec<ObjectSequence<'_>> = tracklets
            .iter()
            .map(|t| ObjectSequence::from_detections(t_cur, t.bank.iter()))
            .collect();
        objects.extend(dets.iter().map(|d| ObjectSequence::from_detections(t_cur, [d])));
        let mut z = self.model.embed(&objects)?;
        let det_z = z.split_off(tracklets.len());
        Ok(build_cost_matrix(&z, &det_z)?)
    }

    fn gate(&self) -> Gate {
        Gate::Similarity
    }
}

/// Cosine distance between the EMA of each bank's appearance cue and each detection.
#[derive(Debug, Clone)]
pub struct EmaScorer {
    pub alpha: f64,
    pub max_cost: f64,
}

impl Default for EmaScorer {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            max_cost: 0.9,
        }
    }
}

pub(crate) fn ema_costs(alpha: f64, tracklets: &[Tracklet], dets: &[Detection]) -> CostMatrix {
    let tracks: Vec<_> = tracklets.iter().map(|t| ema_from_history(&t.bank, alpha)).collect();
    let dets: Vec<_> = dets
        .iter()
        .map(|d| d.cue(APPEARANCE_CUE).map(|c| c.values.clone()))
        .collect();
    appearance_cost(&tracks, &dets)
}

pub(crate) fn kf_costs(
    cfg: KalmanConfig,
    tracklets: &[Tracklet],
    dets: &[Detection],
    frame: u32,
) -> Result<CostMatrix, TrackerError> {
    let predicted = tracklets
        .iter()
        .map(|t| kf_predict_from_history(&t.bank, frame, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
    Ok(motion_cost(&predicted, &boxes))
}

impl Scorer for EmaScorer {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], _frame: u32) -> Result<CostMatrix, TrackerError> {
        Ok(ema_costs(self.alpha, tracklets, dets))
    }

    fn gate(&self) -> Gate {
        Gate::MaxCost(self.max_cost)
    }
}

/// `1 - IoU` against the Kalman-predicted box.
#[derive(Debug, Clone)]
pub struct KfScorer {
    pub kalman: KalmanConfig,
    pub max_cost: f64,
}

impl Default for KfScorer {
    fn default() -> Self {
        Self {
            kalman: KalmanConfig::default(),
            max_cost: 0.9,
        }
    }
}

impl Scorer for KfScorer {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], frame: u32) -> Result<CostMatrix, TrackerError> {
        kf_costs(self.kalman, tracklets, dets, frame)
    }

    fn gate(&self) -> Gate {
        Gate::MaxCost(self.max_cost)
    }
}

/// Fixed blend `lambda * motion + (1 - lambda) * appearance`.
#[derive(Debug, Clone)]
pub struct FusedScorer {
    pub lambda: f64,
    pub alpha: f64,
    pub kalman: KalmanConfig,
    pub max_cost: f64,
}

impl Default for FusedScorer {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            alpha: 0.9,
            kalman: KalmanConfig::default(),
            max_cost: 0.9,
        }
    }
}

impl Scorer for FusedScorer {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], frame: u32) -> Result<CostMatrix, TrackerError> {
        let m = kf_costs(self.kalman, tracklets, dets, frame)?;
        let a = ema_costs(self.alpha, tracklets, dets);
        Ok(fused_cost(&m, &a, self.lambda)?)
    }

    fn gate(&self) -> Gate {
        Gate::MaxCost(self.max_cost)
    }
}

/// What happened in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: u32,
    pub candidates: usize,
    pub detections: usize,
    /// `(tracklet identity, detection index after filtering)`.
    pub matches: Vec<(u64, usize)>,
    pub created: usize,
    pub cost: Option<CostMatrix>,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: LifecycleConfig,
    tracklets: Vec<Tracklet>,
    next_id: u64,
    last_frame: Option<u32>,
    pub record_costs: bool,
}

impl Tracker {
    pub fn new(cfg: LifecycleConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracklets: Vec::new(),
            next_id: 1,
            last_frame: None,
            record_costs: false,
        })
    }

    pub fn config(&self) -> &LifecycleConfig {
        &self.cfg
    }

    /// Tracklets that can still be matched.
    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracklets
    }

    fn keep(&self, gate: Gate, cost: f64) -> bool {
        match gate {
            Gate::Similarity => distance_to_similarity(cost) >= self.cfg.sim_threshold,
            Gate::MaxCost(c) => cost <= c,
        }
    }

    /// Processes one frame and returns the confirmed output records for it.
    pub fn step<S: Scorer + ?Sized>(
        &mut self,
        frame: u32,
        dets: &[Detection],
        scorer: &S,
    ) -> Result<(Vec<TrackRecord>, FrameDiagnostics), TrackerError> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackerError::NonMonotonicFrame { frame, last });
            }
        }
        self.last_frame = Some(frame);

        let dets: Vec<Detection> = dets
            .iter()
            .filter(|d| d.confidence >= self.cfg.det_conf_min)
            .cloned()
            .collect();
        let (m, n) = (self.tracklets.len(), dets.len());
        let mut cost = None;
        let assignment = if m > 0 && n > 0 {
            let c = scorer.cost_matrix(&self.tracklets, &dets, frame)?;
            let raw = hungarian(&c)?;
            let gate = scorer.gate();
            let mut a = Assignment::default();
            for mt in raw.matches {
                if self.keep(gate, mt.cost) {
                    a.matches.push(mt);
                } else {
                    a.unmatched_tracks.push(mt.track);
                    a.unmatched_dets.push(mt.det);
                }
            }
            a.unmatched_tracks.extend(raw.unmatched_tracks);
            a.unmatched_dets.extend(raw.unmatched_dets);
            a.unmatched_dets.sort_unstable();
            if self.record_costs {
                cost = Some(c);
            }
            a
        } else {
            Assignment {
                matches: Vec::new(),
                unmatched_tracks: (0..m).collect(),
                unmatched_dets: (0..n).collect(),
            }
        };

        let mut out = Vec::new();
        let mut matched = alloc::vec![false; m];
        let mut diag_matches = Vec::with_capacity(assignment.matches.len());
        for mt in &assignment.matches {
            matched[mt.track] = true;
            let t = &mut self.tracklets[mt.track];
            let d = dets[mt.det].clone();
            t.bank_push(d, self.cfg.bank_capacity)?;
            t.hits += 1;
            t.state = match t.state {
                TrackState::Tentative if t.hits >= self.cfg.min_hits => TrackState::Active,
                TrackState::Tentative => TrackState::Tentative,
                _ => TrackState::Active,
            };
            diag_matches.push((t.identity, mt.det));
            if t.state == TrackState::Active {
                out.push(record(frame, t.identity, &dets[mt.det]));
            }
        }

        for (i, t) in self.tracklets.iter_mut().enumerate() {
            if matched[i] {
                continue;
            }
            t.state = match t.state {
                TrackState::Tentative => TrackState::Terminated,
                _ if frame - t.last_matched_frame > self.cfg.max_pause_frames => TrackState::Terminated,
                _ => TrackState::Paused,
            };
        }
        self.tracklets.retain(|t| t.state != TrackState::Terminated);

        let mut created = 0;
        for &j in &assignment.unmatched_dets {
            let d = &dets[j];
            if d.confidence < self.cfg.init_conf_min {
                continue;
            }
            let state = if self.cfg.min_hits == 0 {
                TrackState::Active
            } else {
                TrackState::Tentative
            };
            let id = self.next_id;
            self.next_id += 1;
            self.tracklets.push(Tracklet::new(id, d.clone(), state));
            created += 1;
            if state == TrackState::Active {
                out.push(record(frame, id, d));
            }
        }
        out.sort_by_key(|r| r.id);

        let diag = FrameDiagnostics {
            frame,
            candidates: m,
            detections: n,
            matches: diag_matches,
            created,
            cost,
        };
        Ok((out, diag))
    }
}

fn record(frame: u32, id: u64, d: &Detection) -> TrackRecord {
    TrackRecord {
        frame,
        id: id as i64,
        bbox: d.bbox,
        confidence: d.confidence,
    }
}

#[derive(Debug, Clone, Default)]
pub struct SequenceOutput {
    /// Sorted by `(frame, id)`.
    pub records: Vec<TrackRecord>,
    pub diagnostics: Vec<FrameDiagnostics>,
}

/// Runs a fresh tracker over `frames`, which must be in increasing frame order.
pub fn run_sequence<S: Scorer + ?Sized>(
    frames: &[(u32, Vec<Detection>)],
    scorer: &S,
    cfg: &LifecycleConfig,
    record_costs: bool,
) -> Result<SequenceOutput, TrackerError> {
    let mut tracker = Tracker::new(cfg.clone())?;
    tracker.record_costs = record_costs;
    let mut out = SequenceOutput::default();
    for (frame, dets) in frames {
        let (records, diag) = tracker.step(*frame, dets, scorer)?;
        out.records.extend(records);
        out.diagnostics.push(diag);
    }
    Ok(out)
}
