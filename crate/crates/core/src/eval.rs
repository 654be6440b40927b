//! Frame-level association benchmark on ground-truth tracklet states, plus the
//! extra scorers used by the ablation table.

use alloc::vec::Vec;

use crate::association::{build_cost_matrix, hungarian, CostMatrix};
use crate::domain::{Detection, TrackState, Tracklet};
use crate::metrics::{association_accuracy, Tally};
use crate::model::{Camel, ObjectSequence};
use crate::tracker::{Gate, Scorer, TrackerError};
use crate::train::{SummaryInputs, Video};

/// Ground-truth tracklets and all detections of one frame.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    pub frame: u32,
    pub tracklets: Vec<Tracklet>,
    pub detections: Vec<Detection>,
}

impl EvalFrame {
    pub fn track_labels(&self) -> Vec<Option<i64>> {
        self.tracklets.iter().map(|t| t.last().gt_identity).collect()
    }

    pub fn det_labels(&self) -> Vec<Option<i64>> {
        self.detections.iter().map(|d| d.gt_identity).collect()
    }
}

/// Per frame: one tracklet per identity seen within `max_age` frames, holding its
/// last `capacity` labelled detections. Frames without tracklets or detections are skipped.
pub fn gt_states(video: &Video, capacity: usize, max_age: u32) -> Vec<EvalFrame> {
    let mut out = Vec::new();
    for (index, f) in video.frames.iter().enumerate() {
        if f.detections.is_empty() {
            continue;
        }
        let tracklets: Vec<Tracklet> = video
            .histories(index, capacity, max_age)
            .into_iter()
            .map(|(label, bank)| {
                let mut t = Tracklet::new(label as u64, bank[0].clone(), TrackState::Active);
                for d in &bank[1..] {
                    t.bank.push((*d).clone());
                }
                t.last_matched_frame = t.last().frame;
                t
            })
            .collect();
        if tracklets.is_empty() {
            continue;
        }
        out.push(EvalFrame {
            frame: f.frame,
            tracklets,
            detections: f.detections.clone(),
        });
    }
    out
}

/// Ungated optimal assignment on `scorer`'s costs, scored against the labels.
pub fn frame_accuracy<S: Scorer + ?Sized>(scorer: &S, f: &EvalFrame) -> Result<Tally, TrackerError> {
    let c = scorer.cost_matrix(&f.tracklets, &f.detections, f.frame)?;
    let a = hungarian(&c)?;
    Ok(association_accuracy(&f.track_labels(), &f.det_labels(), &a.pairs()))
}

/// Micro-averaged accuracy over all frames.
pub fn association_benchmark<S: Scorer + ?Sized>(scorer: &S, frames: &[EvalFrame]) -> Result<Tally, TrackerError> {
    let mut total = Tally::default();
    for f in frames {
        total.add(frame_accuracy(scorer, f)?);
    }
    Ok(total)
}

fn cosine_costs(z: Vec<Option<Vec<f64>>>, n_tracks: usize) -> Result<CostMatrix, TrackerError> {
    // objects missing the cue cost 1 against everything
    let (tracks, dets) = z.split_at(n_tracks);
    let mut data = Vec::with_capacity(tracks.len() * dets.len());
    for t in tracks {
        for d in dets {
            data.push(match (t, d) {
                (Some(t), Some(d)) => build_cost_matrix(core::slice::from_ref(t), core::slice::from_ref(d))?.get(0, 0),
                _ => 1.0,
            });
        }
    }
    Ok(CostMatrix::new(tracks.len(), dets.len(), data)?)
}

/// One temporal encoder alone: cosine distance between normalised CLS outputs.
pub struct SingleCueScorer<'m> {
    pub model: &'m Camel,
    pub cue: usize,
}

impl Scorer for SingleCueScorer<'_> {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], frame: u32) -> Result<CostMatrix, TrackerError> {
        let t_cur = frame as i64;
        let mut objects: Vec<ObjectSequence<'_>> = tracklets
            .iter()
            .map(|t| ObjectSequence::from_detections(t_cur, t.bank.iter()))
            .collect();
        objects.extend(dets.iter().map(|d| ObjectSequence::from_detections(t_cur, [d])));
        let mut tape = crate::diffcore::Tape::new();
        let bound = self.model.bind(&mut tape, false);
        let mut z = Vec::with_capacity(objects.len());
        for o in &objects {
            if !o.has_cue(self.cue) {
                z.push(None);
                continue;
            }
            let cls = self.model.encode_cue_sequence(&mut tape, &bound, self.cue, o)?;
            let n = tape.l2_normalize_lastdim(cls).map_err(crate::model::ModelError::from)?;
            z.push(Some(tape.value(n).data().to_vec()));
        }
        cosine_costs(z, tracklets.len())
    }

    fn gate(&self) -> Gate {
        Gate::Similarity
    }
}

/// The network fed one heuristic summary per tracklet instead of its bank.
pub struct SummaryCamelScorer<'m> {
    pub model: &'m Camel,
    pub inputs: SummaryInputs,
}

impl Scorer for SummaryCamelScorer<'_> {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], frame: u32) -> Result<CostMatrix, TrackerError> {
        let t_cur = frame as i64;
        let summaries: Vec<Detection> = tracklets
            .iter()
            .map(|t| self.inputs.summarize(&t.bank, t_cur))
            .collect();
        let mut objects: Vec<ObjectSequence<'_>> = summaries
            .iter()
            .map(|s| ObjectSequence::from_detections(t_cur, [s]))
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

/// Zero cost for matching labels, one otherwise.
pub struct LabelScorer;

impl Scorer for LabelScorer {
    fn cost_matrix(&self, tracklets: &[Tracklet], dets: &[Detection], _frame: u32) -> Result<CostMatrix, TrackerError> {
        let data = tracklets
            .iter()
            .flat_map(|t| {
                let l = t.last().gt_identity;
                dets.iter()
                    .map(move |d| if l.is_some() && d.gt_identity == l { 0.0 } else { 1.0 })
            })
            .collect();
        Ok(CostMatrix::new(tracklets.len(), dets.len(), data)?)
    }

    fn gate(&self) -> Gate {
        Gate::MaxCost(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::FusionOracleScorer;
    use crate::synth::{generate, SynthConfig};
    use crate::tracker::{EmaScorer, FusedScorer, KfScorer};
    use crate::train::preprocess;
    use alloc::string::String;

    fn video(cfg: &SynthConfig) -> Video {
        let s = generate(cfg).unwrap().remove(0);
        preprocess(String::from("v"), &s.gt, s.detections).unwrap()
    }

    #[test]
    fn states_hold_only_past_labelled_detections() {
        let v = video(&SynthConfig {
            n_frames: 30,
            ..SynthConfig::default()
        });
        let frames = gt_states(&v, 5, 10);
        assert!(!frames.is_empty());
        for f in &frames {
            for t in &f.tracklets {
                assert!(t.bank.len() <= 5);
                assert!(t
                    .bank
                    .iter()
                    .all(|d| d.frame < f.frame && d.gt_identity == Some(t.identity as i64)));
                assert!(f.frame - t.last().frame <= 10);
            }
        }
    }

    #[test]
    fn label_scorer_is_perfect() {
        let v = video(&SynthConfig::default());
        let frames = gt_states(&v, 10, 30);
        assert_eq!(
            association_benchmark(&LabelScorer, &frames).unwrap().fraction(),
            Some(1.0)
        );
    }

    #[test]
    fn noiseless_motion_is_nearly_perfect() {
        let v = video(&SynthConfig {
            box_noise: 0.0,
            false_positive_rate: 0.0,
            occlusion_rate: 0.0,
            reentry_rate: 0.0,
            motion: crate::synth::MotionModel::Linear,
            ..SynthConfig::default()
        });
        let frames = gt_states(&v, 10, 30);
        let acc = association_benchmark(&KfScorer::default(), &frames)
            .unwrap()
            .fraction()
            .unwrap();
        assert!(acc > 0.99, "{acc}");
    }

    #[test]
    fn fusion_oracle_dominates_fixed_blend_per_frame() {
        let v = video(&SynthConfig {
            n_objects: 10,
            ..SynthConfig::default()
        });
        let frames = gt_states(&v, 10, 30);
        let oracle = FusionOracleScorer::default();
        for f in &frames {
            let o = frame_accuracy(&oracle, f).unwrap().correct;
            for l in crate::oracles::lambda_grid() {
                let fixed = FusedScorer {
                    lambda: l,
                    ..FusedScorer::default()
                };
                assert!(o >= frame_accuracy(&fixed, f).unwrap().correct);
            }
            let _ = frame_accuracy(&EmaScorer::default(), f).unwrap();
        }
    }
}
