use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{TrainError, TrainingStore};
use crate::domain::{encode_box_cue, CueTensor, Detection, APPEARANCE_CUE};
use crate::heuristics::{ema_from_history, kf_predict_from_history, KalmanConfig};
use crate::model::{CueMask, ObjectSequence, Step};

/// A tracklet inside a scenario. `label` is namespaced by `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTracklet {
    pub source: usize,
    pub label: i64,
    pub t_cur: i64,
    /// Oldest first; each entry keeps its own (namespaced) label.
    pub bank: Vec<Detection>,
    pub masks: Vec<CueMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDetection {
    pub source: usize,
    pub label: Option<i64>,
    pub t_cur: i64,
    pub det: Detection,
    pub mask: CueMask,
}

/// Tracklets and current detections drawn from one or more source frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub tracklets: Vec<ScenarioTracklet>,
    pub detections: Vec<ScenarioDetection>,
}

fn namespaced(draw: usize, label: i64) -> i64 {
    ((draw as i64) << 32) | (label & 0xffff_ffff)
}

impl Scenario {
    /// Builds the scenario part for frame `index` of `video`, namespacing labels by `draw`.
    pub fn from_frame(
        store: &TrainingStore,
        video: usize,
        index: usize,
        capacity: usize,
        max_age: u32,
        draw: usize,
    ) -> Self {
        let v = &store.videos[video];
        let f = &v.frames[index];
        let t_cur = f.frame as i64;
        let relabel = |d: &Detection| {
            let mut d = d.clone();
            d.gt_identity = d.gt_identity.map(|l| namespaced(draw, l));
            d
        };
        let tracklets = v
            .histories(index, capacity, max_age)
            .into_iter()
            .map(|(label, bank)| ScenarioTracklet {
                source: draw,
                label: namespaced(draw, label),
                t_cur,
                masks: alloc::vec![CueMask::NONE; bank.len()],
                bank: bank.into_iter().map(relabel).collect(),
            })
            .collect();
        let detections = f
            .detections
            .iter()
            .map(|d| ScenarioDetection {
                source: draw,
                label: d.gt_identity.map(|l| namespaced(draw, l)),
                t_cur,
                det: relabel(d),
                mask: CueMask::NONE,
            })
            .collect();
        Self { tracklets, detections }
    }

    /// Index of the detection sharing each tracklet's label.
    pub fn targets(&self) -> Vec<Option<usize>> {
        self.tracklets
            .iter()
            .map(|t| self.detections.iter().position(|d| d.label == Some(t.label)))
            .collect()
    }

    pub fn pairs(&self) -> usize {
        self.targets().iter().flatten().count()
    }

    /// Model inputs: tracklets first, then detections.
    pub fn objects<'a>(&'a self, mode: &InputMode, summaries: &'a [Detection]) -> Vec<ObjectSequence<'a>> {
        let mut out = Vec::with_capacity(self.tracklets.len() + self.detections.len());
        match mode {
            InputMode::Full => {
                for t in &self.tracklets {
                    out.push(ObjectSequence {
                        t_cur: t.t_cur,
                        steps: t
                            .bank
                            .iter()
                            .zip(&t.masks)
                            .map(|(d, &mask)| Step {
                                frame: d.frame as i64,
                                cues: &d.cues,
                                mask,
                            })
                            .collect(),
                    });
                }
            }
            InputMode::Summary(_) => {
                for (t, s) in self.tracklets.iter().zip(summaries) {
                    out.push(ObjectSequence::from_detections(t.t_cur, [s]));
                }
            }
        }
        for d in &self.detections {
            out.push(ObjectSequence {
                t_cur: d.t_cur,
                steps: alloc::vec![Step {
                    frame: d.det.frame as i64,
                    cues: &d.det.cues,
                    mask: d.mask,
                }],
            });
        }
        out
    }

    fn absorb(&mut self, mut part: Scenario, budget: usize) {
        // keep at most `budget` paired tracklets; unpaired ones stay as context
        let targets = part.targets();
        let mut kept = 0;
        let mut keep = Vec::with_capacity(part.tracklets.len());
        for t in &targets {
            let k = t.is_none() || kept < budget;
            if t.is_some() && k {
                kept += 1;
            }
            keep.push(k);
        }
        let mut i = 0;
        part.tracklets.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.tracklets.extend(part.tracklets);
        self.detections.extend(part.detections);
    }
}

/// Frame-level summary tracklets: EMA appearance and the Kalman-predicted box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryInputs {
    pub alpha: f64,
    pub kalman: KalmanConfig,
    pub image_w: f64,
    pub image_h: f64,
}

impl SummaryInputs {
    /// One synthetic detection at `t_cur` standing for the whole bank.
    pub fn summarize(&self, bank: &[Detection], t_cur: i64) -> Detection {
        let last = bank.last().expect("banks are never empty");
        let bbox = kf_predict_from_history(bank, t_cur as u32, self.kalman).unwrap_or(last.bbox);
        let mut d = Detection::new(t_cur as u32, bbox, last.confidence);
        if let Ok(c) = encode_box_cue(&d, self.image_w, self.image_h) {
            d = d.with_cue(c);
        } else if let Some(c) = last.cue(0) {
            d = d.with_cue(c.clone());
        }
        if let Some(app) = ema_from_history(bank, self.alpha) {
            d = d.with_cue(CueTensor::new(APPEARANCE_CUE, app));
        }
        d.gt_identity = last.gt_identity;
        d
    }
}

/// How tracklets are presented to the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputMode {
    /// The full bank through the temporal encoders.
    Full,
    /// A single heuristic summary per tracklet.
    Summary(SummaryInputs),
}

impl InputMode {
    pub fn summaries(&self, s: &Scenario) -> Vec<Detection> {
        match self {
            InputMode::Full => Vec::new(),
            InputMode::Summary(cfg) => s.tracklets.iter().map(|t| cfg.summarize(&t.bank, t.t_cur)).collect(),
        }
    }
}

/// Draws frames from distinct videos (cycling once every video was used) until the
/// scenario holds `pairs` tracklet-detection pairs.
pub fn sample_scenario(
    store: &TrainingStore,
    pairs: usize,
    capacity: usize,
    max_age: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Scenario, TrainError> {
    let eligible: Vec<Vec<usize>> = store
        .videos
        .iter()
        .map(|v| (0..v.frames.len()).filter(|&i| v.has_pair(i, max_age)).collect())
        .collect();
    let mut candidates: Vec<usize> = (0..store.videos.len()).filter(|&v| !eligible[v].is_empty()).collect();
    if candidates.is_empty() {
        return Err(TrainError::InsufficientData);
    }
    let all = candidates.clone();
    let mut s = Scenario::default();
    let mut draw = 0;
    while s.pairs() < pairs {
        if candidates.is_empty() {
            candidates = all.clone();
        }
        let video = candidates.swap_remove(rng.random_range(0..candidates.len()));
        let frames = &eligible[video];
        let index = frames[rng.random_range(0..frames.len())];
        let part = Scenario::from_frame(store, video, index, capacity, max_age, draw);
        let budget = pairs - s.pairs();
        s.absorb(part, budget);
        draw += 1;
    }
    Ok(s)
}
