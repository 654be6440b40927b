use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Scenario, TrainError};
use crate::domain::{APPEARANCE_CUE, BOX_CUE, KEYPOINT_CUE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Per overlapping frame pair of two tracklets.
    pub p_swap: f64,
    /// Drop probability of the most recent bank entry.
    pub p_drop: f64,
    pub recency_exponent: f64,
    pub p_cue_drop: f64,
    pub sigma_box: f64,
    pub sigma_appearance: f64,
    pub sigma_keypoint: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            p_swap: 0.3,
            p_drop: 0.5,
            recency_exponent: 2.0,
            p_cue_drop: 0.1,
            sigma_box: 0.01,
            sigma_appearance: 0.05,
            sigma_keypoint: 0.02,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let probs = [self.p_swap, self.p_drop, self.p_cue_drop];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(TrainError::InvalidConfig(
                "augmentation probabilities must lie in [0, 1]",
            ));
        }
        let sigmas = [
            self.sigma_box,
            self.sigma_appearance,
            self.sigma_keypoint,
            self.recency_exponent,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(TrainError::InvalidConfig(
                "noise scales and exponent must be finite and non-negative",
            ));
        }
        Ok(())
    }

    /// Sets one numeric field by name, as used by grid search.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), TrainError> {
        let slot = match name {
            "p_swap" => &mut self.p_swap,
            "p_drop" => &mut self.p_drop,
            "recency_exponent" => &mut self.recency_exponent,
            "p_cue_drop" => &mut self.p_cue_drop,
            "sigma_box" => &mut self.sigma_box,
            "sigma_appearance" => &mut self.sigma_appearance,
            "sigma_keypoint" => &mut self.sigma_keypoint,
            _ => return Err(TrainError::InvalidConfig("unknown augmentation parameter")),
        };
        *slot = value;
        self.validate()
    }
}

/// Exchanges bank entry `a` of tracklet `i` with entry `b` of tracklet `j`.
pub fn swap_detections(s: &mut Scenario, i: usize, a: usize, j: usize, b: usize) {
    assert_ne!(i, j, "swap needs two tracklets");
    let (lo, hi, la, lb) = if i < j { (i, j, a, b) } else { (j, i, b, a) };
    let (left, right) = s.tracklets.split_at_mut(hi);
    core::mem::swap(&mut left[lo].bank[la], &mut right[0].bank[lb]);
    core::mem::swap(&mut left[lo].masks[la], &mut right[0].masks[lb]);
}

/// Swaps same-frame, overlapping bank entries between tracklets of the same draw.
pub fn augment_identity_swap<R: Rng + ?Sized>(s: &mut Scenario, p: f64, rng: &mut R) {
    let n = s.tracklets.len();
    for i in 0..n {
        for j in i + 1..n {
            if s.tracklets[i].source != s.tracklets[j].source {
                continue;
            }
            let mut candidates = Vec::new();
            for (a, da) in s.tracklets[i].bank.iter().enumerate() {
                if let Some(b) = s.tracklets[j].bank.iter().position(|db| db.frame == da.frame) {
                    if da.bbox.iou(&s.tracklets[j].bank[b].bbox) > 0.0 {
                        candidates.push((a, b));
                    }
                }
            }
            for (a, b) in candidates {
                if rng.random_bool(p) {
                    swap_detections(s, i, a, j, b);
                }
            }
        }
    }
}

/// `p * ((span - age) / span)^e`; the oldest entry is never dropped.
pub fn drop_probability(p: f64, exponent: f64, age: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    p * libm::pow(((span - age) / span).clamp(0.0, 1.0), exponent)
}

/// Removes bank entries, recent ones more often.
pub fn augment_detection_dropout<R: Rng + ?Sized>(s: &mut Scenario, p: f64, exponent: f64, rng: &mut R) {
    for t in &mut s.tracklets {
        let Some(oldest) = t.bank.first().map(|d| d.frame as i64) else {
            continue;
        };
        let span = (t.t_cur - oldest) as f64;
        let keep: Vec<bool> = t
            .bank
            .iter()
            .map(|d| {
                let age = (t.t_cur - d.frame as i64) as f64;
                !rng.random_bool(drop_probability(p, exponent, age, span))
            })
            .collect();
        if !keep.iter().any(|&k| k) {
            t.bank.truncate(1);
            t.masks.truncate(1);
            continue;
        }
        let mut k = keep.iter();
        t.bank.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        t.masks.retain(|_| *k.next().unwrap());
    }
}

/// Hides non-box cues per step.
pub fn augment_cue_dropout<R: Rng + ?Sized>(s: &mut Scenario, p: f64, rng: &mut R) {
    let mut hide = |cues: &alloc::collections::BTreeMap<usize, crate::domain::CueTensor>,
                    mask: &mut crate::model::CueMask| {
        for &cue in cues.keys() {
            if cue != BOX_CUE && rng.random_bool(p) {
                mask.insert(cue);
            }
        }
    };
    for t in &mut s.tracklets {
        for (d, m) in t.bank.iter().zip(t.masks.iter_mut()) {
            hide(&d.cues, m);
        }
    }
    for d in &mut s.detections {
        hide(&d.det.cues, &mut d.mask);
    }
}

fn jitter<R: Rng + ?Sized>(
    cues: &mut alloc::collections::BTreeMap<usize, crate::domain::CueTensor>,
    cfg: &AugmentConfig,
    rng: &mut R,
) {
    let mut noise = |sigma: f64| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    };
    if let Some(c) = cues.get_mut(&BOX_CUE) {
        for v in c.values.iter_mut().take(4) {
            *v += noise(cfg.sigma_box);
        }
    }
    if let Some(c) = cues.get_mut(&APPEARANCE_CUE) {
        for v in &mut c.values {
            *v += noise(cfg.sigma_appearance);
        }
    }
    if let Some(c) = cues.get_mut(&KEYPOINT_CUE) {
        for joint in c.values.chunks_mut(3) {
            for v in joint.iter_mut().take(2) {
                *v += noise(cfg.sigma_keypoint);
            }
        }
    }
}

/// Gaussian noise on box geometry, appearance and keypoint coordinates.
pub fn augment_perturb<R: Rng + ?Sized>(s: &mut Scenario, cfg: &AugmentConfig, rng: &mut R) {
    for t in &mut s.tracklets {
        for d in &mut t.bank {
            jitter(&mut d.cues, cfg, rng);
        }
    }
    for d in &mut s.detections {
        jitter(&mut d.det.cues, cfg, rng);
    }
}

pub fn augment<R: Rng + ?Sized>(s: &mut Scenario, cfg: &AugmentConfig, rng: &mut R) {
    if !cfg.enabled {
        return;
    }
    augment_identity_swap(s, cfg.p_swap, rng);
    augment_detection_dropout(s, cfg.p_drop, cfg.recency_exponent, rng);
    augment_cue_dropout(s, cfg.p_cue_drop, rng);
    augment_perturb(s, cfg, rng);
}
