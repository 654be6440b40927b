//! Seeded synthetic tracking sequences with box, appearance and keypoint cues.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{encode_box_cue, encode_keypoint_cue, BBox, CueTensor, Detection, TrackRecord, APPEARANCE_CUE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    ConfigInvalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    Linear,
    Sinusoidal,
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_sequences: usize,
    pub n_objects: usize,
    pub n_frames: u32,
    pub image_w: f64,
    pub image_h: f64,
    pub motion: MotionModel,
    /// Typical speed in pixels per frame.
    pub speed: f64,
    /// Per identity and frame, chance that a short occlusion starts.
    pub occlusion_rate: f64,
    pub occlusion_len: u32,
    /// Per identity and frame, chance of leaving the scene and coming back later.
    pub reentry_rate: f64,
    pub reentry_len: u32,
    pub appearance_dim: usize,
    /// Identities are drawn around this many shared centres.
    pub appearance_groups: usize,
    /// Spread of identity means around their group centre; smaller is harder.
    pub appearance_separation: f64,
    pub appearance_noise: f64,
    pub keypoint_joints: usize,
    pub keypoint_noise: f64,
    /// Box jitter relative to box size.
    pub box_noise: f64,
    pub miss_rate: f64,
    /// Expected false positives per frame.
    pub false_positive_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sequences: 1,
            n_objects: 8,
            n_frames: 120,
            image_w: 1280.0,
            image_h: 720.0,
            motion: MotionModel::Sinusoidal,
            speed: 4.0,
            occlusion_rate: 0.01,
            occlusion_len: 6,
            reentry_rate: 0.003,
            reentry_len: 30,
            appearance_dim: 16,
            appearance_groups: 2,
            appearance_separation: 0.6,
            appearance_noise: 0.3,
            keypoint_joints: 4,
            keypoint_noise: 0.05,
            box_noise: 0.02,
            miss_rate: 0.03,
            false_positive_rate: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if ![self.occlusion_rate, self.reentry_rate, self.miss_rate]
            .into_iter()
            .all(unit)
        {
            return Err(SynthError::ConfigInvalid("rates must lie in [0, 1]"));
        }
        if self.n_objects == 0 || self.n_frames == 0 || self.n_sequences == 0 {
            return Err(SynthError::ConfigInvalid("counts must be positive"));
        }
        if !(self.image_w > 0.0 && self.image_h > 0.0) {
            return Err(SynthError::ConfigInvalid("image size must be positive"));
        }
        if self.appearance_dim == 0 || self.appearance_groups == 0 || self.keypoint_joints == 0 {
            return Err(SynthError::ConfigInvalid("cue dimensions must be positive"));
        }
        let nonneg = [
            self.speed,
            self.appearance_separation,
            self.appearance_noise,
            self.keypoint_noise,
            self.box_noise,
            self.false_positive_rate,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SynthError::ConfigInvalid(
                "noise levels and speeds must be non-negative",
            ));
        }
        Ok(())
    }

    /// Cue widths as `(cue id, width)`.
    pub fn cue_widths(&self) -> [(usize, usize); 3] {
        [(0, 5), (1, self.appearance_dim), (2, 3 * self.keypoint_joints)]
    }
}

/// One generated video: visible ground truth plus detector output with cues.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub name: String,
    pub image_w: f64,
    pub image_h: f64,
    pub n_frames: u32,
    pub gt: Vec<TrackRecord>,
    /// Frame order; within a frame the order is shuffled. Labels are set for true detections.
    pub detections: Vec<Detection>,
}

impl SynthSequence {
    /// Every frame `1..=n_frames` with its detections, empty frames included.
    pub fn frames(&self) -> Vec<(u32, Vec<Detection>)> {
        group_by_frame(&self.detections, self.n_frames)
    }
}

pub fn group_by_frame(dets: &[Detection], n_frames: u32) -> Vec<(u32, Vec<Detection>)> {
    let last = dets.iter().map(|d| d.frame).max().unwrap_or(0).max(n_frames);
    let mut frames: Vec<(u32, Vec<Detection>)> = (1..=last).map(|f| (f, Vec::new())).collect();
    for d in dets {
        if d.frame >= 1 {
            frames[d.frame as usize - 1].1.push(d.clone());
        }
    }
    frames
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum());
    if n == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / n).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    unit((0..dim).map(|_| gaussian(rng)).collect())
}

struct Identity {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    w: f64,
    h: f64,
    phase: f64,
    omega: f64,
    amp: f64,
    base_y: f64,
    appearance: Vec<f64>,
    joints: Vec<(f64, f64)>,
    hidden_until: u32,
}

/// Generates `cfg.n_sequences` sequences; sequence `i` draws from ChaCha stream `i`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSequence>, SynthError> {
    cfg.validate()?;
    Ok((0..cfg.n_sequences).map(|i| generate_one(cfg, i)).collect())
}

fn generate_one(cfg: &SynthConfig, index: usize) -> SynthSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (iw, ih) = (cfg.image_w, cfg.image_h);
    let centres: Vec<Vec<f64>> = (0..cfg.appearance_groups)
        .map(|_| random_unit(&mut rng, cfg.appearance_dim))
        .collect();

    let mut ids: Vec<Identity> = (0..cfg.n_objects)
        .map(|i| {
            let w = rng.random_range(0.04..0.08) * iw;
            let h = w * rng.random_range(2.0..2.6);
            let angle = rng.random_range(0.0..core::f64::consts::TAU);
            let speed = cfg.speed * rng.random_range(0.5..1.5);
            let centre = &centres[i % cfg.appearance_groups];
            let appearance = unit(
                centre
                    .iter()
                    .map(|c| c + cfg.appearance_separation * gaussian(&mut rng) / libm::sqrt(cfg.appearance_dim as f64))
                    .collect(),
            );
            let joints = (0..cfg.keypoint_joints)
                .map(|_| (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)))
                .collect();
            let cy = rng.random_range(0.2..0.8) * ih;
            Identity {
                cx: rng.random_range(0.1..0.9) * iw,
                cy,
                vx: speed * libm::cos(angle),
                vy: speed * libm::sin(angle),
                w,
                h,
                phase: rng.random_range(0.0..core::f64::consts::TAU),
                omega: rng.random_range(0.02..0.08),
                amp: rng.random_range(0.05..0.15) * ih,
                base_y: cy,
                appearance,
                joints,
                hidden_until: 0,
            }
        })
        .collect();

    let mut gt = Vec::new();
    let mut detections = Vec::new();
    for frame in 1..=cfg.n_frames {
        let mut frame_dets = Vec::new();
        for (i, id) in ids.iter_mut().enumerate() {
            if frame > 1 {
                advance(id, cfg, frame, &mut rng);
            }
            if id.hidden_until < frame {
                if rng.random_bool(cfg.reentry_rate) {
                    id.hidden_until = frame + cfg.reentry_len;
                } else if rng.random_bool(cfg.occlusion_rate) {
                    id.hidden_until = frame + cfg.occlusion_len;
                }
            }
            if id.hidden_until >= frame {
                continue;
            }
            let truth = BBox::from_center(id.cx, id.cy, id.w, id.h);
            gt.push(TrackRecord {
                frame,
                id: i as i64 + 1,
                bbox: truth,
                confidence: 1.0,
            });
            if rng.random_bool(cfg.miss_rate) {
                continue;
            }
            let jitter = |rng: &mut ChaCha8Rng, scale: f64| cfg.box_noise * scale * gaussian(rng);
            let observed = BBox::from_center(
                id.cx + jitter(&mut rng, id.w),
                id.cy + jitter(&mut rng, id.h),
                (id.w + jitter(&mut rng, id.w)).max(2.0),
                (id.h + jitter(&mut rng, id.h)).max(2.0),
            );
            let confidence = if cfg.box_noise == 0.0 {
                1.0
            } else {
                rng.random_range(0.5..1.0)
            };
            let app_noise = cfg.appearance_noise / libm::sqrt(cfg.appearance_dim as f64);
            let app = unit(
                id.appearance
                    .iter()
                    .map(|a| a + app_noise * gaussian(&mut rng))
                    .collect(),
            );
            let joints: Vec<(f64, f64, f64)> = id
                .joints
                .iter()
                .map(|&(jx, jy)| {
                    let jx = jx + cfg.keypoint_noise * gaussian(&mut rng);
                    let jy = jy + cfg.keypoint_noise * gaussian(&mut rng);
                    (observed.x + jx * observed.w, observed.y + jy * observed.h, 1.0)
                })
                .collect();
            let mut d = Detection::new(frame, observed, confidence);
            d.gt_identity = Some(i as i64 + 1);
            frame_dets.push(with_cues(d, app, &joints, cfg));
        }
        let n_fp = poisson(&mut rng, cfg.false_positive_rate);
        for _ in 0..n_fp {
            let w = rng.random_range(0.03..0.08) * iw;
            let h = w * rng.random_range(1.0..2.6);
            let b = BBox::from_center(
                rng.random_range(0.05..0.95) * iw,
                rng.random_range(0.05..0.95) * ih,
                w,
                h,
            );
            let app = random_unit(&mut rng, cfg.appearance_dim);
            let joints: Vec<(f64, f64, f64)> = (0..cfg.keypoint_joints)
                .map(|_| {
                    (
                        b.x + rng.random_range(0.0..1.0) * b.w,
                        b.y + rng.random_range(0.0..1.0) * b.h,
                        rng.random_range(0.0..1.0),
                    )
                })
                .collect();
            let d = Detection::new(frame, b, rng.random_range(0.4..0.7));
            frame_dets.push(with_cues(d, app, &joints, cfg));
        }
        frame_dets.shuffle(&mut rng);
        detections.extend(frame_dets);
    }
    SynthSequence {
        name: format!("synth-{:03}", index),
        image_w: iw,
        image_h: ih,
        n_frames: cfg.n_frames,
        gt,
        detections,
    }
}

fn with_cues(d: Detection, app: Vec<f64>, joints: &[(f64, f64, f64)], cfg: &SynthConfig) -> Detection {
    let box_cue = encode_box_cue(&d, cfg.image_w, cfg.image_h).expect("generated boxes are valid");
    let kp = encode_keypoint_cue(joints, &d.bbox, cfg.keypoint_joints).expect("joint count fixed by config");
    d.with_cue(box_cue)
        .with_cue(CueTensor::new(APPEARANCE_CUE, app))
        .with_cue(kp)
}

fn advance(id: &mut Identity, cfg: &SynthConfig, frame: u32, rng: &mut ChaCha8Rng) {
    let (iw, ih) = (cfg.image_w, cfg.image_h);
    match cfg.motion {
        MotionModel::Linear => {
            id.cx += id.vx;
            id.cy += id.vy;
        }
        MotionModel::Sinusoidal => {
            id.cx += id.vx;
            id.cy = id.base_y + id.amp * libm::sin(id.omega * frame as f64 + id.phase);
        }
        MotionModel::RandomWalk => {
            id.vx += 0.3 * cfg.speed * gaussian(rng);
            id.vy += 0.3 * cfg.speed * gaussian(rng);
            let s = libm::sqrt(id.vx * id.vx + id.vy * id.vy);
            let cap = 1.5 * cfg.speed;
            if s > cap {
                id.vx *= cap / s;
                id.vy *= cap / s;
            }
            id.cx += id.vx;
            id.cy += id.vy;
        }
    }
    // bounce off the image border
    let (lo_x, hi_x) = (id.w / 2.0, iw - id.w / 2.0);
    if id.cx < lo_x || id.cx > hi_x {
        id.vx = -id.vx;
        id.cx = id.cx.clamp(lo_x, hi_x);
    }
    let (lo_y, hi_y) = (id.h / 2.0, ih - id.h / 2.0);
    if id.cy < lo_y || id.cy > hi_y {
        id.vy = -id.vy;
        id.cy = id.cy.clamp(lo_y, hi_y);
        id.base_y = id.base_y.clamp(lo_y + id.amp, (hi_y - id.amp).max(lo_y + id.amp));
    }
}

// Knuth's method; rates here are small.
fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let l = libm::exp(-lambda);
    let mut k = 0;
    let mut p = 1.0;
    loop {
        p *= rng.random::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;

    fn clean() -> SynthConfig {
        SynthConfig {
            box_noise: 0.0,
            appearance_noise: 0.0,
            keypoint_noise: 0.0,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            n_frames: 40,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_detections_equal_gt() {
        let s = &generate(&clean()).unwrap()[0];
        let mut dets: Vec<TrackRecord> = s
            .detections
            .iter()
            .map(|d| TrackRecord {
                frame: d.frame,
                id: d.gt_identity.unwrap(),
                bbox: d.bbox,
                confidence: d.confidence,
            })
            .collect();
        dets.sort_by_key(|r| (r.frame, r.id));
        assert_eq!(dets, s.gt);
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig {
            n_sequences: 2,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_ne!(a[0].detections, a[1].detections);
        let other = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a[0], other[0]);
    }

    #[test]
    fn full_occlusion_empties_window() {
        let cfg = SynthConfig {
            occlusion_rate: 1.0,
            occlusion_len: 10,
            reentry_rate: 0.0,
            false_positive_rate: 0.0,
            n_frames: 11,
            ..Default::default()
        };
        let s = &generate(&cfg).unwrap()[0];
        // every identity is hidden from frame 1 through 11
        assert!(s.detections.is_empty());
        assert!(s.gt.is_empty());
    }

    #[test]
    fn rejects_bad_rates() {
        let cfg = SynthConfig {
            miss_rate: 1.5,
            ..Default::default()
        };
        assert!(generate(&cfg).is_err());
    }

    fn mean_positive_cosine(noise: f64) -> f64 {
        let cfg = SynthConfig {
            appearance_noise: noise,
            false_positive_rate: 0.0,
            ..Default::default()
        };
        let s = &generate(&cfg).unwrap()[0];
        let mut by_id: BTreeMap<i64, Vec<&Vec<f64>>> = BTreeMap::new();
        for d in &s.detections {
            by_id
                .entry(d.gt_identity.unwrap())
                .or_default()
                .push(&d.cue(APPEARANCE_CUE).unwrap().values);
        }
        let (mut sum, mut n) = (0.0, 0usize);
        for v in by_id.values() {
            for w in v.windows(2) {
                sum += w[0].iter().zip(w[1]).map(|(a, b)| a * b).sum::<f64>();
                n += 1;
            }
        }
        sum / n as f64
    }

    #[test]
    fn more_noise_lowers_positive_similarity() {
        let levels = [0.0, 0.2, 0.5, 1.0];
        let sims: Vec<f64> = levels.iter().map(|&n| mean_positive_cosine(n)).collect();
        assert!((sims[0] - 1.0).abs() < 1e-12);
        assert!(sims.windows(2).all(|w| w[1] < w[0]), "{sims:?}");
    }

    #[test]
    fn cues_have_declared_widths() {
        let cfg = SynthConfig::default();
        let s = &generate(&cfg).unwrap()[0];
        for d in &s.detections {
            for (k, w) in cfg.cue_widths() {
                assert_eq!(d.cue(k).unwrap().width(), w);
            }
        }
        let frames = s.frames();
        assert_eq!(frames.len(), cfg.n_frames as usize);
        assert!(frames
            .iter()
            .enumerate()
            .all(|(i, (f, ds))| *f == i as u32 + 1 && ds.iter().all(|d| d.frame == *f)));
    }
}
