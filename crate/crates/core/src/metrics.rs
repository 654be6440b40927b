//! CLEAR-MOT accuracy, identity F1 and association accuracy.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::Serialize;

use crate::association::{hungarian, CostMatrix};
use crate::domain::TrackRecord;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotaReport {
    pub mota: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub num_gt: usize,
    pub matches: usize,
}

fn by_frame(records: &[TrackRecord]) -> BTreeMap<u32, Vec<&TrackRecord>> {
    let mut out: BTreeMap<u32, Vec<&TrackRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.frame).or_default().push(r);
    }
    out
}

/// Per-frame `(gt id, pred id)` correspondences. Pairs from the previous frame are
/// kept while their IoU stays above threshold; the rest are matched by Hungarian
/// on `1 - IoU`.
fn frame_matches(gt: &[TrackRecord], pred: &[TrackRecord], iou_threshold: f64) -> BTreeMap<u32, Vec<(i64, i64)>> {
    let gt_frames = by_frame(gt);
    let pred_frames = by_frame(pred);
    let empty = Vec::new();
    let mut prev: BTreeMap<i64, i64> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (&frame, g) in &gt_frames {
        let p = pred_frames.get(&frame).unwrap_or(&empty);
        let mut pairs = Vec::new();
        let mut g_used = alloc::vec![false; g.len()];
        let mut p_used = alloc::vec![false; p.len()];
        for (gi, gr) in g.iter().enumerate() {
            let Some(&pid) = prev.get(&gr.id) else { continue };
            if let Some(pi) = p.iter().position(|pr| pr.id == pid) {
                if !p_used[pi] && gr.bbox.iou(&p[pi].bbox) >= iou_threshold {
                    g_used[gi] = true;
                    p_used[pi] = true;
                    pairs.push((gr.id, pid));
                }
            }
        }
        let gi: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let pi: Vec<usize> = (0..p.len()).filter(|&i| !p_used[i]).collect();
        if !gi.is_empty() && !pi.is_empty() {
            let data = gi
                .iter()
                .flat_map(|&a| pi.iter().map(move |&b| (a, b)))
                .map(|(a, b)| {
                    let iou = g[a].bbox.iou(&p[b].bbox);
                    if iou >= iou_threshold {
                        1.0 - iou
                    } else {
                        2.0
                    }
                })
                .collect();
            let c = CostMatrix::new(gi.len(), pi.len(), data).expect("dimensions agree");
            for m in hungarian(&c).expect("finite costs").matches {
                if m.cost <= 1.0 {
                    pairs.push((g[gi[m.track]].id, p[pi[m.det]].id));
                }
            }
        }
        for &(gid, pid) in &pairs {
            prev.insert(gid, pid);
        }
        out.insert(frame, pairs);
    }
    out
}

/// `1 - (FN + FP + IDSW) / num_gt`.
pub fn mota(gt: &[TrackRecord], pred: &[TrackRecord], iou_threshold: f64) -> MotaReport {
    let matches = frame_matches(gt, pred, iou_threshold);
    let mut last: BTreeMap<i64, i64> = BTreeMap::new();
    let mut idsw = 0;
    let mut tp = 0;
    for pairs in matches.values() {
        for &(g, p) in pairs {
            if let Some(&old) = last.get(&g) {
                if old != p {
                    idsw += 1;
                }
            }
            last.insert(g, p);
            tp += 1;
        }
    }
    let num_gt = gt.len();
    let fn_ = num_gt - tp;
    let fp = pred.len() - tp;
    let mota = if num_gt == 0 {
        if fp == 0 {
            1.0
        } else {
            -(fp as f64)
        }
    } else {
        1.0 - (fn_ + fp + idsw) as f64 / num_gt as f64
    };
    MotaReport {
        mota,
        false_positives: fp,
        false_negatives: fn_,
        id_switches: idsw,
        num_gt,
        matches: tp,
    }
}

/// Frame counts where GT identity `g` and predicted identity `p` overlap.
pub fn identity_overlaps(gt: &[TrackRecord], pred: &[TrackRecord], iou_threshold: f64) -> BTreeMap<(i64, i64), usize> {
    let pred_frames = by_frame(pred);
    let mut counts = BTreeMap::new();
    for g in gt {
        if let Some(ps) = pred_frames.get(&g.frame) {
            for p in ps {
                if g.bbox.iou(&p.bbox) >= iou_threshold {
                    *counts.entry((g.id, p.id)).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Idf1Report {
    pub idf1: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

/// Identity F1 under the one-to-one GT/prediction identity matching that maximises IDTP.
pub fn idf1(gt: &[TrackRecord], pred: &[TrackRecord], iou_threshold: f64) -> Idf1Report {
    let overlaps = identity_overlaps(gt, pred, iou_threshold);
    let gids: Vec<i64> = gt.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
    let pids: Vec<i64> = pred.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
    let mut idtp = 0;
    if !gids.is_empty() && !pids.is_empty() {
        let max = overlaps.values().copied().max().unwrap_or(0) as f64;
        let data = gids
            .iter()
            .flat_map(|g| pids.iter().map(move |p| (*g, *p)))
            .map(|k| max - overlaps.get(&k).copied().unwrap_or(0) as f64)
            .collect();
        let c = CostMatrix::new(gids.len(), pids.len(), data).expect("dimensions agree");
        for m in hungarian(&c).expect("finite costs").matches {
            idtp += overlaps.get(&(gids[m.track], pids[m.det])).copied().unwrap_or(0);
        }
    }
    let idfp = pred.len() - idtp;
    let idfn = gt.len() - idtp;
    let denom = 2 * idtp + idfp + idfn;
    Idf1Report {
        idf1: if denom == 0 {
            1.0
        } else {
            2.0 * idtp as f64 / denom as f64
        },
        idtp,
        idfp,
        idfn,
    }
}

/// Correct and total counts behind an accuracy fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn add(&mut self, other: Tally) {
        self.correct += other.correct;
        self.total += other.total;
    }

    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// One frame's association accuracy. A tracklet is matchable when some detection
/// carries its label; a match is correct when both sides carry the same label.
pub fn association_accuracy(
    track_labels: &[Option<i64>],
    det_labels: &[Option<i64>],
    pairs: &[(usize, usize)],
) -> Tally {
    let present: BTreeSet<i64> = det_labels.iter().flatten().copied().collect();
    let total = track_labels.iter().flatten().filter(|l| present.contains(l)).count();
    let correct = pairs
        .iter()
        .filter(|&&(t, d)| track_labels[t].is_some() && track_labels[t] == det_labels[d])
        .count();
    Tally { correct, total }
}

/// Sequence-level association accuracy from result files: among GT identities
/// matched again after an earlier match, the fraction that keep their predicted id.
pub fn sequence_association_accuracy(gt: &[TrackRecord], pred: &[TrackRecord], iou_threshold: f64) -> Tally {
    let matches = frame_matches(gt, pred, iou_threshold);
    let mut last: BTreeMap<i64, i64> = BTreeMap::new();
    let mut tally = Tally::default();
    for pairs in matches.values() {
        for &(g, p) in pairs {
            if let Some(&old) = last.get(&g) {
                tally.total += 1;
                if old == p {
                    tally.correct += 1;
                }
            }
            last.insert(g, p);
        }
    }
    tally
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BBox;
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(frame: u32, id: i64, x: f64) -> TrackRecord {
        TrackRecord {
            frame,
            id,
            bbox: BBox::new(x, 0.0, 10.0, 10.0),
            confidence: 1.0,
        }
    }

    fn perfect_gt() -> Vec<TrackRecord> {
        (1..=5).flat_map(|f| [rec(f, 1, 0.0), rec(f, 2, 100.0)]).collect()
    }

    #[test]
    fn perfect_tracking() {
        let gt = perfect_gt();
        let pred: Vec<_> = gt.iter().map(|r| TrackRecord { id: r.id + 10, ..*r }).collect();
        assert_eq!(mota(&gt, &pred, 0.5).mota, 1.0);
        assert_eq!(idf1(&gt, &pred, 0.5).idf1, 1.0);
        assert_eq!(sequence_association_accuracy(&gt, &pred, 0.5).fraction(), Some(1.0));
    }

    #[test]
    fn one_false_positive_in_ten() {
        let gt = perfect_gt();
        let mut pred = gt.clone();
        pred.push(rec(3, 7, 300.0));
        let r = mota(&gt, &pred, 0.5);
        assert_eq!(r.false_positives, 1);
        assert!((r.mota - 0.9).abs() < 1e-15);
    }

    #[test]
    fn empty_prediction() {
        let gt = perfect_gt();
        let r = mota(&gt, &[], 0.5);
        assert_eq!(r.mota, 0.0);
        assert_eq!(r.false_negatives, 10);
        assert_eq!(idf1(&gt, &[], 0.5).idf1, 0.0);
    }

    #[test]
    fn midpoint_swap_halves_idf1() {
        // frames 1-4: pred ids follow gt; frames 5-8: swapped
        let gt: Vec<_> = (1..=8).flat_map(|f| [rec(f, 1, 0.0), rec(f, 2, 100.0)]).collect();
        let pred: Vec<_> = (1..=8)
            .flat_map(|f| {
                if f <= 4 {
                    [rec(f, 1, 0.0), rec(f, 2, 100.0)]
                } else {
                    [rec(f, 2, 0.0), rec(f, 1, 100.0)]
                }
            })
            .collect();
        let r = idf1(&gt, &pred, 0.5);
        assert_eq!(r.idtp, 8);
        assert_eq!(r.idf1, 0.5);
        assert_eq!(mota(&gt, &pred, 0.5).id_switches, 2);
    }

    #[test]
    fn association_accuracy_examples() {
        let labels = [Some(1), Some(2), Some(3)];
        assert_eq!(
            association_accuracy(&labels, &labels, &[(0, 0), (1, 1), (2, 2)]).fraction(),
            Some(1.0)
        );
        assert_eq!(
            association_accuracy(&labels, &labels, &[(0, 1), (1, 2), (2, 0)]).fraction(),
            Some(0.0)
        );
        let t = association_accuracy(&labels, &labels, &[(0, 0), (1, 2), (2, 1)]);
        assert_eq!((t.correct, t.total), (1, 3));
        let t = association_accuracy(&labels, &labels, &[(0, 0), (1, 1)]);
        assert_eq!(t.fraction(), Some(2.0 / 3.0));
        // background detections are never correct, tracklets without a partner never count
        let t = association_accuracy(&[Some(1), Some(4)], &[Some(1), None], &[(0, 0), (1, 1)]);
        assert_eq!((t.correct, t.total), (1, 1));
    }

    #[test]
    fn persistence_preferred_on_ties() {
        // two predictions overlap gt 1 equally; the one it was matched to before wins
        let gt = vec![rec(1, 1, 0.0), rec(2, 1, 0.0)];
        let pred = vec![rec(1, 20, 0.0), rec(2, 10, 0.0), rec(2, 20, 0.0)];
        let r = mota(&gt, &pred, 0.5);
        assert_eq!(r.id_switches, 0);
        assert_eq!(r.false_positives, 1);
    }

    // Exhaustive search over every partial one-to-one map from gt ids to pred ids.
    fn brute_idtp(gids: &[i64], pids: &[i64], w: &BTreeMap<(i64, i64), usize>) -> usize {
        fn rec(i: usize, gids: &[i64], pids: &[i64], used: &mut Vec<bool>, w: &BTreeMap<(i64, i64), usize>) -> usize {
            if i == gids.len() {
                return 0;
            }
            let mut best = rec(i + 1, gids, pids, used, w);
            for j in 0..pids.len() {
                if !used[j] {
                    used[j] = true;
                    let v = w.get(&(gids[i], pids[j])).copied().unwrap_or(0) + rec(i + 1, gids, pids, used, w);
                    best = best.max(v);
                    used[j] = false;
                }
            }
            best
        }
        rec(0, gids, pids, &mut vec![false; pids.len()], w)
    }

    fn records(cells: &[(u32, i64, u8)]) -> Vec<TrackRecord> {
        // slots 0..4 are spaced far apart; one record per (frame, id) and per (frame, slot)
        let mut ids = BTreeSet::new();
        let mut slots = BTreeSet::new();
        cells
            .iter()
            .filter(|(f, id, slot)| ids.insert((*f, *id)) && slots.insert((*f, *slot)))
            .map(|&(f, id, slot)| rec(f, id, slot as f64 * 50.0))
            .collect()
    }

    proptest! {
        #[test]
        fn idf1_matches_brute_force(
            g in proptest::collection::vec((1u32..=6, 1i64..=4, 0u8..4), 0..24),
            p in proptest::collection::vec((1u32..=6, 1i64..=4, 0u8..4), 0..24),
        ) {
            let gt = records(&g);
            let pred = records(&p);
            let w = identity_overlaps(&gt, &pred, 0.5);
            let gids: Vec<i64> = gt.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
            let pids: Vec<i64> = pred.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
            let idtp = brute_idtp(&gids, &pids, &w);
            let denom = gt.len() + pred.len();
            let expected = if denom == 0 { 1.0 } else { 2.0 * idtp as f64 / denom as f64 };
            let r = idf1(&gt, &pred, 0.5);
            prop_assert_eq!(r.idtp, idtp);
            prop_assert!((r.idf1 - expected).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.idf1));
        }

        #[test]
        fn metrics_ignore_pred_relabelling(
            g in proptest::collection::vec((1u32..=6, 1i64..=4, 0u8..4), 0..24),
            p in proptest::collection::vec((1u32..=6, 1i64..=4, 0u8..4), 0..24),
            shift in 1i64..100,
        ) {
            let gt = records(&g);
            let pred = records(&p);
            let relabelled: Vec<_> = pred.iter().map(|r| TrackRecord { id: 5 - r.id + shift, ..*r }).collect();
            prop_assert_eq!(idf1(&gt, &pred, 0.5), idf1(&gt, &relabelled, 0.5));
            let a = mota(&gt, &pred, 0.5);
            let b = mota(&gt, &relabelled, 0.5);
            prop_assert!(a.mota <= 1.0);
            prop_assert_eq!(a.mota, b.mota);
        }
    }
}
