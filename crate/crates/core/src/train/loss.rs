use alloc::vec::Vec;

use super::{InputMode, Scenario, TrainError};
use crate::diffcore::{Tape, Var};
use crate::model::{Bound, Camel};

/// Tracklet-to-detection cross entropy over cosine similarities scaled by `1 / tau`.
/// `z` holds the tracklet rows first, then the detections; only tracklets with a
/// target contribute.
pub fn info_nce(
    tape: &mut Tape,
    z: Var,
    n_tracks: usize,
    targets: &[Option<usize>],
    tau: f64,
) -> Result<Var, TrainError> {
    let rows = tape.value(z).rows();
    let n_dets = rows
        .checked_sub(n_tracks)
        .filter(|&n| n > 0)
        .ok_or(TrainError::NoPositives)?;
    let (queries, labels): (Vec<usize>, Vec<usize>) = targets
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.map(|d| (i, d)))
        .unzip();
    if queries.is_empty() {
        return Err(TrainError::NoPositives);
    }
    let q = tape.gather_rows(z, &queries)?;
    let d = tape.slice(z, 0, n_tracks, n_dets)?;
    let dt = tape.transpose(d)?;
    let sim = tape.matmul(q, dt)?;
    let logits = tape.scale(sim, 1.0 / tau)?;
    Ok(tape.cross_entropy(logits, &labels)?)
}

/// Sum over cues of the contrastive loss on each temporal encoder's normalised CLS
/// output, restricted to objects that carry the cue. `None` if no cue has a pair.
pub fn single_cue_loss(
    model: &Camel,
    tape: &mut Tape,
    bound: &Bound,
    s: &Scenario,
    tau: f64,
) -> Result<Option<Var>, TrainError> {
    let objects = s.objects(&InputMode::Full, &[]);
    let (tracks, dets) = objects.split_at(s.tracklets.len());
    let targets = s.targets();
    let mut total: Option<Var> = None;
    for cue in model.config().cue_ids() {
        let det_rows: Vec<usize> = (0..dets.len()).filter(|&j| dets[j].has_cue(cue)).collect();
        let mut track_rows = Vec::new();
        let mut cue_targets = Vec::new();
        for (i, t) in tracks.iter().enumerate() {
            let Some(target) = targets[i] else { continue };
            let Some(pos) = det_rows.iter().position(|&j| j == target) else {
                continue;
            };
            if t.has_cue(cue) {
                track_rows.push(i);
                cue_targets.push(Some(pos));
            }
        }
        if track_rows.is_empty() {
            continue;
        }
        let mut encoded = Vec::with_capacity(track_rows.len() + det_rows.len());
        for &i in &track_rows {
            encoded.push(model.encode_cue_sequence(tape, bound, cue, &tracks[i])?);
        }
        for &j in &det_rows {
            encoded.push(model.encode_cue_sequence(tape, bound, cue, &dets[j])?);
        }
        let stacked = tape.concat(&encoded, 0)?;
        let z = tape.l2_normalize_lastdim(stacked)?;
        let loss = info_nce(tape, z, track_rows.len(), &cue_targets, tau)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, loss)?,
            None => loss,
        });
    }
    Ok(total)
}
