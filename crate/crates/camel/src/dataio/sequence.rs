//! Sequence directories: `det.txt` (or `labels.txt`), optional `gt.txt`,
//! `cue_<k>.bin` per cue and `seqinfo.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use camel_core::domain::{CueTensor, Detection, TrackRecord};
use camel_core::synth::SynthSequence;
use serde::{Deserialize, Serialize};

use super::mot::emit_mot_in_order;
use super::{parse_mot, CueRecord, CueStore, MotRecord};

pub const DETECTIONS_FILE: &str = "det.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const GT_FILE: &str = "gt.txt";
pub const INFO_FILE: &str = "seqinfo.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqInfo {
    pub name: String,
    pub image_w: f64,
    pub image_h: f64,
    pub n_frames: u32,
}

/// Detections with cues, in file order, plus optional ground truth.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub info: SeqInfo,
    pub detections: Vec<Detection>,
    pub gt: Option<Vec<TrackRecord>>,
}

impl LoadedSequence {
    /// Frames `1..=n_frames` (or up to the last detection) with their detections.
    pub fn frames(&self) -> Vec<(u32, Vec<Detection>)> {
        camel_core::synth::group_by_frame(&self.detections, self.info.n_frames)
    }
}

pub fn cue_file(cue_id: usize) -> String {
    format!("cue_{cue_id}.bin")
}

pub fn read_mot_file(path: &Path) -> Result<Vec<MotRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_mot(&text).with_context(|| format!("{}", path.display()))
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    Ok(read_mot_file(path)?.iter().map(MotRecord::to_track).collect())
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Cue stores for `dets`, keyed by position within each frame.
pub fn cue_stores(dets: &[Detection]) -> Result<Vec<CueStore>> {
    let mut stores: BTreeMap<usize, CueStore> = BTreeMap::new();
    let mut per_frame: BTreeMap<u32, u32> = BTreeMap::new();
    for d in dets {
        let idx = per_frame.entry(d.frame).or_insert(0);
        for (&k, c) in &d.cues {
            let store = stores
                .entry(k)
                .or_insert_with(|| CueStore::new(k as u32, c.width() as u32));
            if store.width as usize != c.width() {
                bail!("cue {k} changes width within a sequence");
            }
            store.records.push(CueRecord {
                frame: d.frame,
                det_index: *idx,
                values: c.values.iter().map(|&v| v as f32).collect(),
            });
        }
        *idx += 1;
    }
    Ok(stores.into_values().collect())
}

/// Writes detections (labels as ids when `labelled`) and their cue stores into `dir`.
pub fn write_detections(dir: &Path, info: &SeqInfo, dets: &[Detection], labelled: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut sorted = dets.to_vec();
    sorted.sort_by_key(|d| d.frame);
    let recs: Vec<MotRecord> = sorted
        .iter()
        .map(|d| {
            let id = if labelled { d.gt_identity.unwrap_or(-1) } else { -1 };
            MotRecord::new(d.frame, id, d.bbox, d.confidence)
        })
        .collect();
    // line order within a frame defines the cue keys, so no sorting by id here
    let text = emit_mot_in_order(&recs);
    let name = if labelled { LABELS_FILE } else { DETECTIONS_FILE };
    let mut written = vec![dir.join(name)];
    write_file(&dir.join(name), text)?;
    for store in cue_stores(&sorted)? {
        let path = dir.join(cue_file(store.cue_id as usize));
        write_file(&path, store.to_bytes()?)?;
        written.push(path);
    }
    let info_path = dir.join(INFO_FILE);
    write_file(&info_path, serde_json::to_string_pretty(info)? + "\n")?;
    written.push(info_path);
    Ok(written)
}

pub fn write_synth_sequence(dir: &Path, seq: &SynthSequence) -> Result<Vec<PathBuf>> {
    let info = SeqInfo {
        name: seq.name.clone(),
        image_w: seq.image_w,
        image_h: seq.image_h,
        n_frames: seq.n_frames,
    };
    let mut written = write_detections(dir, &info, &seq.detections, false)?;
    let gt_path = dir.join(GT_FILE);
    write_file(&gt_path, super::emit_tracks(&seq.gt))?;
    written.push(gt_path);
    Ok(written)
}

/// Loads `file` (detections or labels) from `dir` and attaches every cue store found.
pub fn read_sequence(dir: &Path, file: &str) -> Result<LoadedSequence> {
    let info_path = dir.join(INFO_FILE);
    let info: SeqInfo = serde_json::from_str(
        &fs::read_to_string(&info_path).with_context(|| format!("reading {}", info_path.display()))?,
    )
    .with_context(|| format!("{}", info_path.display()))?;
    let det_path = dir.join(file);
    let recs = read_mot_file(&det_path)?;
    let mut detections: Vec<Detection> = recs.iter().map(MotRecord::to_detection).collect();
    let mut index: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut per_frame: BTreeMap<u32, u32> = BTreeMap::new();
    let mut last_frame = 0;
    for (i, d) in detections.iter().enumerate() {
        if d.frame < last_frame {
            bail!("{}: line {}: frames must not decrease", det_path.display(), i + 1);
        }
        last_frame = d.frame;
        let k = per_frame.entry(d.frame).or_insert(0);
        index.insert((d.frame, *k), i);
        *k += 1;
    }
    let mut cue_paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("cue_") && n.ends_with(".bin"))
        })
        .collect();
    cue_paths.sort();
    for path in cue_paths {
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let store = CueStore::from_bytes(&bytes).with_context(|| format!("{}", path.display()))?;
        for r in store.records {
            let Some(&i) = index.get(&(r.frame, r.det_index)) else {
                bail!(
                    "{}: record for frame {} detection {} has no line in {}",
                    path.display(),
                    r.frame,
                    r.det_index,
                    det_path.display()
                );
            };
            let values = r.values.iter().map(|&v| v as f64).collect();
            detections[i]
                .cues
                .insert(store.cue_id as usize, CueTensor::new(store.cue_id as usize, values));
        }
    }
    let gt_path = dir.join(GT_FILE);
    let gt = if gt_path.exists() {
        Some(read_tracks(&gt_path)?)
    } else {
        None
    };
    Ok(LoadedSequence { info, detections, gt })
}

/// Sequence subdirectories of `root` holding `file`, sorted by name.
pub fn sequence_dirs(root: &Path, file: &str) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("listing {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(file).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("{}: no sequence directory with {file}", root.display());
    }
    Ok(dirs)
}
