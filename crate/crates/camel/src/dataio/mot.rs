//! MOTChallenge text files: `frame,id,x,y,w,h,conf,a,b,c`.

use std::fmt::Write as _;

use camel_core::domain::{BBox, Detection, TrackRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord {
    pub frame: u32,
    /// -1 for raw detections.
    pub id: i64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    pub extra: [f64; 3],
}

impl MotRecord {
    pub fn new(frame: u32, id: i64, bbox: BBox, conf: f64) -> Self {
        Self {
            frame,
            id,
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            conf,
            extra: [-1.0; 3],
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.w, self.h)
    }

    pub fn to_detection(&self) -> Detection {
        let mut d = Detection::new(self.frame, self.bbox(), self.conf);
        d.gt_identity = (self.id >= 0).then_some(self.id);
        d
    }

    pub fn to_track(&self) -> TrackRecord {
        TrackRecord {
            frame: self.frame,
            id: self.id,
            bbox: self.bbox(),
            confidence: self.conf,
        }
    }
}

impl From<&TrackRecord> for MotRecord {
    fn from(r: &TrackRecord) -> Self {
        MotRecord::new(r.frame, r.id, r.bbox, r.confidence)
    }
}

fn field<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T, ParseError> {
    s.trim().parse().map_err(|_| ParseError {
        line,
        message: format!("bad {name} {:?}", s.trim()),
    })
}

/// Parses a whole file. Blank lines are skipped; 7 to 10 fields per line, missing
/// trailing fields read as -1.
pub fn parse_mot(text: &str) -> Result<Vec<MotRecord>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.split(',').collect();
        if !(7..=10).contains(&parts.len()) {
            return Err(ParseError {
                line,
                message: format!("expected 7 to 10 fields, found {}", parts.len()),
            });
        }
        let frame: u32 = field(parts[0], "frame", line)?;
        if frame == 0 {
            return Err(ParseError {
                line,
                message: "frames start at 1".into(),
            });
        }
        // ids are integers but some tools write them as floats
        let id_f: f64 = field(parts[1], "id", line)?;
        if id_f.fract() != 0.0 {
            return Err(ParseError {
                line,
                message: format!("bad id {:?}", parts[1].trim()),
            });
        }
        let mut nums = [0.0f64; 5];
        for (k, name) in ["x", "y", "w", "h", "conf"].iter().enumerate() {
            nums[k] = field(parts[k + 2], name, line)?;
        }
        if !nums.iter().all(|v| v.is_finite()) {
            return Err(ParseError {
                line,
                message: "non-finite value".into(),
            });
        }
        if nums[2] <= 0.0 || nums[3] <= 0.0 {
            return Err(ParseError {
                line,
                message: format!("box size {}x{} is not positive", nums[2], nums[3]),
            });
        }
        let mut extra = [-1.0; 3];
        for (k, p) in parts[7..].iter().enumerate() {
            extra[k] = field(p, "trailing field", line)?;
        }
        out.push(MotRecord {
            frame,
            id: id_f as i64,
            x: nums[0],
            y: nums[1],
            w: nums[2],
            h: nums[3],
            conf: nums[4],
            extra,
        });
    }
    Ok(out)
}

/// One line per record, sorted by `(frame, id)`; records sharing a key keep their order.
pub fn emit_mot(records: &[MotRecord]) -> String {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.frame, r.id));
    emit_mot_in_order(&sorted)
}

/// One line per record in the given order.
pub fn emit_mot_in_order(records: &[MotRecord]) -> String {
    let mut s = String::new();
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame, r.id, r.x, r.y, r.w, r.h, r.conf, r.extra[0], r.extra[1], r.extra[2]
        )
        .unwrap();
    }
    s
}

pub fn emit_tracks(records: &[TrackRecord]) -> String {
    emit_mot(&records.iter().map(MotRecord::from).collect::<Vec<_>>())
}
