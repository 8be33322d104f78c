//! Track file parsing and writing.
//!
//! Two line formats are supported:
//!
//! * MOT-Challenge CSV, `frame,id,x,y,w,h,conf,a,b,c` with `(x, y)` the box's
//!   left/top corner. Trailing columns after `conf` are optional and ignored.
//! * Record lines: one JSON object per line with keys `frame`, `id`, `class`,
//!   `cx`, `cy`, `w`, `h` (and optional `conf`). Unknown keys are ignored.
//!
//! Loading groups observations by frame in ascending order, objects ordered by
//! id within a frame.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BBox, ClassLabel, Frame, ObjectId, ObjectState};

/// Default longest run of missing frames that [`interpolate_gaps`] fills.
pub const DEFAULT_MAX_GAP: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackFormat {
    Mot,
    #[default]
    Records,
}

impl FromStr for TrackFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mot" => Ok(Self::Mot),
            "records" => Ok(Self::Records),
            other => Err(format!("unknown track format `{other}` (expected mot or records)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    File { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write object id `{0}` as a MOT integer id")]
    NonNumericId(ObjectId),
}

impl IngestError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        Self::Parse { line, message: message.into() }
    }

    fn in_file(self, path: &Path) -> Self {
        match self {
            Self::Parse { line, message } => Self::File { path: path.to_owned(), line, message },
            other => other,
        }
    }
}

/// Serialized form of one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub frame: Frame,
    pub object_id: ObjectId,
    pub class_label: ClassLabel,
    /// Left edge.
    pub x: f64,
    /// Top edge.
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: Option<f64>,
}

impl TrackRecord {
    pub fn to_state(&self) -> Result<ObjectState, String> {
        let bbox = BBox::from_ltwh(self.x, self.y, self.w, self.h).map_err(|e| e.to_string())?;
        Ok(ObjectState::new(self.frame, self.object_id.clone(), self.class_label, bbox))
    }

    pub fn from_state(s: &ObjectState) -> Self {
        Self {
            frame: s.frame,
            object_id: s.object_id.clone(),
            class_label: s.class_label,
            x: s.bbox.left(),
            y: s.bbox.top(),
            w: s.bbox.w,
            h: s.bbox.h,
            confidence: None,
        }
    }
}

fn check_size(w: f64, h: f64) -> Result<(), String> {
    if !(w.is_finite() && h.is_finite()) {
        return Err("box size must be finite".into());
    }
    if w <= 0.0 {
        return Err(format!("w must be > 0 (got {w})"));
    }
    if h <= 0.0 {
        return Err(format!("h must be > 0 (got {h})"));
    }
    Ok(())
}

/// Parses one MOT-Challenge row. `line_no` is only used for error context.
pub fn parse_mot(line: &str, line_no: usize) -> Result<TrackRecord, IngestError> {
    let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    if !(7..=10).contains(&fields.len()) {
        return Err(IngestError::parse(
            line_no,
            format!("expected 7 to 10 comma-separated fields, found {}", fields.len()),
        ));
    }
    let num = |idx: usize, name: &str| -> Result<f64, IngestError> {
        fields[idx]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| IngestError::parse(line_no, format!("field `{name}` is not a number: `{}`", fields[idx])))
    };
    let int = |idx: usize, name: &str| -> Result<u64, IngestError> {
        let v = num(idx, name)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(IngestError::parse(line_no, format!("field `{name}` must be a non-negative integer")));
        }
        Ok(v as u64)
    };
    let frame = int(0, "frame")?;
    let id = int(1, "id")?;
    let (x, y, w, h) = (num(2, "x")?, num(3, "y")?, num(4, "w")?, num(5, "h")?);
    check_size(w, h).map_err(|m| IngestError::parse(line_no, m))?;
    let conf = num(6, "conf")?;
    Ok(TrackRecord {
        frame,
        object_id: ObjectId::new(id.to_string()),
        class_label: ClassLabel::Other,
        x,
        y,
        w,
        h,
        confidence: (0.0..=1.0).contains(&conf).then_some(conf),
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Int(u64),
    Text(String),
}

#[derive(Deserialize)]
struct RawRecord {
    frame: Frame,
    id: RawId,
    class: String,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    conf: Option<f64>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    frame: Frame,
    id: &'a str,
    class: &'a str,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    conf: Option<f64>,
}

/// Parses one record line.
pub fn parse_record_line(line: &str, line_no: usize) -> Result<TrackRecord, IngestError> {
    let raw: RawRecord =
        serde_json::from_str(line.trim()).map_err(|e| IngestError::parse(line_no, e.to_string()))?;
    check_size(raw.w, raw.h).map_err(|m| IngestError::parse(line_no, m))?;
    let object_id = match raw.id {
        RawId::Int(i) => ObjectId::new(i.to_string()),
        RawId::Text(s) => ObjectId::new(s),
    };
    Ok(TrackRecord {
        frame: raw.frame,
        object_id,
        class_label: ClassLabel::from_name(&raw.class),
        x: raw.cx - raw.w / 2.0,
        y: raw.cy - raw.h / 2.0,
        w: raw.w,
        h: raw.h,
        confidence: raw.conf,
    })
}

fn parse_state_line(line: &str, line_no: usize, format: TrackFormat) -> Result<ObjectState, IngestError> {
    match format {
        TrackFormat::Mot => {
            let rec = parse_mot(line, line_no)?;
            rec.to_state().map_err(|m| IngestError::parse(line_no, m))
        }
        // Centers are kept verbatim so the record format round-trips exactly.
        TrackFormat::Records => {
            let raw: RawRecord =
                serde_json::from_str(line.trim()).map_err(|e| IngestError::parse(line_no, e.to_string()))?;
            let id = match raw.id {
                RawId::Int(i) => ObjectId::new(i.to_string()),
                RawId::Text(s) => ObjectId::new(s),
            };
            let bbox = BBox::new(raw.cx, raw.cy, raw.w, raw.h).map_err(|e| IngestError::parse(line_no, e.to_string()))?;
            Ok(ObjectState::new(raw.frame, id, ClassLabel::from_name(&raw.class), bbox))
        }
    }
}

/// Observations sharing one frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGroup {
    pub frame: Frame,
    pub states: Vec<ObjectState>,
}

/// Parses a whole text buffer. Blank lines and `#` comments are skipped.
pub fn parse_stream(text: &str, format: TrackFormat) -> Result<Vec<ObjectState>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_state_line(trimmed, idx + 1, format)?);
    }
    Ok(out)
}

/// Sorts by `(frame, object_id)` and groups by frame. A repeated `(frame, id)`
/// keeps the later line.
pub fn group_by_frame(states: impl IntoIterator<Item = ObjectState>) -> Vec<FrameGroup> {
    let mut frames: BTreeMap<Frame, BTreeMap<ObjectId, ObjectState>> = BTreeMap::new();
    for s in states {
        frames.entry(s.frame).or_default().insert(s.object_id.clone(), s);
    }
    frames
        .into_iter()
        .map(|(frame, objs)| FrameGroup { frame, states: objs.into_values().collect() })
        .collect()
}

pub fn load_stream(path: &Path, format: TrackFormat) -> Result<Vec<FrameGroup>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_owned(), source })?;
    let states = parse_stream(&text, format).map_err(|e| e.in_file(path))?;
    Ok(group_by_frame(states))
}

pub fn write_records<'a>(states: impl IntoIterator<Item = &'a ObjectState>) -> String {
    let mut out = String::new();
    for s in states {
        let rec = RecordOut {
            frame: s.frame,
            id: s.object_id.as_str(),
            class: s.class_label.as_str(),
            cx: s.bbox.cx,
            cy: s.bbox.cy,
            w: s.bbox.w,
            h: s.bbox.h,
            conf: None,
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

pub fn write_mot<'a>(records: impl IntoIterator<Item = &'a TrackRecord>) -> Result<String, IngestError> {
    let mut out = String::new();
    for r in records {
        let id: u64 = r.object_id.as_str().parse().map_err(|_| IngestError::NonNumericId(r.object_id.clone()))?;
        let conf = r.confidence.unwrap_or(-1.0);
        writeln!(out, "{},{},{},{},{},{},{},-1,-1,-1", r.frame, id, r.x, r.y, r.w, r.h, conf)
            .expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn write_stream(groups: &[FrameGroup], format: TrackFormat) -> Result<String, IngestError> {
    let states = groups.iter().flat_map(|g| g.states.iter());
    match format {
        TrackFormat::Records => Ok(write_records(states)),
        TrackFormat::Mot => {
            let recs: Vec<TrackRecord> = states.map(TrackRecord::from_state).collect();
            write_mot(&recs)
        }
    }
}

/// Fills runs of at most `max_gap` missing frames per object by linear
/// interpolation of center and size. Longer runs are left open.
///
/// Input per-object frames must be strictly increasing; output is sorted by
/// `(frame, object_id)`.
pub fn interpolate_gaps(observations: &[ObjectState], max_gap: u64) -> Vec<ObjectState> {
    let mut per_object: BTreeMap<&ObjectId, Vec<&ObjectState>> = BTreeMap::new();
    for s in observations {
        per_object.entry(&s.object_id).or_default().push(s);
    }
    let mut out = Vec::with_capacity(observations.len());
    for track in per_object.values() {
        for pair in track.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            out.push(a.clone());
            let span = b.frame - a.frame;
            let missing = span.saturating_sub(1);
            if missing == 0 || missing > max_gap {
                continue;
            }
            for step in 1..span {
                let t = step as f64 / span as f64;
                let lerp = |p: f64, q: f64| p + (q - p) * t;
                let bbox = BBox {
                    cx: lerp(a.bbox.cx, b.bbox.cx),
                    cy: lerp(a.bbox.cy, b.bbox.cy),
                    w: lerp(a.bbox.w, b.bbox.w),
                    h: lerp(a.bbox.h, b.bbox.h),
                };
                out.push(ObjectState::new(a.frame + step, a.object_id.clone(), a.class_label, bbox));
            }
        }
        if let Some(last) = track.last() {
            out.push((*last).clone());
        }
    }
    out.sort_by(|a, b| (a.frame, &a.object_id).cmp(&(b.frame, &b.object_id)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(frame: Frame, id: &str, cx: f64, cy: f64) -> ObjectState {
        ObjectState::new(frame, id, ClassLabel::Car, BBox::new(cx, cy, 10.0, 10.0).unwrap())
    }

    #[test]
    fn mot_row_converts_corner_to_center() {
        let r = parse_mot("1,3,100,50,20,40,1,-1,-1,-1", 1).unwrap();
        assert_eq!(r.frame, 1);
        assert_eq!(r.object_id.as_str(), "3");
        let s = r.to_state().unwrap();
        assert_eq!(s.bbox, BBox { cx: 110.0, cy: 70.0, w: 20.0, h: 40.0 });
        assert_eq!(s.class_label, ClassLabel::Other);
        assert_eq!(r.confidence, Some(1.0));
    }

    #[test]
    fn mot_rejects_zero_width() {
        let err = parse_mot("1,3,100,50,0,40,1,-1,-1,-1", 4).unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn mot_rejects_garbage_with_line_number() {
        let err = parse_mot("garbage", 12).unwrap_err();
        assert!(err.to_string().starts_with("line 12:"), "{err}");
        assert!(parse_mot("1,3,abc,50,20,40,1,-1,-1,-1", 1).is_err());
    }

    #[test]
    fn record_class_mapping() {
        let car = parse_record_line(r#"{"frame":1,"id":"a","class":"car","cx":1,"cy":2,"w":3,"h":4}"#, 1).unwrap();
        assert_eq!(car.class_label, ClassLabel::Car);
        let bike =
            parse_record_line(r#"{"frame":1,"id":7,"class":"bicycle","cx":1,"cy":2,"w":3,"h":4,"extra":true}"#, 1)
                .unwrap();
        assert_eq!(bike.class_label, ClassLabel::Other);
        assert_eq!(bike.object_id.as_str(), "7");
    }

    #[test]
    fn record_missing_key_is_named() {
        let err = parse_record_line(r#"{"frame":1,"id":"a","class":"car","cx":1,"w":3,"h":4}"#, 2).unwrap_err();
        assert!(err.to_string().contains("cy"), "{err}");
    }

    #[test]
    fn load_groups_and_sorts_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let states = [st(5, "b", 0.0, 0.0), st(5, "a", 1.0, 0.0), st(3, "a", 2.0, 0.0), st(4, "a", 3.0, 0.0)];
        fs::write(&path, write_records(&states)).unwrap();
        let groups = load_stream(&path, TrackFormat::Records).unwrap();
        let frames: Vec<_> = groups.iter().map(|g| g.frame).collect();
        assert_eq!(frames, vec![3, 4, 5]);
        let ids: Vec<_> = groups[2].states.iter().map(|s| s.object_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn load_two_objects_three_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let text = "1,1,0,0,10,10,1,-1,-1,-1\n1,2,50,0,10,10,1,-1,-1,-1\n2,1,1,0,10,10,1,-1,-1,-1\n\
                    2,2,51,0,10,10,1,-1,-1,-1\n3,1,2,0,10,10,1,-1,-1,-1\n3,2,52,0,10,10,1,-1,-1,-1\n";
        fs::write(&path, text).unwrap();
        let groups = load_stream(&path, TrackFormat::Mot).unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.states.len() == 2));
        assert_eq!(groups[0].frame, 1);
    }

    #[test]
    fn load_empty_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, "").unwrap();
        assert!(load_stream(&path, TrackFormat::Mot).unwrap().is_empty());
    }

    #[test]
    fn load_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "1,1,0,0,10,10,1,-1,-1,-1\nnope\n").unwrap();
        let err = load_stream(&path, TrackFormat::Mot).unwrap_err();
        match err {
            IngestError::File { line, path: p, .. } => {
                assert_eq!(line, 2);
                assert_eq!(p, path);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_gap_filled_linearly() {
        let out = interpolate_gaps(&[st(1, "a", 0.0, 0.0), st(4, "a", 9.0, 0.0)], 3);
        let centers: Vec<_> = out.iter().map(|s| (s.frame, s.bbox.cx)).collect();
        assert_eq!(centers, vec![(1, 0.0), (2, 3.0), (3, 6.0), (4, 9.0)]);
    }

    #[test]
    fn long_gap_left_open() {
        let input = [st(1, "a", 0.0, 0.0), st(12, "a", 9.0, 0.0)];
        assert_eq!(interpolate_gaps(&input, 3), input.to_vec());
    }

    #[test]
    fn no_gaps_is_identity() {
        let input: Vec<_> = (0..6).map(|f| st(f, "a", f as f64, 0.0)).collect();
        assert_eq!(interpolate_gaps(&input, 3), input);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sparse_track() -> impl Strategy<Value = Vec<ObjectState>> {
            prop::collection::vec((1u64..9, -500i32..500, -500i32..500, 0u8..3), 1..30).prop_map(|steps| {
                let mut frame = 0;
                steps
                    .into_iter()
                    .map(|(gap, x, y, obj)| {
                        frame += gap;
                        st(frame, &format!("o{obj}"), x as f64 * 0.5, y as f64 * 0.25)
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn interpolation_is_idempotent(track in sparse_track(), max_gap in 0u64..8) {
                let once = interpolate_gaps(&track, max_gap);
                prop_assert_eq!(interpolate_gaps(&once, max_gap), once);
            }

            #[test]
            fn records_round_trip(states in prop::collection::vec(
                (0u64..50, "[a-z0-9]{1,4}", -1e4..1e4f64, -1e4..1e4f64, 0.01..500.0f64, 0.01..500.0f64, 0u8..4), 0..40)
            ) {
                let states: Vec<ObjectState> = states.into_iter().map(|(f, id, cx, cy, w, h, c)| {
                    let class = [ClassLabel::Car, ClassLabel::Bus, ClassLabel::Pedestrian, ClassLabel::Other][c as usize];
                    ObjectState::new(f, id.as_str(), class, BBox::new(cx, cy, w, h).unwrap())
                }).collect();
                let groups = group_by_frame(states);
                let text = write_stream(&groups, TrackFormat::Records).unwrap();
                let back = group_by_frame(parse_stream(&text, TrackFormat::Records).unwrap());
                prop_assert_eq!(back, groups);
            }

            #[test]
            fn mot_round_trip(recs in prop::collection::vec(
                (1u64..50, 0u64..100, -1e4..1e4f64, -1e4..1e4f64, 0.01..500.0f64, 0.01..500.0f64, prop::option::of(0.0..=1.0f64)), 0..40)
            ) {
                let recs: Vec<TrackRecord> = recs.into_iter().map(|(frame, id, x, y, w, h, confidence)| TrackRecord {
                    frame, object_id: ObjectId::new(id.to_string()), class_label: ClassLabel::Other, x, y, w, h, confidence,
                }).collect();
                let text = write_mot(&recs).unwrap();
                let back: Vec<TrackRecord> = text.lines().enumerate()
                    .map(|(i, l)| parse_mot(l, i + 1).unwrap()).collect();
                prop_assert_eq!(back, recs);
            }
        }
    }
}
