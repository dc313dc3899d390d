//! JSON-lines recording files.
//!
//! Line 1 holds metadata, every further line one frame:
//!
//! ```text
//! {"recording_id":"r1","user_id":"u1","activity_id":"a1","created_at":1700000000,"fps":30.0}
//! {"t":0.0,"head":{"x":0.0,"y":1.6,"z":0.0,"i":0.0,"j":0.0,"k":0.0,"w":1.0},"left":{...},"right":{...}}
//! ```

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IngestIssue, Result};
use crate::motion::{MotionFrame, MotionSequence, Pose, Quat};
use crate::persist::write_atomic;
use crate::{Real, Sequence};

/// Identity and provenance of one recording.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording_id: String,
    pub user_id: String,
    pub activity_id: String,
    /// Unix seconds.
    pub created_at: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub sequence: Sequence,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    #[serde(flatten)]
    meta: RecordingMeta,
    fps: Real,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseLine {
    x: Real,
    y: Real,
    z: Real,
    i: Real,
    j: Real,
    k: Real,
    w: Real,
}

/// Wire form of one frame; also what the streaming CLI reads and writes.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameLine {
    t: Real,
    head: PoseLine,
    left: PoseLine,
    right: PoseLine,
}

impl PoseLine {
    fn from_pose(p: &Pose<Real>) -> Self {
        let [x, y, z] = p.position;
        let q = p.orientation;
        Self { x, y, z, i: q.i, j: q.j, k: q.k, w: q.w }
    }

    fn to_pose(&self) -> Result<Pose<Real>> {
        Pose::new([self.x, self.y, self.z], Quat::new(self.i, self.j, self.k, self.w))
    }
}

impl FrameLine {
    pub fn from_frame(f: &MotionFrame<Real>) -> Self {
        Self {
            t: f.t,
            head: PoseLine::from_pose(&f.head),
            left: PoseLine::from_pose(&f.left_hand),
            right: PoseLine::from_pose(&f.right_hand),
        }
    }

    pub fn to_frame(&self) -> Result<MotionFrame<Real>> {
        if !self.t.is_finite() {
            return Err(Error::InvalidInput("timestamp is not finite".into()));
        }
        Ok(MotionFrame {
            t: self.t,
            head: self.head.to_pose()?,
            left_hand: self.left.to_pose()?,
            right_hand: self.right.to_pose()?,
        })
    }
}

/// Parses one JSON frame line.
pub fn parse_frame(line: &str) -> Result<MotionFrame<Real>> {
    serde_json::from_str::<FrameLine>(line)?.to_frame()
}

/// Serializes one frame as a single JSON line without the newline.
pub fn format_frame(f: &MotionFrame<Real>) -> String {
    serde_json::to_string(&FrameLine::from_frame(f)).expect("plain numbers serialize")
}

pub fn recording_to_string(r: &Recording) -> String {
    let header = HeaderLine { meta: r.meta.clone(), fps: r.sequence.nominal_fps() };
    let mut s = serde_json::to_string(&header).expect("plain fields serialize");
    s.push('\n');
    for f in r.sequence.frames() {
        s.push_str(&format_frame(f));
        s.push('\n');
    }
    s
}

pub fn write_recording(path: impl AsRef<Path>, r: &Recording) -> Result<()> {
    write_atomic(path, recording_to_string(r).as_bytes())
}

/// Reads and validates one recording; failures carry the offending line.
pub fn read_recording(path: impl AsRef<Path>) -> std::result::Result<Recording, IngestIssue> {
    let path = path.as_ref();
    let issue = |line: Option<usize>, reason: String| IngestIssue { path: path.to_path_buf(), line, reason };
    let file = fs::File::open(path).map_err(|e| issue(None, e.to_string()))?;
    let mut lines = BufReader::new(file).lines();
    let header_text = match lines.next() {
        Some(Ok(l)) => l,
        Some(Err(e)) => return Err(issue(Some(1), e.to_string())),
        None => return Err(issue(None, "empty file".into())),
    };
    let header: HeaderLine =
        serde_json::from_str(&header_text).map_err(|e| issue(Some(1), format!("bad header: {e}")))?;
    if header.meta.recording_id.is_empty() || header.meta.user_id.is_empty() || header.meta.activity_id.is_empty() {
        return Err(issue(Some(1), "identifiers must be non-empty".into()));
    }
    let mut frames = Vec::new();
    for (k, line) in lines.enumerate() {
        let n = k + 2;
        let line = line.map_err(|e| issue(Some(n), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_frame(&line).map_err(|e| issue(Some(n), e.to_string()))?;
        frames.push(f);
    }
    let sequence = MotionSequence::new(frames, header.fps).map_err(|e| issue(None, e.to_string()))?;
    Ok(Recording { meta: header.meta, sequence })
}

/// `*.jsonl` files directly inside `dir`, sorted by name.
pub fn recording_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "jsonl") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
