// Pose files are JSON Lines: a header object {"fps", "video_id"} followed by
// one object per frame:
//   {"timestamp": s, "hand_left": [[x,y] ×21] | null, "hand_right": … | null,
//    "body": {"left_shoulder": [x,y], …} | null}
// A hand with any null joint counts as missing for that frame; null body
// joints are dropped.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Hand, Imputed, Point, PoseError, PoseFrame, PoseSequence, HAND_JOINTS};

#[derive(Serialize, Deserialize)]
struct Header {
    fps: f64,
    video_id: String,
}

#[derive(Deserialize)]
struct RawFrame {
    timestamp: f64,
    #[serde(default)]
    hand_left: Option<Vec<Option<Point>>>,
    #[serde(default)]
    hand_right: Option<Vec<Option<Point>>>,
    #[serde(default)]
    body: Option<BTreeMap<String, Option<Point>>>,
}

#[derive(Serialize)]
struct OutFrame<'a> {
    timestamp: f64,
    hand_left: Option<&'a [Point; HAND_JOINTS]>,
    hand_right: Option<&'a [Point; HAND_JOINTS]>,
    body: Option<&'a BTreeMap<String, Point>>,
}

fn hand(raw: Option<Vec<Option<Point>>>, line: usize) -> Result<Option<Hand>, PoseError> {
    let Some(joints) = raw else { return Ok(None) };
    if joints.len() != HAND_JOINTS {
        return Err(PoseError::Parse {
            line,
            message: format!("hand has {} joints, expected {HAND_JOINTS}", joints.len()),
        });
    }
    let mut out = [[0.0; 2]; HAND_JOINTS];
    for (slot, j) in out.iter_mut().zip(joints) {
        match j {
            Some(p) if p[0].is_finite() && p[1].is_finite() => *slot = p,
            _ => return Ok(None),
        }
    }
    Ok(Some(Hand(out)))
}

pub fn read_pose_jsonl(text: &str) -> Result<PoseSequence, PoseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (n, first) = lines.next().ok_or(PoseError::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|e| PoseError::Parse {
        line: n,
        message: format!("header: {e}"),
    })?;
    let mut frames = Vec::new();
    for (n, l) in lines {
        let raw: RawFrame = serde_json::from_str(l).map_err(|e| PoseError::Parse {
            line: n,
            message: e.to_string(),
        })?;
        let body = raw.body.map(|b| {
            b.into_iter()
                .filter_map(|(k, v)| v.map(|p| (k, p)))
                .collect::<BTreeMap<_, _>>()
        });
        frames.push(PoseFrame {
            timestamp: raw.timestamp,
            hand_left: hand(raw.hand_left, n)?,
            hand_right: hand(raw.hand_right, n)?,
            body,
            imputed: Imputed::default(),
        });
    }
    let seq = PoseSequence {
        video_id: header.video_id,
        fps: header.fps,
        frames,
    };
    seq.validate()?;
    Ok(seq)
}

pub fn read_pose_file(path: &Path) -> Result<PoseSequence, PoseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PoseError::Io(format!("{}: {e}", path.display())))?;
    read_pose_jsonl(&text)
}

pub fn write_pose_jsonl(seq: &PoseSequence) -> String {
    let mut out = serde_json::to_string(&Header {
        fps: seq.fps,
        video_id: seq.video_id.clone(),
    })
    .expect("header serializes");
    out.push('\n');
    for f in &seq.frames {
        let frame = OutFrame {
            timestamp: f.timestamp,
            hand_left: f.hand_left.as_ref().map(|h| &h.0),
            hand_right: f.hand_right.as_ref().map(|h| &h.0),
            body: f.body.as_ref(),
        };
        out.push_str(&serde_json::to_string(&frame).expect("frame serializes"));
        out.push('\n');
    }
    out
}
