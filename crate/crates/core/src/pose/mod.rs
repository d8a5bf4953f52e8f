//! Pose keypoint ingestion, handedness, imputation and feature normalization.

mod augment;
mod io;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::nn::Tensor;

pub use augment::{augment, Augment};
pub use io::{read_pose_file, read_pose_jsonl, write_pose_jsonl};

pub const HAND_JOINTS: usize = 21;
pub const HAND_DIM: usize = 2 * HAND_JOINTS;
const EPS: f64 = 1e-6;

pub type Point = [f64; 2];

/// Upper-body joints used by the sign recognizer; joints below the hips are
/// never part of the features.
pub const DEFAULT_BODY_JOINTS: [&str; 9] = [
    "nose",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
];

const BELOW_HIP: [&str; 4] = ["left_knee", "right_knee", "left_ankle", "right_ankle"];

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("no hand is present in any frame")]
    NoHands,
    #[error("channel {0} is absent in every frame")]
    ChannelEmpty(String),
    #[error("frame {frame} lacks a shoulder")]
    NoShoulders { frame: usize },
    #[error("frame {frame} lacks channel {channel}")]
    MissingChannel { frame: usize, channel: String },
    #[error("pose sequence has no frames")]
    Empty,
    #[error("invalid pose sequence: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

/// One hand's 21 joints in image-normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Hand(pub [Point; HAND_JOINTS]);

impl Hand {
    pub fn map(&self, f: impl Fn(Point) -> Point) -> Hand {
        Hand(self.0.map(f))
    }
}

/// Which channels of a frame were filled in by [`impute_missing`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Imputed {
    pub hand_left: bool,
    pub hand_right: bool,
    pub body: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub timestamp: f64,
    pub hand_left: Option<Hand>,
    pub hand_right: Option<Hand>,
    pub body: Option<BTreeMap<String, Point>>,
    pub imputed: Imputed,
}

impl PoseFrame {
    pub fn new(timestamp: f64) -> Self {
        PoseFrame {
            timestamp,
            hand_left: None,
            hand_right: None,
            body: None,
            imputed: Imputed::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub video_id: String,
    pub fps: f64,
    pub frames: Vec<PoseFrame>,
}

impl PoseSequence {
    pub fn validate(&self) -> Result<(), PoseError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(PoseError::Invalid(format!("fps {} is not positive", self.fps)));
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                return Err(PoseError::Invalid(format!(
                    "timestamps not strictly increasing at frame {}",
                    i + 1
                )));
            }
        }
        for (i, f) in self.frames.iter().enumerate() {
            let finite = |p: &Point| p[0].is_finite() && p[1].is_finite();
            let ok = f.timestamp.is_finite()
                && [&f.hand_left, &f.hand_right]
                    .iter()
                    .all(|h| h.as_ref().is_none_or(|h| h.0.iter().all(finite)))
                && f.body.as_ref().is_none_or(|b| b.values().all(finite));
            if !ok {
                return Err(PoseError::Invalid(format!("non-finite value in frame {i}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandednessReport {
    pub dominant: Side,
    pub valid_fraction_left: f64,
    pub valid_fraction_right: f64,
    pub flipped: bool,
}

/// The hand present in more frames is dominant; ties go to the right hand.
pub fn select_dominant_hand(seq: &PoseSequence) -> Result<HandednessReport, PoseError> {
    if seq.is_empty() {
        return Err(PoseError::Empty);
    }
    let n = seq.len() as f64;
    let left = seq.frames.iter().filter(|f| f.hand_left.is_some()).count();
    let right = seq.frames.iter().filter(|f| f.hand_right.is_some()).count();
    if left == 0 && right == 0 {
        return Err(PoseError::NoHands);
    }
    let dominant = if left > right { Side::Left } else { Side::Right };
    Ok(HandednessReport {
        dominant,
        valid_fraction_left: left as f64 / n,
        valid_fraction_right: right as f64 / n,
        flipped: dominant == Side::Left,
    })
}

fn swap_side(name: &str) -> String {
    if let Some(rest) = name.strip_prefix("left_") {
        format!("right_{rest}")
    } else if let Some(rest) = name.strip_prefix("right_") {
        format!("left_{rest}")
    } else {
        name.to_string()
    }
}

/// Horizontal reflection: `x ↦ 1 − x`, with left and right channels swapped.
pub fn mirror_flip(seq: &PoseSequence) -> PoseSequence {
    let flip = |p: Point| [1.0 - p[0], p[1]];
    let frames = seq
        .frames
        .iter()
        .map(|f| PoseFrame {
            timestamp: f.timestamp,
            hand_left: f.hand_right.as_ref().map(|h| h.map(flip)),
            hand_right: f.hand_left.as_ref().map(|h| h.map(flip)),
            body: f.body.as_ref().map(|b| {
                b.iter()
                    .map(|(name, &p)| (swap_side(name), flip(p)))
                    .collect()
            }),
            imputed: Imputed {
                hand_left: f.imputed.hand_right,
                hand_right: f.imputed.hand_left,
                body: f.imputed.body.iter().map(|n| swap_side(n)).collect(),
            },
        })
        .collect();
    PoseSequence {
        video_id: seq.video_id.clone(),
        fps: seq.fps,
        frames,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Channel {
    LeftHand,
    RightHand,
    BodyJoint(String),
}

impl Channel {
    pub fn name(&self) -> String {
        match self {
            Channel::LeftHand => "hand_left".into(),
            Channel::RightHand => "hand_right".into(),
            Channel::BodyJoint(j) => format!("body.{j}"),
        }
    }

    fn present(&self, f: &PoseFrame) -> bool {
        match self {
            Channel::LeftHand => f.hand_left.is_some(),
            Channel::RightHand => f.hand_right.is_some(),
            Channel::BodyJoint(j) => f.body.as_ref().is_some_and(|b| b.contains_key(j)),
        }
    }

    fn copy(&self, from: &PoseFrame, to: &mut PoseFrame) {
        match self {
            Channel::LeftHand => {
                to.hand_left = from.hand_left.clone();
                to.imputed.hand_left = true;
            }
            Channel::RightHand => {
                to.hand_right = from.hand_right.clone();
                to.imputed.hand_right = true;
            }
            Channel::BodyJoint(j) => {
                let p = from.body.as_ref().and_then(|b| b.get(j)).copied().expect("present");
                to.body.get_or_insert_with(BTreeMap::new).insert(j.clone(), p);
                to.imputed.body.push(j.clone());
            }
        }
    }
}

/// Every channel present in at least one frame.
pub fn available_channels(seq: &PoseSequence) -> Vec<Channel> {
    let mut out = Vec::new();
    if seq.frames.iter().any(|f| f.hand_left.is_some()) {
        out.push(Channel::LeftHand);
    }
    if seq.frames.iter().any(|f| f.hand_right.is_some()) {
        out.push(Channel::RightHand);
    }
    let joints: std::collections::BTreeSet<&String> = seq
        .frames
        .iter()
        .filter_map(|f| f.body.as_ref())
        .flat_map(|b| b.keys())
        .collect();
    out.extend(joints.into_iter().map(|j| Channel::BodyJoint(j.clone())));
    out
}

/// Fills each missing channel from the temporally nearest frame where it is
/// present (earlier frame on ties). Filled channels are marked in
/// [`PoseFrame::imputed`] so that statistics can skip them.
pub fn impute_missing(seq: &PoseSequence, channels: &[Channel]) -> Result<PoseSequence, PoseError> {
    let mut out = seq.clone();
    for ch in channels {
        let present: Vec<usize> = (0..seq.len()).filter(|&i| ch.present(&seq.frames[i])).collect();
        if present.is_empty() {
            return Err(PoseError::ChannelEmpty(ch.name()));
        }
        let mut k = 0;
        for i in 0..seq.len() {
            while k + 1 < present.len() && present[k + 1] <= i {
                k += 1;
            }
            if ch.present(&seq.frames[i]) {
                continue;
            }
            // present[k] is the last valid frame at or before i, unless i precedes all.
            let before = (present[k] < i).then_some(present[k]);
            let after = if present[k] > i {
                Some(present[k])
            } else {
                present.get(k + 1).copied()
            };
            let src = match (before, after) {
                (Some(b), Some(a)) => {
                    if i - b <= a - i {
                        b
                    } else {
                        a
                    }
                }
                (Some(b), None) => b,
                (None, Some(a)) => a,
                (None, None) => unreachable!("channel has a present frame"),
            };
            ch.copy(&seq.frames[src], &mut out.frames[i]);
        }
    }
    Ok(out)
}

/// Per-joint, per-axis standard deviation of mean-centred hand coordinates
/// over a video's valid (non-imputed) frames, floored at 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct HandStats {
    pub std: [f64; HAND_DIM],
}

impl HandStats {
    pub fn unit() -> Self {
        HandStats { std: [1.0; HAND_DIM] }
    }

    pub fn from_hands<'a>(hands: impl IntoIterator<Item = &'a Hand>) -> Self {
        let centred: Vec<[f64; HAND_DIM]> = hands.into_iter().map(center_hand).collect();
        let mut std = [1.0; HAND_DIM];
        if centred.is_empty() {
            return HandStats { std };
        }
        let n = centred.len() as f64;
        for (k, s) in std.iter_mut().enumerate() {
            let mean = centred.iter().map(|c| c[k]).sum::<f64>() / n;
            let var = centred.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>() / n;
            *s = var.sqrt().max(EPS);
        }
        HandStats { std }
    }
}

fn center_hand(hand: &Hand) -> [f64; HAND_DIM] {
    // Offsets from joint 0 are exact zeros for a degenerate hand, so the
    // centred result is too.
    let origin = hand.0[0];
    let mut out = [0.0; HAND_DIM];
    for (j, p) in hand.0.iter().enumerate() {
        out[2 * j] = p[0] - origin[0];
        out[2 * j + 1] = p[1] - origin[1];
    }
    let n = HAND_JOINTS as f64;
    let mx = (0..HAND_JOINTS).map(|j| out[2 * j]).sum::<f64>() / n;
    let my = (0..HAND_JOINTS).map(|j| out[2 * j + 1]).sum::<f64>() / n;
    for j in 0..HAND_JOINTS {
        out[2 * j] -= mx;
        out[2 * j + 1] -= my;
    }
    out
}

/// Centres the hand on its joint mean and scales each coordinate by the
/// video-level per-joint deviation. Layout `x0, y0, …, x20, y20`.
pub fn normalize_hand(hand: &Hand, stats: &HandStats) -> [f64; HAND_DIM] {
    let mut out = center_hand(hand);
    for (v, s) in out.iter_mut().zip(&stats.std) {
        *v /= s.max(EPS);
    }
    out
}

/// Shoulder-centred, shoulder-width-scaled coordinates of `joints`.
pub fn normalize_body(
    body: &BTreeMap<String, Point>,
    joints: &[String],
    frame: usize,
) -> Result<Vec<f64>, PoseError> {
    let (Some(l), Some(r)) = (body.get("left_shoulder"), body.get("right_shoulder")) else {
        return Err(PoseError::NoShoulders { frame });
    };
    let mid = [(l[0] + r[0]) / 2.0, (l[1] + r[1]) / 2.0];
    let width = ((l[0] - r[0]).powi(2) + (l[1] - r[1]).powi(2)).sqrt().max(EPS);
    let mut out = Vec::with_capacity(2 * joints.len());
    for j in joints {
        let p = body.get(j).ok_or_else(|| PoseError::MissingChannel {
            frame,
            channel: format!("body.{j}"),
        })?;
        out.push((p[0] - mid[0]) / width);
        out.push((p[1] - mid[1]) / width);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandUse {
    Off,
    Required,
    /// Zero-filled when the hand never appears in the video.
    ZeroIfAbsent,
}

/// Which channels to concatenate, in order: body, dominant (right slot),
/// non-dominant (left slot).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    pub body_joints: Vec<String>,
    pub dominant: HandUse,
    pub non_dominant: HandUse,
}

impl ChannelSpec {
    pub fn fingerspelling() -> Self {
        ChannelSpec {
            body_joints: Vec::new(),
            dominant: HandUse::Required,
            non_dominant: HandUse::Off,
        }
    }

    pub fn isr_one_hand() -> Self {
        ChannelSpec {
            body_joints: DEFAULT_BODY_JOINTS.iter().map(|s| s.to_string()).collect(),
            dominant: HandUse::Required,
            non_dominant: HandUse::Off,
        }
    }

    pub fn isr_two_hand() -> Self {
        ChannelSpec {
            non_dominant: HandUse::ZeroIfAbsent,
            ..Self::isr_one_hand()
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.body_joints.len()
            + HAND_DIM * usize::from(self.dominant != HandUse::Off)
            + HAND_DIM * usize::from(self.non_dominant != HandUse::Off)
    }

    fn validate(&self) -> Result<(), PoseError> {
        if let Some(j) = self.body_joints.iter().find(|j| BELOW_HIP.contains(&j.as_str())) {
            return Err(PoseError::Invalid(format!("joint {j} is below the hips")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Tensor,
    /// Constituent groups and their widths, in column order.
    pub channel_map: Vec<(String, usize)>,
}

impl FeatureMatrix {
    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn frames(&self) -> usize {
        self.rows.rows()
    }
}

fn hand_stats(seq: &PoseSequence, side: Side) -> HandStats {
    let hands = seq.frames.iter().filter_map(|f| match side {
        Side::Right if !f.imputed.hand_right => f.hand_right.as_ref(),
        Side::Left if !f.imputed.hand_left => f.hand_left.as_ref(),
        _ => None,
    });
    HandStats::from_hands(hands)
}

/// Per-frame concatenation of the requested channels. Expects an imputed
/// sequence whose dominant hand sits in the right slot.
pub fn build_features(seq: &PoseSequence, spec: &ChannelSpec) -> Result<FeatureMatrix, PoseError> {
    spec.validate()?;
    if seq.is_empty() {
        return Err(PoseError::Empty);
    }
    let mut channel_map = Vec::new();
    if !spec.body_joints.is_empty() {
        channel_map.push(("body".to_string(), 2 * spec.body_joints.len()));
    }
    let mut hands: Vec<(Side, Option<HandStats>)> = Vec::new();
    for (side, usage, name) in [
        (Side::Right, spec.dominant, "dominant_hand"),
        (Side::Left, spec.non_dominant, "non_dominant_hand"),
    ] {
        let slot = |f: &PoseFrame| match side {
            Side::Right => f.hand_right.is_some(),
            Side::Left => f.hand_left.is_some(),
        };
        match usage {
            HandUse::Off => continue,
            HandUse::ZeroIfAbsent if !seq.frames.iter().any(slot) => hands.push((side, None)),
            _ => hands.push((side, Some(hand_stats(seq, side)))),
        }
        channel_map.push((name.to_string(), HAND_DIM));
    }
    let dim = spec.dim();
    let mut rows = Tensor::zeros(seq.len(), dim);
    for (t, f) in seq.frames.iter().enumerate() {
        let row = rows.row_mut(t);
        let mut off = 0;
        if !spec.body_joints.is_empty() {
            let body = f.body.as_ref().ok_or_else(|| PoseError::MissingChannel {
                frame: t,
                channel: "body".into(),
            })?;
            let v = normalize_body(body, &spec.body_joints, t)?;
            row[..v.len()].copy_from_slice(&v);
            off += v.len();
        }
        for (side, stats) in &hands {
            if let Some(stats) = stats {
                let hand = match side {
                    Side::Right => f.hand_right.as_ref(),
                    Side::Left => f.hand_left.as_ref(),
                }
                .ok_or_else(|| PoseError::MissingChannel {
                    frame: t,
                    channel: match side {
                        Side::Right => "hand_right".into(),
                        Side::Left => "hand_left".into(),
                    },
                })?;
                row[off..off + HAND_DIM].copy_from_slice(&normalize_hand(hand, stats));
            }
            off += HAND_DIM;
        }
    }
    Ok(FeatureMatrix { rows, channel_map })
}

/// Handedness resolution, mirroring so the dominant hand is on the right,
/// and imputation of every channel that appears somewhere in the video.
pub fn prepare(seq: &PoseSequence) -> Result<(PoseSequence, HandednessReport), PoseError> {
    seq.validate()?;
    let report = select_dominant_hand(seq)?;
    let oriented = if report.flipped {
        mirror_flip(seq)
    } else {
        seq.clone()
    };
    let channels = available_channels(&oriented);
    Ok((impute_missing(&oriented, &channels)?, report))
}
