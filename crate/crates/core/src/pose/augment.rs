// Training-time perturbations of raw keypoints. Hands are rotated and scaled
// about their wrists, jittered per joint, and the clip is resampled in time.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Hand, PoseFrame, PoseSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augment {
    /// Maximum in-plane hand rotation, radians.
    pub rotation: f64,
    /// Maximum relative change of hand size.
    pub scale: f64,
    /// Per-joint noise as a fraction of the wrist-to-middle-knuckle length.
    pub jitter: f64,
    /// Maximum deviation of the per-frame playback rate from 1. Rates below
    /// 1.5 never skip two source frames in a row.
    pub stretch: f64,
}

impl Default for Augment {
    fn default() -> Self {
        Augment {
            rotation: 0.2,
            scale: 0.1,
            jitter: 0.03,
            stretch: 0.4,
        }
    }
}

fn perturb_hand(hand: &Hand, rot: f64, scale: f64, jitter: &Normal<f64>, rng: &mut impl Rng) -> Hand {
    let w = hand.0[0];
    let size = ((hand.0[9][0] - w[0]).powi(2) + (hand.0[9][1] - w[1]).powi(2)).sqrt();
    let (s, c) = rot.sin_cos();
    let mut out = hand.0;
    for (i, p) in out.iter_mut().enumerate() {
        let d = [p[0] - w[0], p[1] - w[1]];
        let mut q = [w[0] + scale * (c * d[0] - s * d[1]), w[1] + scale * (s * d[0] + c * d[1])];
        if i > 0 {
            q[0] += size * jitter.sample(rng);
            q[1] += size * jitter.sample(rng);
        }
        *p = q;
    }
    Hand(out)
}

/// A randomly perturbed copy of `seq`. One rotation and scale per hand is
/// drawn for the whole clip; jitter and playback rate vary per frame.
pub fn augment(seq: &PoseSequence, cfg: &Augment, rng: &mut impl Rng) -> PoseSequence {
    let jitter = Normal::new(0.0, cfg.jitter.max(0.0)).expect("finite jitter");
    let draw = |r: &mut dyn rand::RngCore| {
        let rot = if cfg.rotation > 0.0 { r.random_range(-cfg.rotation..cfg.rotation) } else { 0.0 };
        let scale = if cfg.scale > 0.0 { 1.0 + r.random_range(-cfg.scale..cfg.scale) } else { 1.0 };
        (rot, scale)
    };
    let right = draw(rng);
    let left = draw(rng);
    let stretch = cfg.stretch.clamp(0.0, 0.5);
    let mut sources = Vec::with_capacity(seq.len() * 2);
    let mut pos = 0.0;
    while (pos as usize) < seq.len() {
        sources.push(pos as usize);
        pos += if stretch > 0.0 { 1.0 + rng.random_range(-stretch..stretch) } else { 1.0 };
    }
    let frames = sources
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let src = &seq.frames[s];
            PoseFrame {
                timestamp: i as f64 / seq.fps,
                hand_left: src.hand_left.as_ref().map(|h| perturb_hand(h, left.0, left.1, &jitter, rng)),
                hand_right: src.hand_right.as_ref().map(|h| perturb_hand(h, right.0, right.1, &jitter, rng)),
                body: src.body.clone(),
                imputed: src.imputed.clone(),
            }
        })
        .collect();
    PoseSequence {
        video_id: seq.video_id.clone(),
        fps: seq.fps,
        frames,
    }
}
