// Planar hand kinematics. A shape is a handful of joint-angle parameters;
// `joints` turns it into 21 MediaPipe-ordered keypoints relative to the
// wrist, in image units (y grows downwards, fingers point up at rotation 0).

use rand::Rng;

use crate::pose::{Point, HAND_JOINTS};

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    /// Flexion per finger (thumb first), 0 = straight, 1 = fully curled.
    pub curl: [f64; 5],
    /// Extra abduction of the fingers, radians.
    pub spread: f64,
    /// In-plane rotation of the whole hand, radians.
    pub rotation: f64,
    /// Vertical foreshortening (palm tilt), 1 = facing the camera.
    pub pitch: f64,
}

// (base x, base y, base angle, segment lengths) per finger, wrist at origin,
// lengths in units of the wrist-to-middle-tip distance.
const FINGERS: [([f64; 2], f64, [f64; 3]); 5] = [
    ([0.16, -0.12], 0.95, [0.24, 0.20, 0.17]),
    ([0.13, -0.50], 0.18, [0.29, 0.19, 0.16]),
    ([0.00, -0.52], 0.00, [0.32, 0.21, 0.17]),
    ([-0.11, -0.49], -0.16, [0.29, 0.19, 0.16]),
    ([-0.21, -0.44], -0.34, [0.23, 0.15, 0.13]),
];
const BEND: [f64; 3] = [0.9, 1.3, 0.9];

impl Shape {
    pub fn random(rng: &mut impl Rng) -> Shape {
        let mut curl = [0.0; 5];
        for c in &mut curl {
            *c = rng.random_range(0.0..1.0);
        }
        Shape {
            curl,
            spread: rng.random_range(-0.15..0.3),
            rotation: rng.random_range(-0.7..0.7),
            pitch: rng.random_range(0.6..1.0),
        }
    }

    pub fn rest() -> Shape {
        Shape {
            curl: [0.3; 5],
            spread: 0.0,
            rotation: std::f64::consts::PI,
            pitch: 0.8,
        }
    }

    pub fn pause() -> Shape {
        Shape {
            curl: [0.1, 0.15, 0.15, 0.15, 0.15],
            spread: 0.05,
            rotation: 0.1,
            pitch: 0.95,
        }
    }

    pub fn blend(&self, other: &Shape, t: f64) -> Shape {
        let l = |a: f64, b: f64| a + (b - a) * t;
        let mut curl = [0.0; 5];
        for (i, c) in curl.iter_mut().enumerate() {
            *c = l(self.curl[i], other.curl[i]);
        }
        Shape {
            curl,
            spread: l(self.spread, other.spread),
            rotation: l(self.rotation, other.rotation),
            pitch: l(self.pitch, other.pitch),
        }
    }

    /// Euclidean distance between rendered unit-size hands, joint-averaged.
    pub fn distance(&self, other: &Shape) -> f64 {
        let a = self.joints(1.0, 0.0, false);
        let b = other.joints(1.0, 0.0, false);
        let sq: f64 = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
            .sum();
        (sq / HAND_JOINTS as f64).sqrt() * 4.0
    }

    /// Keypoints relative to the wrist. `mirrored` renders the anatomical
    /// opposite hand (x reflected).
    pub fn joints(&self, size: f64, extra_rotation: f64, mirrored: bool) -> [Point; HAND_JOINTS] {
        let mut local = [[0.0; 2]; HAND_JOINTS];
        for (f, (base, angle, segs)) in FINGERS.iter().enumerate() {
            let first = if f == 0 { 1 } else { 1 + 4 * f };
            let spread = if f == 0 { 0.0 } else { self.spread * (f as f64 - 2.5) / 2.0 };
            let bend_dir = if f == 0 { -1.0 } else { 1.0 };
            let mut p = *base;
            let mut dir = angle + spread;
            if f == 0 {
                // Thumb CMC sits between wrist and its base.
                local[first] = [base[0] * 0.6, base[1] * 0.5];
                p = *base;
                local[first + 1] = p;
                for (k, len) in segs.iter().take(2).enumerate() {
                    dir += bend_dir * self.curl[0] * BEND[k + 1] * 0.8;
                    let l = len * (1.0 - 0.35 * self.curl[0]);
                    p = [p[0] + l * dir.sin(), p[1] - l * dir.cos()];
                    local[first + 2 + k] = p;
                }
                continue;
            }
            local[first] = p;
            for (k, len) in segs.iter().enumerate() {
                dir += bend_dir * self.curl[f] * BEND[k] * 0.5;
                let l = len * (1.0 - 0.55 * self.curl[f]);
                p = [p[0] + l * dir.sin(), p[1] - l * dir.cos()];
                local[first + 1 + k] = p;
            }
        }
        let (s, c) = (self.rotation + extra_rotation).sin_cos();
        let mut out = [[0.0; 2]; HAND_JOINTS];
        for (o, p) in out.iter_mut().zip(&local) {
            let y = p[1] * self.pitch;
            let x = p[0] * c - y * s;
            let y = p[0] * s + y * c;
            *o = [if mirrored { -x } else { x } * size, y * size];
        }
        out
    }
}
