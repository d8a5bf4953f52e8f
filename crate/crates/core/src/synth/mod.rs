//! Seeded synthetic signing: kinematic hand shapes for fingerspelled
//! symbols, a small sign vocabulary with wrist trajectories, signer
//! variation, and renderers producing pose sequences with ground-truth spans.
//!
//! All coordinates are quantised to multiples of 2⁻¹⁴, so `x ↦ 1 − x` is
//! exact and mirrored twins are bitwise reflections of each other.

mod corpus;
mod hand;
mod sentence;

pub use corpus::{
    isr_clip as corpus_clip,
    fs_corpus, isr_corpus, read_corpus, write_corpus, CorpusLabel, CorpusRecord, FsSample,
    IsrSample,
};
pub use hand::Shape;
pub use sentence::{perturb_candidates, random_sentence, render_sentence, sentence_case, SentenceCase, SentenceVideo};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ctc::Alphabet;
use crate::pose::{mirror_flip, Hand, Imputed, Point, PoseFrame, PoseSequence};

pub const FPS: f64 = 30.0;
const QUANTUM: f64 = 1.0 / 16384.0;
const HAND_SIZE: f64 = 0.08;

/// Glosses of the desk-scale sign vocabulary.
pub const TOY_VOCABULARY: [&str; 20] = [
    "TRAVEL", "TO", "PARK", "WITH", "DOG", "CAT", "HAPPY", "HOUSE", "WORK", "SCHOOL", "EAT",
    "DRINK", "BOOK", "FRIEND", "WATER", "GO", "LIKE", "HELP", "TIME", "DAY",
];

/// Default world seed; fixtures and toy models are generated from it.
pub const WORLD_SEED: u64 = 20_240_611;

/// How a sign moves: wrist path in signing space plus handshape change.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSpec {
    pub gloss: String,
    pub start_shape: Shape,
    pub end_shape: Shape,
    /// Wrist offsets from the signing-space centre.
    pub start: Point,
    pub end: Point,
    /// Perpendicular bulge of the wrist path at its midpoint.
    pub arc: f64,
    /// Non-dominant hand shape for two-handed signs.
    pub non_dominant: Option<Shape>,
}

/// Per-signer variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signer {
    pub id: u32,
    pub scale: f64,
    pub rotation: f64,
    pub speed: f64,
    pub offset: Point,
    pub noise: f64,
    pub left_handed: bool,
}

/// A labelled frame interval in a rendered video (inclusive bounds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanLabel {
    pub kind: SpanKind,
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Letter,
    Pause,
    Word,
    Sign,
}

/// The fixed generative model: symbol templates and sign definitions.
#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    alphabet: Alphabet,
    letters: BTreeMap<char, Shape>,
    pause: Shape,
    rest: Shape,
    vocabulary: Vec<SignSpec>,
}

fn seeded(seed: u64, stream: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("{seed}/{stream}").as_bytes());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

impl World {
    pub fn new(seed: u64) -> Self {
        Self::with_vocabulary(seed, &TOY_VOCABULARY)
    }

    pub fn with_vocabulary(seed: u64, vocabulary: &[&str]) -> Self {
        let alphabet = Alphabet::toy();
        let mut rng = seeded(seed, "letters");
        let rest = Shape::rest();
        let pause = Shape::pause();
        let mut taken = vec![rest.clone(), pause.clone()];
        let mut letters = BTreeMap::new();
        for &c in alphabet.symbols() {
            if c == '|' {
                continue;
            }
            let shape = loop {
                let s = Shape::random(&mut rng);
                if taken.iter().all(|t| t.distance(&s) > 0.55) {
                    break s;
                }
            };
            taken.push(shape.clone());
            letters.insert(c, shape);
        }
        let vocabulary = vocabulary
            .iter()
            .map(|g| Self::sign_from(&mut seeded(seed, &format!("sign/{g}")), g, true))
            .collect();
        World {
            seed,
            alphabet,
            letters,
            pause,
            rest,
            vocabulary,
        }
    }

    fn sign_from(rng: &mut ChaCha8Rng, gloss: &str, allow_two_hands: bool) -> SignSpec {
        let start_shape = Shape::random(rng);
        let end_shape = if rng.random_bool(0.35) {
            Shape::random(rng)
        } else {
            start_shape.clone()
        };
        let start = [rng.random_range(-0.09..0.09), rng.random_range(-0.08..0.08)];
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let len = rng.random_range(0.05..0.13);
        let end = [start[0] + len * angle.cos(), start[1] + len * angle.sin()];
        SignSpec {
            gloss: gloss.to_string(),
            start_shape,
            end_shape,
            start,
            end,
            arc: rng.random_range(-0.04..0.04),
            non_dominant: (allow_two_hands && rng.random_bool(0.3)).then(|| Shape::random(rng)),
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn vocabulary(&self) -> Vec<String> {
        self.vocabulary.iter().map(|s| s.gloss.clone()).collect()
    }

    pub fn letter(&self, c: char) -> Option<&Shape> {
        self.letters.get(&c.to_ascii_uppercase())
    }

    /// Vocabulary sign, or a deterministic out-of-vocabulary sign derived
    /// from the gloss text.
    pub fn sign(&self, gloss: &str) -> SignSpec {
        let upper = gloss.to_uppercase();
        self.vocabulary
            .iter()
            .find(|s| s.gloss == upper)
            .cloned()
            .unwrap_or_else(|| Self::sign_from(&mut seeded(self.seed, &format!("oov/{upper}")), &upper, true))
    }

    pub fn signer(&self, id: u32) -> Signer {
        let mut rng = seeded(self.seed, &format!("signer/{id}"));
        Signer {
            id,
            scale: rng.random_range(0.88..1.12),
            rotation: rng.random_range(-0.12..0.12),
            speed: rng.random_range(0.85..1.15),
            offset: [rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03)],
            noise: rng.random_range(0.8..1.2),
            left_handed: id % 5 == 4,
        }
    }

    /// A right-handed copy of a signer.
    pub fn right_handed(&self, id: u32) -> Signer {
        Signer {
            left_handed: false,
            ..self.signer(id)
        }
    }
}

/// Wrist target and hand shape for one frame of one hand.
#[derive(Debug, Clone, PartialEq)]
struct HandState {
    wrist: Point,
    shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
struct Keyframe {
    dom: HandState,
    nd: Option<HandState>,
}

const FS_LOCATION: Point = [-0.12, -0.06];
const REST_LOCATION: Point = [-0.08, 0.28];
const ND_REST: Point = [0.10, 0.30];

/// Frame-by-frame choreography before rendering.
pub(crate) struct Timeline<'w> {
    world: &'w World,
    signer: &'w Signer,
    frames: Vec<Keyframe>,
    pub spans: Vec<SpanLabel>,
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

impl<'w> Timeline<'w> {
    pub fn new(world: &'w World, signer: &'w Signer) -> Self {
        Timeline {
            world,
            signer,
            frames: Vec::new(),
            spans: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    fn frames_for(&self, base: usize, rng: &mut impl Rng) -> usize {
        let jitter: f64 = rng.random_range(-0.5..0.5);
        ((base as f64 * self.signer.speed) + jitter).round().max(1.0) as usize
    }

    fn last(&self) -> Keyframe {
        self.frames.last().cloned().unwrap_or(Keyframe {
            dom: HandState {
                wrist: REST_LOCATION,
                shape: self.world.rest.clone(),
            },
            nd: None,
        })
    }

    fn push(&mut self, kf: Keyframe) {
        self.frames.push(kf);
    }

    fn span(&mut self, kind: SpanKind, label: &str, start: usize) {
        self.spans.push(SpanLabel {
            kind,
            label: label.to_string(),
            start,
            end: self.frames.len() - 1,
        });
    }

    /// Moves the dominant hand to `to` over `n` frames, blending the shape.
    fn travel(&mut self, to: &HandState, n: usize) {
        let from = self.last();
        for i in 1..=n {
            let t = i as f64 / (n + 1) as f64;
            self.push(Keyframe {
                dom: HandState {
                    wrist: lerp(from.dom.wrist, to.wrist, t),
                    shape: from.dom.shape.blend(&to.shape, t),
                },
                nd: None,
            });
        }
    }

    pub fn rest(&mut self, n: usize) {
        let state = HandState {
            wrist: REST_LOCATION,
            shape: self.world.rest.clone(),
        };
        for _ in 0..n {
            self.push(Keyframe {
                dom: state.clone(),
                nd: None,
            });
        }
    }

    /// Fingerspells `words` as `| W O R D | … |` beside the shoulder.
    /// Unknown symbols are skipped.
    pub fn fingerspell(&mut self, words: &[String], rng: &mut impl Rng) {
        let pause = HandState {
            wrist: FS_LOCATION,
            shape: self.world.pause.clone(),
        };
        let n = self.frames_for(3, rng);
        self.travel(&pause, n);
        self.pause_hold(rng);
        for word in words {
            let start = self.len();
            let mut prev: Option<char> = None;
            for c in word.chars().map(|c| c.to_ascii_uppercase()) {
                let Some(shape) = self.world.letter(c).cloned() else { continue };
                if prev == Some(c) {
                    // Doubled letters get a brief release towards the pause shape.
                    let last = self.last();
                    self.push(Keyframe {
                        dom: HandState {
                            wrist: [last.dom.wrist[0] + 0.01, last.dom.wrist[1]],
                            shape: shape.blend(&self.world.pause, 0.6),
                        },
                        nd: None,
                    });
                }
                let hold = rng.random_range(2..=6usize);
                let hold = ((hold as f64) * self.signer.speed).round().clamp(2.0, 7.0) as usize;
                let from = self.last().dom.shape;
                let s0 = self.len();
                for i in 0..hold {
                    let drift = [rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004)];
                    let shape = if i == 0 { from.blend(&shape, 0.5) } else { shape.clone() };
                    self.push(Keyframe {
                        dom: HandState {
                            wrist: [FS_LOCATION[0] + drift[0], FS_LOCATION[1] + drift[1]],
                            shape,
                        },
                        nd: None,
                    });
                }
                self.span(SpanKind::Letter, &c.to_string(), s0);
                prev = Some(c);
            }
            if self.len() > start {
                self.span(SpanKind::Word, word, start);
            }
            self.pause_hold(rng);
        }
    }

    fn pause_hold(&mut self, rng: &mut impl Rng) {
        let n = rng.random_range(3..=6usize);
        let from = self.last().dom.shape;
        let s0 = self.len();
        for i in 0..n {
            let shape = if i == 0 {
                from.blend(&self.world.pause, 0.5)
            } else {
                self.world.pause.clone()
            };
            self.push(Keyframe {
                dom: HandState {
                    wrist: FS_LOCATION,
                    shape,
                },
                nd: None,
            });
        }
        self.span(SpanKind::Pause, "|", s0);
    }

    /// Performs a sign: approach, 8–14 frames of movement, labelled span.
    pub fn sign(&mut self, spec: &SignSpec, rng: &mut impl Rng) {
        let start = HandState {
            wrist: spec.start,
            shape: spec.start_shape.clone(),
        };
        let n = self.frames_for(3, rng);
        self.travel(&start, n);
        let len = self.frames_for(rng.random_range(8..=14usize), rng).clamp(8, 16);
        let s0 = self.len();
        let d = [spec.end[0] - spec.start[0], spec.end[1] - spec.start[1]];
        let normal = [-d[1], d[0]];
        let norm = (normal[0].powi(2) + normal[1].powi(2)).sqrt().max(1e-9);
        for i in 0..len {
            let t = i as f64 / (len - 1) as f64;
            let eased = t * t * (3.0 - 2.0 * t);
            let bulge = spec.arc * 4.0 * eased * (1.0 - eased) / norm;
            let base = lerp(spec.start, spec.end, eased);
            let wrist = [base[0] + bulge * normal[0], base[1] + bulge * normal[1]];
            let nd = spec.non_dominant.as_ref().map(|shape| HandState {
                // Mirror image of the dominant wrist about the body midline.
                wrist: [-wrist[0] + 0.02, wrist[1] + 0.02],
                shape: shape.clone(),
            });
            self.push(Keyframe {
                dom: HandState {
                    wrist,
                    shape: spec.start_shape.blend(&spec.end_shape, eased),
                },
                nd,
            });
        }
        self.span(SpanKind::Sign, &spec.gloss, s0);
    }

    pub fn go_rest(&mut self, rng: &mut impl Rng) {
        let rest = HandState {
            wrist: REST_LOCATION,
            shape: self.world.rest.clone(),
        };
        let n = self.frames_for(3, rng);
        self.travel(&rest, n);
    }

    /// Renders joints with signer transform, noise, dropout and
    /// quantisation; mirrors the result for left-handed signers.
    pub fn render(self, video_id: &str, rng: &mut impl Rng) -> (PoseSequence, Vec<SpanLabel>) {
        let s = self.signer;
        let hand_noise = Normal::new(0.0, 0.035 * HAND_SIZE * s.noise).expect("positive");
        let body_noise = Normal::new(0.0, 0.002 * s.noise).expect("positive");
        let q = |v: f64| (v / QUANTUM).round() * QUANTUM;
        let centre = [0.5 + s.offset[0], 0.58 + s.offset[1]];
        let shoulder_r = [0.40 + s.offset[0], 0.50 + s.offset[1]];
        let shoulder_l = [0.60 + s.offset[0], 0.50 + s.offset[1]];
        let to_image = |p: Point| [centre[0] + p[0] * s.scale, centre[1] + p[1] * s.scale];
        let mut frames = Vec::with_capacity(self.frames.len());
        for (t, kf) in self.frames.iter().enumerate() {
            let noisy = |p: Point, n: &Normal<f64>, rng: &mut dyn rand::RngCore| {
                [q(p[0] + n.sample(rng)), q(p[1] + n.sample(rng))]
            };
            let dom_wrist = to_image(kf.dom.wrist);
            let dom_joints = kf.dom.shape.joints(HAND_SIZE * s.scale, s.rotation, false);
            let dom_visible = !rng.random_bool(0.03);
            let hand_right = dom_visible.then(|| {
                Hand(dom_joints.map(|j| noisy([dom_wrist[0] + j[0], dom_wrist[1] + j[1]], &hand_noise, rng)))
            });
            let (nd_wrist, hand_left) = match &kf.nd {
                Some(nd) => {
                    let w = to_image(nd.wrist);
                    let joints = nd.shape.joints(HAND_SIZE * s.scale, -s.rotation, true);
                    let visible = !rng.random_bool(0.03);
                    (
                        w,
                        visible.then(|| Hand(joints.map(|j| noisy([w[0] + j[0], w[1] + j[1]], &hand_noise, rng)))),
                    )
                }
                None => (to_image(ND_REST), None),
            };
            let elbow = |shoulder: Point, wrist: Point, out: f64| {
                let mid = lerp(shoulder, wrist, 0.5);
                [mid[0] + out, mid[1] + 0.09]
            };
            let mut body = BTreeMap::new();
            let mut put = |name: &str, p: Point, rng: &mut dyn rand::RngCore| {
                body.insert(name.to_string(), noisy(p, &body_noise, rng));
            };
            put("nose", [0.5 + s.offset[0], 0.30 + s.offset[1]], rng);
            put("right_shoulder", shoulder_r, rng);
            put("left_shoulder", shoulder_l, rng);
            put("right_elbow", elbow(shoulder_r, dom_wrist, -0.07), rng);
            put("left_elbow", elbow(shoulder_l, nd_wrist, 0.07), rng);
            put("right_wrist", dom_wrist, rng);
            put("left_wrist", nd_wrist, rng);
            put("right_hip", [0.42 + s.offset[0], 0.86 + s.offset[1]], rng);
            put("left_hip", [0.58 + s.offset[0], 0.86 + s.offset[1]], rng);
            frames.push(PoseFrame {
                timestamp: t as f64 / FPS,
                hand_left,
                hand_right,
                body: Some(body),
                imputed: Imputed::default(),
            });
        }
        let mut seq = PoseSequence {
            video_id: video_id.to_string(),
            fps: FPS,
            frames,
        };
        if s.left_handed {
            seq = mirror_flip(&seq);
        }
        (seq, self.spans)
    }
}
