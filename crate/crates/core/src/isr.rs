//! Isolated sign recognition: per-frame multi-label scores over a gloss
//! vocabulary plus `ANY` (some sign) and `NULL` (no sign), from two TCN
//! branches whose logits are combined by element-wise max.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::FrameScores;
use crate::fingerspelling::WordDetection;
use crate::gloss::{stem_text, GlossKind, GlossSequence, GlossToken};
use crate::nn::{
    fit, load_weights, save_weights, ModelFingerprint, sigmoid, split_by_signer, NnError, Params, SignerSplit, Tape,
    Tcn, TcnConfig, Tensor, TrainOutcome, TrainRecipe,
};
use crate::pose::{augment, build_features, prepare, Augment, ChannelSpec, PoseError, PoseSequence};
use crate::synth::{CorpusLabel, CorpusRecord};

pub const MODEL_KIND: &str = "isr";
pub const ANY: &str = "ANY";
pub const NULL: &str = "NULL";
/// Shortest segment a gloss may occupy in [`align_glosses`].
pub const MIN_SIGN_FRAMES: usize = 3;

#[derive(Debug, Error)]
pub enum IsrError {
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("{glosses} glosses need at least {required} frames but the interval {start}..={end} has {frames}")]
    Infeasible {
        glosses: usize,
        required: usize,
        frames: usize,
        start: usize,
        end: usize,
    },
    #[error("anchors: {0}")]
    Anchors(String),
    #[error("corpus: {0}")]
    Corpus(String),
}

/// Gloss names in class order; `ANY` and `NULL` follow the glosses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignVocabulary {
    glosses: Vec<String>,
    index: HashMap<String, usize>,
}

fn vocab_key(gloss: &str) -> String {
    stem_text(&gloss.to_uppercase())
}

impl SignVocabulary {
    pub fn new<S: AsRef<str>>(glosses: &[S]) -> Result<Self, IsrError> {
        let mut index = HashMap::new();
        let mut names = Vec::with_capacity(glosses.len());
        for g in glosses {
            let name = g.as_ref().trim().to_uppercase();
            if name.is_empty() {
                return Err(IsrError::Vocabulary("empty gloss name".into()));
            }
            if name == ANY || name == NULL {
                return Err(IsrError::Vocabulary(format!("{name} is a reserved class")));
            }
            if index.insert(vocab_key(&name), names.len()).is_some() {
                return Err(IsrError::Vocabulary(format!("{name} duplicates another entry after stemming")));
            }
            names.push(name);
        }
        Ok(SignVocabulary { glosses: names, index })
    }

    /// Reads a JSON list of gloss names.
    pub fn from_json(text: &str) -> Result<Self, IsrError> {
        let names: Vec<String> = serde_json::from_str(text).map_err(|e| IsrError::Vocabulary(e.to_string()))?;
        Self::new(&names)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.glosses).expect("strings serialize")
    }

    /// Class index of a gloss, case-insensitive and stem-normalised.
    pub fn lookup(&self, gloss: &str) -> Option<usize> {
        self.index.get(&vocab_key(gloss)).copied()
    }

    pub fn glosses(&self) -> &[String] {
        &self.glosses
    }

    /// Output width: glosses plus `ANY` and `NULL`.
    pub fn classes(&self) -> usize {
        self.glosses.len() + 2
    }

    pub fn any(&self) -> usize {
        self.glosses.len()
    }

    pub fn null(&self) -> usize {
        self.glosses.len() + 1
    }

    pub fn labels(&self) -> Vec<String> {
        let mut l = self.glosses.clone();
        l.push(ANY.into());
        l.push(NULL.into());
        l
    }

    pub fn name(&self, class: usize) -> &str {
        match class {
            c if c < self.glosses.len() => &self.glosses[c],
            c if c == self.any() => ANY,
            _ => NULL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsrConfig {
    /// Body + dominant + non-dominant hand.
    pub two_hand: TcnConfig,
    /// Body + dominant hand.
    pub one_hand: TcnConfig,
}

impl IsrConfig {
    pub fn new(classes: usize, channels: usize) -> Self {
        IsrConfig {
            two_hand: TcnConfig::isr(ChannelSpec::isr_two_hand().dim(), classes, channels),
            one_hand: TcnConfig::isr(ChannelSpec::isr_one_hand().dim(), classes, channels),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsrModel {
    pub config: IsrConfig,
    pub params: Params,
    pub vocabulary: SignVocabulary,
    two: Tcn,
    one: Tcn,
}

/// Per-frame inputs of both branches.
#[derive(Debug, Clone)]
pub struct IsrFeatures {
    pub two_hand: Tensor,
    pub one_hand: Tensor,
}

impl IsrFeatures {
    pub fn frames(&self) -> usize {
        self.two_hand.rows()
    }

    fn window(&self, start: usize, end: usize) -> IsrFeatures {
        IsrFeatures {
            two_hand: self.two_hand.slice_rows(start, end),
            one_hand: self.one_hand.slice_rows(start, end),
        }
    }

    fn concat(parts: &[IsrFeatures]) -> IsrFeatures {
        let cat = |f: fn(&IsrFeatures) -> &Tensor| {
            let cols = f(&parts[0]).cols();
            let data: Vec<f64> = parts.iter().flat_map(|p| f(p).data().iter().copied()).collect();
            Tensor::from_vec(data.len() / cols, cols, data).expect("equal widths")
        };
        IsrFeatures {
            two_hand: cat(|p| &p.two_hand),
            one_hand: cat(|p| &p.one_hand),
        }
    }
}

/// Resolves handedness (mirroring left-dominant signers), imputes gaps and
/// builds both branch inputs.
pub fn isr_features(poses: &PoseSequence) -> Result<IsrFeatures, IsrError> {
    let (prepared, _) = prepare(poses)?;
    Ok(IsrFeatures {
        two_hand: build_features(&prepared, &ChannelSpec::isr_two_hand())?.rows,
        one_hand: build_features(&prepared, &ChannelSpec::isr_one_hand())?.rows,
    })
}

impl IsrModel {
    pub fn new(vocabulary: SignVocabulary, channels: usize, seed: u64) -> Result<Self, IsrError> {
        let config = IsrConfig::new(vocabulary.classes(), channels);
        let (two, one) = Self::branches(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        two.init(&mut params, &mut rng);
        one.init(&mut params, &mut rng);
        params.round_to_f32();
        Ok(IsrModel {
            config,
            params,
            vocabulary,
            two,
            one,
        })
    }

    fn branches(config: &IsrConfig) -> Result<(Tcn, Tcn), IsrError> {
        Ok((
            Tcn::new(config.two_hand.clone(), "two_hand.")?,
            Tcn::new(config.one_hand.clone(), "one_hand.")?,
        ))
    }

    pub fn from_parts(config: IsrConfig, params: Params, vocabulary: SignVocabulary) -> Result<Self, IsrError> {
        for (name, c, dim) in [
            ("two-hand", &config.two_hand, ChannelSpec::isr_two_hand().dim()),
            ("one-hand", &config.one_hand, ChannelSpec::isr_one_hand().dim()),
        ] {
            if c.output_classes != vocabulary.classes() {
                return Err(IsrError::Vocabulary(format!(
                    "{name} head has {} outputs for {} classes",
                    c.output_classes,
                    vocabulary.classes()
                )));
            }
            if c.input_dim != dim {
                return Err(IsrError::Nn(NnError::Config(format!(
                    "{name} branch expects width {}, features have {dim}",
                    c.input_dim
                ))));
            }
        }
        let (two, one) = Self::branches(&config)?;
        let mut expected = Params::new();
        two.layout(&mut expected);
        one.layout(&mut expected);
        params.check_layout(&expected)?;
        Ok(IsrModel {
            config,
            params,
            vocabulary,
            two,
            one,
        })
    }

    pub fn fingerprint(&self) -> ModelFingerprint {
        ModelFingerprint::of(&self.config, &self.params)
    }

    pub fn save(&self, dir: &Path) -> Result<String, IsrError> {
        Ok(save_weights(dir, MODEL_KIND, &self.config, &self.vocabulary.labels(), &self.params)?)
    }

    pub fn load(dir: &Path) -> Result<Self, IsrError> {
        let bundle = load_weights(dir, MODEL_KIND)?;
        let config: IsrConfig =
            serde_json::from_value(bundle.config).map_err(|e| NnError::Corrupt(format!("config: {e}")))?;
        let labels = bundle.labels;
        if labels.len() < 2 || labels[labels.len() - 2] != ANY || labels[labels.len() - 1] != NULL {
            return Err(IsrError::Vocabulary("labels must end with ANY, NULL".into()));
        }
        let vocabulary = SignVocabulary::new(&labels[..labels.len() - 2])?;
        Self::from_parts(config, bundle.params, vocabulary)
    }

    fn forward(&self, tape: &mut Tape, x: &IsrFeatures) -> Result<crate::nn::Var, IsrError> {
        let a = tape.input(x.two_hand.clone());
        let b = tape.input(x.one_hand.clone());
        let la = self.two.forward(tape, a)?;
        let lb = self.one.forward(tape, b)?;
        Ok(tape.max(la, lb)?)
    }

    /// Element-wise max of the two branches' logits, `(T, classes)`.
    pub fn logits(&self, x: &IsrFeatures) -> Result<Tensor, IsrError> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, x)?;
        Ok(tape.value(out).clone())
    }

    /// Both branches' logits separately.
    pub fn branch_logits(&self, x: &IsrFeatures) -> Result<(Tensor, Tensor), IsrError> {
        Ok((
            self.two.logits(&self.params, &x.two_hand)?,
            self.one.logits(&self.params, &x.one_hand)?,
        ))
    }

    pub fn scores_for_features(&self, x: &IsrFeatures, fps: f64) -> Result<FrameScores, IsrError> {
        Ok(FrameScores::from_logits_sigmoid(&self.logits(x)?, fps))
    }

    /// Mean per-frame binary cross-entropy (summed over classes) and its
    /// gradient.
    fn loss_and_grad(&self, params: &Params, x: &IsrFeatures, target: &Tensor) -> Result<(f64, Vec<Tensor>), IsrError> {
        let mut tape = Tape::new(params);
        let out = self.forward(&mut tape, x)?;
        let (loss, seed) = bce(tape.value(out), target);
        Ok((loss, tape.backward(out, &seed)))
    }
}

/// Per-frame BCE on logits, summed over classes and averaged over frames.
/// Returns the loss and `d loss / d logits`.
pub fn bce(logits: &Tensor, target: &Tensor) -> (f64, Tensor) {
    let frames = logits.rows().max(1) as f64;
    let mut grad = Tensor::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (k, (&z, &y)) in logits.data().iter().zip(target.data()).enumerate() {
        // log(1 + e^z) − y·z, stable for large |z|.
        loss += z.max(0.0) + libm::log1p(libm::exp(-z.abs())) - y * z;
        grad.data_mut()[k] = (sigmoid(z) - y) / frames;
    }
    (loss / frames, grad)
}

/// Training targets: inside `span` (inclusive) the sign class and `ANY`
/// are on; everywhere else only `NULL`.
pub fn frame_targets(frames: usize, span: Option<(usize, usize)>, class: usize, vocab: &SignVocabulary) -> Tensor {
    let mut y = Tensor::zeros(frames, vocab.classes());
    for t in 0..frames {
        match span {
            Some((s, e)) if (s..=e).contains(&t) => {
                y.set(t, class, 1.0);
                y.set(t, vocab.any(), 1.0);
            }
            _ => y.set(t, vocab.null(), 1.0),
        }
    }
    y
}

/// Per-frame sigmoid scores after handedness resolution.
pub fn isr_scores(model: &IsrModel, poses: &PoseSequence) -> Result<FrameScores, IsrError> {
    model.scores_for_features(&isr_features(poses)?, poses.fps)
}

/// Gloss with the highest time-max-pooled score, excluding `ANY` and `NULL`.
pub fn classify_scores(scores: &FrameScores, vocab: &SignVocabulary) -> String {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for c in 0..vocab.glosses().len() {
        let peak = scores.track(c).into_iter().fold(f64::NEG_INFINITY, f64::max);
        if peak > best.0 {
            best = (peak, c);
        }
    }
    vocab.name(best.1).to_string()
}

pub fn classify(model: &IsrModel, poses: &PoseSequence) -> Result<String, IsrError> {
    Ok(classify_scores(&isr_scores(model, poses)?, &model.vocabulary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossDetection {
    pub gloss: String,
    /// Position of the gloss in the aligned sequence.
    pub token_index: usize,
    pub in_vocabulary: bool,
    /// Mean of the gloss's track over its interval.
    pub score: f64,
    /// Frame of the track's maximum within the interval.
    pub frame: usize,
    /// Inclusive frame span.
    pub interval: (usize, usize),
}

#[derive(Debug)]
pub struct IntervalFailure {
    /// Inclusive frame bounds of the inter-anchor interval (`end < start`
    /// when it is empty).
    pub start: usize,
    pub end: usize,
    pub token_indices: Vec<usize>,
    pub error: IsrError,
}

#[derive(Debug, Default)]
pub struct GlossAlignment {
    pub detections: Vec<GlossDetection>,
    pub failures: Vec<IntervalFailure>,
}

/// Which score track a gloss is matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Track {
    Class(usize),
    Any,
}

/// Vocabulary glosses use their own class; everything else (unknown
/// glosses, classifiers, hand-spelled words) uses `ANY`.
pub fn track_for(token: &GlossToken, vocab: &SignVocabulary) -> Track {
    match token.kind() {
        GlossKind::Gloss => vocab.lookup(token.text()).map_or(Track::Any, Track::Class),
        _ => Track::Any,
    }
}

const LOG_FLOOR: f64 = 1e-12;

/// Best placement of `tracks` in order within `scores[start..=end]`: each
/// gloss takes at least `min_frames` contiguous frames, frames
/// outside glosses are `NULL`. The objective is the sum of log scores of
/// each frame under its assignment. Returns inclusive spans.
pub fn segment_lattice(
    scores: &FrameScores,
    vocab: &SignVocabulary,
    tracks: &[Track],
    start: usize,
    end: usize,
    min_frames: usize,
) -> Result<(Vec<(usize, usize)>, f64), IsrError> {
    let min_frames = min_frames.max(1);
    let frames = if end >= start { end - start + 1 } else { 0 };
    let n = tracks.len();
    let required = n * min_frames;
    if required > frames {
        return Err(IsrError::Infeasible {
            glosses: n,
            required,
            frames,
            start,
            end,
        });
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let class = |tr: Track| match tr {
        Track::Class(c) => c,
        Track::Any => vocab.any(),
    };
    let ln = |t: usize, c: usize| scores.get(start + t, c).max(LOG_FLOOR).ln();
    let prefix = |c: usize| {
        let mut p = vec![0.0; frames + 1];
        for t in 0..frames {
            p[t + 1] = p[t] + ln(t, c);
        }
        p
    };
    let null = prefix(vocab.null());
    let cums: Vec<Vec<f64>> = tracks.iter().map(|&tr| prefix(class(tr))).collect();

    // best[i][t]: first i glosses placed within the first t frames.
    let ninf = f64::NEG_INFINITY;
    let mut best = vec![vec![ninf; frames + 1]; n + 1];
    // back[i][t]: Some(segment start) if frame t−1 ends gloss i, None for a gap.
    let mut back: Vec<Vec<Option<usize>>> = vec![vec![None; frames + 1]; n + 1];
    best[0][0] = 0.0;
    for t in 1..=frames {
        best[0][t] = null[t];
    }
    for i in 1..=n {
        let cum = &cums[i - 1];
        for t in 1..=frames {
            // Gap frame t−1.
            let mut b = if best[i][t - 1] > ninf {
                best[i][t - 1] + (null[t] - null[t - 1])
            } else {
                ninf
            };
            let mut arg = None;
            if t >= min_frames {
                for s in 0..=t - min_frames {
                    let prev = best[i - 1][s];
                    if prev == ninf {
                        continue;
                    }
                    let v = prev + cum[t] - cum[s];
                    if v > b {
                        b = v;
                        arg = Some(s);
                    }
                }
            }
            best[i][t] = b;
            back[i][t] = arg;
        }
    }
    let total = best[n][frames];
    let mut spans = vec![(0, 0); n];
    let (mut i, mut t) = (n, frames);
    while i > 0 {
        match back[i][t] {
            Some(s) => {
                spans[i - 1] = (start + s, start + t - 1);
                i -= 1;
                t = s;
            }
            None => t -= 1,
        }
    }
    Ok((spans, total))
}

/// Aligns the non-anchor tokens of `tokens` between anchors. `anchors[i]`
/// is the span of token `i` when it is an anchor, `None` when it must be
/// aligned. Anchors must be time-ordered. Infeasible intervals are reported
/// in `failures`; the other intervals are still aligned.
pub fn align_glosses_on_scores(
    scores: &FrameScores,
    vocab: &SignVocabulary,
    tokens: &[GlossToken],
    anchors: &[Option<(usize, usize)>],
    min_frames: usize,
) -> Result<GlossAlignment, IsrError> {
    if tokens.len() != anchors.len() {
        return Err(IsrError::Anchors(format!(
            "{} tokens but {} anchor slots",
            tokens.len(),
            anchors.len()
        )));
    }
    let frames = scores.frames();
    let mut prev_end: Option<usize> = None;
    for span in anchors.iter().flatten() {
        if span.0 > span.1 || span.1 >= frames || prev_end.is_some_and(|p| span.0 <= p) {
            return Err(IsrError::Anchors(format!("anchor {span:?} is out of order or out of range")));
        }
        prev_end = Some(span.1);
    }
    let mut out = GlossAlignment::default();
    let mut group: Vec<usize> = Vec::new();
    let mut lo = 0usize;
    let flush = |group: &mut Vec<usize>, lo: usize, hi: Option<usize>, out: &mut GlossAlignment| {
        // Interval is lo..=hi−1 (or the clip end when there is no next anchor).
        let end_excl = hi.unwrap_or(frames);
        if group.is_empty() {
            return;
        }
        let (start, end) = (lo, end_excl.wrapping_sub(1));
        let tracks: Vec<Track> = group.iter().map(|&i| track_for(&tokens[i], vocab)).collect();
        let result = if end_excl <= lo {
            Err(IsrError::Infeasible {
                glosses: group.len(),
                required: group.len() * min_frames,
                frames: 0,
                start,
                end: start.saturating_sub(1),
            })
        } else {
            segment_lattice(scores, vocab, &tracks, start, end, min_frames)
        };
        match result {
            Ok((spans, _)) => {
                for ((&i, &tr), &(s, e)) in group.iter().zip(&tracks).zip(&spans) {
                    let c = match tr {
                        Track::Class(c) => c,
                        Track::Any => vocab.any(),
                    };
                    let mut peak = (f64::NEG_INFINITY, s);
                    let mut sum = 0.0;
                    for t in s..=e {
                        let v = scores.get(t, c);
                        sum += v;
                        if v > peak.0 {
                            peak = (v, t);
                        }
                    }
                    out.detections.push(GlossDetection {
                        gloss: tokens[i].to_string(),
                        token_index: i,
                        in_vocabulary: matches!(tr, Track::Class(_)),
                        score: sum / (e - s + 1) as f64,
                        frame: peak.1,
                        interval: (s, e),
                    });
                }
            }
            Err(error) => out.failures.push(IntervalFailure {
                start,
                end: if end_excl <= lo { start.wrapping_sub(1) } else { end },
                token_indices: group.clone(),
                error,
            }),
        }
        group.clear();
    };
    for (i, anchor) in anchors.iter().enumerate() {
        match anchor {
            Some((s, e)) => {
                flush(&mut group, lo, Some(*s), &mut out);
                lo = e + 1;
            }
            None => group.push(i),
        }
    }
    flush(&mut group, lo, None, &mut out);
    Ok(out)
}

/// Aligns the glosses of `seq` between fingerspelling anchors. `anchors`
/// are the detections of the sequence's hand-spelled tokens, in order.
pub fn align_glosses(
    model: &IsrModel,
    poses: &PoseSequence,
    seq: &GlossSequence,
    anchors: &[WordDetection],
) -> Result<GlossAlignment, IsrError> {
    let spelled = seq.iter().filter(|t| t.kind().is_hand_spelled()).count();
    if spelled != anchors.len() {
        return Err(IsrError::Anchors(format!(
            "{spelled} hand-spelled tokens but {} anchors",
            anchors.len()
        )));
    }
    let mut next = anchors.iter();
    let slots: Vec<Option<(usize, usize)>> = seq
        .iter()
        .map(|t| {
            t.kind()
                .is_hand_spelled()
                .then(|| next.next().map(|a| (a.start_frame, a.end_frame)))
                .flatten()
        })
        .collect();
    align_glosses_on_scores(
        &isr_scores(model, poses)?,
        &model.vocabulary,
        &seq.tokens,
        &slots,
        MIN_SIGN_FRAMES,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsrTrainConfig {
    pub channels: usize,
    pub recipe: TrainRecipe,
    pub split_seed: u64,
    pub init_seed: u64,
    /// Maximum context added on each side of the sign, as a fraction of
    /// the clip length.
    pub jitter: f64,
    /// Clips concatenated in time per training step.
    pub concat: usize,
    pub augment_copies: usize,
    pub augment: Augment,
}

impl Default for IsrTrainConfig {
    fn default() -> Self {
        IsrTrainConfig {
            channels: 48,
            recipe: TrainRecipe {
                learning_rate: 3e-3,
                ..TrainRecipe::default()
            },
            split_seed: 0,
            init_seed: 0,
            jitter: 0.25,
            concat: 2,
            augment_copies: 4,
            augment: Augment {
                // Frame-indexed labels: no time warping.
                stretch: 0.0,
                ..Augment::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsrTrainReport {
    pub model: IsrModel,
    pub outcome: TrainOutcome,
    pub split: SignerSplit,
}

#[derive(Clone)]
struct Clip {
    variants: Vec<IsrFeatures>,
    class: usize,
    span: (usize, usize),
}

/// Random training window around the sign: the sign is always whole, with
/// up to `jitter`·clip-length extra frames of context on each side.
fn jitter_window(frames: usize, span: (usize, usize), jitter: f64, rng: &mut impl Rng) -> (usize, usize) {
    let reach = jitter * frames as f64;
    let before = (rng.random_range(0.0..=1.0) * reach).round() as usize;
    let after = (rng.random_range(0.0..=1.0) * reach).round() as usize;
    (span.0.saturating_sub(before), (span.1 + after).min(frames - 1))
}

/// Concatenated jittered windows with their targets.
fn training_batch(
    clips: &[&Clip],
    vocab: &SignVocabulary,
    jitter: f64,
    rng: &mut impl Rng,
) -> (IsrFeatures, Tensor) {
    let mut feats = Vec::with_capacity(clips.len());
    let mut target_rows: Vec<f64> = Vec::new();
    for clip in clips {
        let x = &clip.variants[rng.random_range(0..clip.variants.len())];
        let (s, e) = jitter_window(x.frames(), clip.span, jitter, rng);
        feats.push(x.window(s, e + 1));
        let y = frame_targets(e + 1 - s, Some((clip.span.0 - s, clip.span.1 - s)), clip.class, vocab);
        target_rows.extend_from_slice(y.data());
    }
    let x = IsrFeatures::concat(&feats);
    let y = Tensor::from_vec(x.frames(), vocab.classes(), target_rows).expect("target rows match frames");
    (x, y)
}

fn prepare_clips(
    corpus: &[CorpusRecord],
    vocab: &SignVocabulary,
    copies: &[usize],
    aug: &Augment,
    seed: u64,
) -> Result<Vec<Clip>, IsrError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus
        .iter()
        .zip(copies)
        .map(|(r, &n)| {
            let CorpusLabel::Sign { gloss, start, end } = &r.label else {
                return Err(IsrError::Corpus(format!("{} is not a sign sample", r.id)));
            };
            let class = vocab
                .lookup(gloss)
                .ok_or_else(|| IsrError::Corpus(format!("{gloss} is not in the vocabulary")))?;
            let mut variants = vec![isr_features(&r.poses)?];
            for _ in 0..n {
                variants.push(isr_features(&augment(&r.poses, aug, &mut rng))?);
            }
            Ok(Clip {
                variants,
                class,
                span: (*start, *end),
            })
        })
        .collect()
}

fn to_nn(e: IsrError) -> NnError {
    match e {
        IsrError::Nn(e) => e,
        other => NnError::Training(other.to_string()),
    }
}

/// Signer-disjoint split, per-frame BCE on jittered, time-concatenated
/// clips, AdamW with cosine annealing and early stopping on validation.
pub fn train_toy_isr(
    config: &IsrTrainConfig,
    vocabulary: SignVocabulary,
    corpus: &[CorpusRecord],
    epochs: usize,
) -> Result<IsrTrainReport, IsrError> {
    let signers: Vec<u32> = corpus.iter().map(|r| r.signer).collect();
    let split = split_by_signer(&signers, config.split_seed)?;
    let mut copies = vec![0; corpus.len()];
    for &i in &split.train {
        copies[i] = config.augment_copies;
    }
    let clips = prepare_clips(corpus, &vocabulary, &copies, &config.augment, config.recipe.seed)?;
    let train: Vec<Clip> = split.train.iter().map(|&i| clips[i].clone()).collect();
    let val: Vec<Clip> = split.val.iter().map(|&i| clips[i].clone()).collect();
    let mut model = IsrModel::new(vocabulary, config.channels, config.init_seed)?;
    let recipe = TrainRecipe {
        max_epochs: epochs,
        ..config.recipe.clone()
    };
    let concat = config.concat.max(1);
    let outcome = fit(
        model.params.clone(),
        &train,
        &val,
        &recipe,
        |p, clip, rng| {
            let mut group = vec![clip];
            for _ in 1..concat {
                group.push(&train[rng.random_range(0..train.len())]);
            }
            let at = rng.random_range(0..group.len());
            group.swap(0, at);
            let (x, y) = training_batch(&group, &model.vocabulary, config.jitter, rng);
            model.loss_and_grad(p, &x, &y).map_err(to_nn)
        },
        |p, clip| {
            let x = &clip.variants[0];
            let mut tape = Tape::new(p);
            let out = model.forward(&mut tape, x).map_err(to_nn)?;
            let y = frame_targets(x.frames(), Some(clip.span), clip.class, &model.vocabulary);
            Ok(bce(tape.value(out), &y).0)
        },
    )?;
    model.params = outcome.params.clone();
    model.params.round_to_f32();
    Ok(IsrTrainReport { model, outcome, split })
}
