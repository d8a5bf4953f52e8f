//! CTC loss, greedy decoding and Viterbi forced alignment.

mod alphabet;

pub use alphabet::{Alphabet, AlphabetError, TokenId, BLANK, SEPARATOR};

use thiserror::Error;

use crate::nn::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum CtcError {
    #[error("target needs at least {required} frames but only {frames} are available")]
    Infeasible { frames: usize, required: usize },
    #[error("every path for the target has zero probability")]
    ZeroProbability,
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("CTC requires softmax-normalized scores")]
    NotSoftmax,
    #[error("invalid frame scores: {0}")]
    InvalidScores(String),
    #[error("word {index} has no characters")]
    EmptyWord { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSemantics {
    /// Rows are a distribution over classes.
    Softmax,
    /// Each class is an independent probability.
    Sigmoid,
}

/// Per-frame, per-class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    probs: Tensor,
    semantics: ScoreSemantics,
    fps: f64,
}

impl FrameScores {
    pub fn new(probs: Tensor, semantics: ScoreSemantics, fps: f64) -> Result<Self, CtcError> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(CtcError::InvalidScores(format!("fps {fps}")));
        }
        if probs.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(CtcError::InvalidScores("probabilities outside [0, 1]".into()));
        }
        if semantics == ScoreSemantics::Softmax {
            for t in 0..probs.rows() {
                let sum: f64 = probs.row(t).iter().sum();
                if (sum - 1.0).abs() > 1e-5 {
                    return Err(CtcError::InvalidScores(format!("frame {t} sums to {sum}")));
                }
            }
        }
        Ok(FrameScores {
            probs,
            semantics,
            fps,
        })
    }

    pub fn from_logits_softmax(logits: &Tensor, fps: f64) -> Self {
        FrameScores {
            probs: logits.softmax_rows(),
            semantics: ScoreSemantics::Softmax,
            fps,
        }
    }

    pub fn from_logits_sigmoid(logits: &Tensor, fps: f64) -> Self {
        FrameScores {
            probs: logits.sigmoid(),
            semantics: ScoreSemantics::Sigmoid,
            fps,
        }
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn semantics(&self) -> ScoreSemantics {
        self.semantics
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> usize {
        self.probs.rows()
    }

    pub fn classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.probs.get(t, c)
    }

    /// One class's scores over time.
    pub fn track(&self, class: usize) -> Vec<f64> {
        self.probs.column(class)
    }

    /// Frames `start..end` as a new score matrix.
    pub fn slice(&self, start: usize, end: usize) -> FrameScores {
        FrameScores {
            probs: self.probs.slice_rows(start, end),
            semantics: self.semantics,
            fps: self.fps,
        }
    }
}

/// A time-aligned unit: a character, a word or a gloss.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedUnit {
    pub label: String,
    pub token: Option<TokenId>,
    pub score: f64,
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub units: Vec<AlignedUnit>,
    pub total_log_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtcLoss {
    pub loss: f64,
    /// d loss / d logits, assuming the scores are the softmax of those logits.
    pub grad_logits: Tensor,
}

/// Minimum number of frames that can emit `target`: one per symbol plus a
/// blank between every pair of equal neighbours.
pub fn min_frames(target: &[TokenId]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_target(scores: &FrameScores, target: &[TokenId]) -> Result<(), CtcError> {
    if scores.semantics() != ScoreSemantics::Softmax {
        return Err(CtcError::NotSoftmax);
    }
    if let Some(&bad) = target
        .iter()
        .find(|&&c| c == BLANK || c >= scores.classes())
    {
        return Err(CtcError::InvalidTarget(format!(
            "class {bad} is blank or outside {} classes",
            scores.classes()
        )));
    }
    let required = min_frames(target).max(1);
    if scores.frames() < required {
        return Err(CtcError::Infeasible {
            frames: scores.frames(),
            required,
        });
    }
    Ok(())
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// Blank-augmented target `_ l1 _ l2 _ … _`.
fn extend(target: &[TokenId]) -> Vec<TokenId> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &c in target {
        ext.push(c);
        ext.push(BLANK);
    }
    ext
}

/// Whether state `s` may be entered directly from `s − 2`.
fn can_skip(ext: &[TokenId], s: usize) -> bool {
    s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2]
}

fn log_probs(scores: &FrameScores) -> Tensor {
    scores.probs().map(libm::log)
}

/// Negative log-likelihood of `target` summed over all CTC paths, with its
/// gradient with respect to the pre-softmax logits.
pub fn ctc_loss(scores: &FrameScores, target: &[TokenId]) -> Result<CtcLoss, CtcError> {
    check_target(scores, target)?;
    let lp = log_probs(scores);
    let frames = scores.frames();
    let ext = extend(target);
    let states = ext.len();
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![vec![ninf; states]; frames];
    alpha[0][0] = lp.get(0, ext[0]);
    if states > 1 {
        alpha[0][1] = lp.get(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = log_add(acc, alpha[t - 1][s - 1]);
            }
            if can_skip(&ext, s) {
                acc = log_add(acc, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = acc + lp.get(t, ext[s]);
        }
    }
    let last = frames - 1;
    let mut log_p = alpha[last][states - 1];
    if states > 1 {
        log_p = log_add(log_p, alpha[last][states - 2]);
    }
    if log_p == ninf {
        return Err(CtcError::ZeroProbability);
    }

    // beta[t][s]: log-probability of completing the path from state s at
    // frame t, not counting the emission at t.
    let mut beta = vec![vec![ninf; states]; frames];
    beta[last][states - 1] = 0.0;
    if states > 1 {
        beta[last][states - 2] = 0.0;
    }
    for t in (0..last).rev() {
        for s in 0..states {
            let mut acc = beta[t + 1][s] + lp.get(t + 1, ext[s]);
            if s + 1 < states {
                acc = log_add(acc, beta[t + 1][s + 1] + lp.get(t + 1, ext[s + 1]));
            }
            if s + 2 < states && can_skip(&ext, s + 2) {
                acc = log_add(acc, beta[t + 1][s + 2] + lp.get(t + 1, ext[s + 2]));
            }
            beta[t][s] = acc;
        }
    }

    let mut grad = scores.probs().clone();
    for t in 0..frames {
        for s in 0..states {
            let occ = alpha[t][s] + beta[t][s] - log_p;
            if occ > ninf {
                let k = ext[s];
                let g = grad.get(t, k) - libm::exp(occ);
                grad.set(t, k, g);
            }
        }
    }
    Ok(CtcLoss {
        loss: -log_p,
        grad_logits: grad,
    })
}

/// Best-path decoding: argmax per frame, merge repeats, drop blanks,
/// separators become single spaces.
pub fn greedy_decode(scores: &FrameScores, alphabet: &Alphabet) -> String {
    let mut out = String::new();
    let mut prev = None;
    for t in 0..scores.frames() {
        let row = scores.probs().row(t);
        let mut best = 0;
        for (c, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = c;
            }
        }
        if prev != Some(best) && best != BLANK {
            if best == SEPARATOR {
                out.push(' ');
            } else if let Some(ch) = alphabet.symbol(best) {
                out.push(ch);
            }
        }
        prev = Some(best);
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Viterbi alignment of `target` through the blank-augmented lattice. Each
/// target symbol becomes one unit spanning the frames it occupies on the
/// best path, scored by its mean probability there.
pub fn forced_align(
    scores: &FrameScores,
    target: &[TokenId],
    alphabet: &Alphabet,
) -> Result<AlignmentResult, CtcError> {
    check_target(scores, target)?;
    let lp = log_probs(scores);
    let frames = scores.frames();
    let ext = extend(target);
    let states = ext.len();
    let ninf = f64::NEG_INFINITY;

    let mut delta = vec![ninf; states];
    let mut back = vec![vec![0usize; states]; frames];
    delta[0] = lp.get(0, ext[0]);
    if states > 1 {
        delta[1] = lp.get(0, ext[1]);
    }
    for t in 1..frames {
        let prev = delta.clone();
        for s in 0..states {
            // Ties prefer staying, then the nearest predecessor.
            let mut best = (prev[s], s);
            if s >= 1 && prev[s - 1] > best.0 {
                best = (prev[s - 1], s - 1);
            }
            if can_skip(&ext, s) && prev[s - 2] > best.0 {
                best = (prev[s - 2], s - 2);
            }
            delta[s] = best.0 + lp.get(t, ext[s]);
            back[t][s] = best.1;
        }
    }
    let mut state = states - 1;
    if states > 1 && delta[states - 2] > delta[states - 1] {
        state = states - 2;
    }
    let total = delta[state];
    if total == ninf {
        return Err(CtcError::ZeroProbability);
    }
    let mut path = vec![0usize; frames];
    for t in (0..frames).rev() {
        path[t] = state;
        if t > 0 {
            state = back[t][state];
        }
    }

    let mut units: Vec<AlignedUnit> = Vec::with_capacity(target.len());
    for (i, &tok) in target.iter().enumerate() {
        let s = 2 * i + 1;
        let start = path.iter().position(|&p| p == s).expect("every symbol state is visited");
        let end = path.iter().rposition(|&p| p == s).expect("visited");
        let mean = (start..=end).map(|t| scores.get(t, tok)).sum::<f64>() / (end - start + 1) as f64;
        units.push(AlignedUnit {
            label: alphabet.label(tok),
            token: Some(tok),
            score: mean,
            start_frame: start,
            end_frame: end,
        });
    }
    Ok(AlignmentResult {
        units,
        total_log_score: total,
    })
}

/// Groups character units into words at separator units. Separators do not
/// contribute to word scores. Leading and trailing separators are expected;
/// two adjacent separators enclose an empty word, which is an error.
pub fn aggregate_words(align: &AlignmentResult) -> Result<AlignmentResult, CtcError> {
    let mut word_of = Vec::with_capacity(align.units.len());
    let mut word = 0usize;
    let mut open = false;
    let mut seen_separator = false;
    for unit in &align.units {
        if unit.token == Some(SEPARATOR) {
            if seen_separator && !open {
                return Err(CtcError::EmptyWord { index: word });
            }
            if open {
                word += 1;
                open = false;
            }
            seen_separator = true;
            word_of.push(None);
        } else {
            open = true;
            word_of.push(Some(word));
        }
    }
    aggregate_by_index(align, &word_of)
}

/// Groups units by an explicit word index (`None` for units to skip). Word
/// indices must be contiguous from zero and ordered.
pub fn aggregate_by_index(
    align: &AlignmentResult,
    word_of: &[Option<usize>],
) -> Result<AlignmentResult, CtcError> {
    let n_words = word_of.iter().flatten().max().map_or(0, |m| m + 1);
    let mut words: Vec<Option<(String, f64, usize, usize, usize)>> = vec![None; n_words];
    for (unit, w) in align.units.iter().zip(word_of) {
        let Some(w) = *w else { continue };
        match &mut words[w] {
            Some((label, sum, count, _, end)) => {
                label.push_str(&unit.label);
                *sum += unit.score;
                *count += 1;
                *end = unit.end_frame;
            }
            slot @ None => {
                *slot = Some((unit.label.clone(), unit.score, 1, unit.start_frame, unit.end_frame))
            }
        }
    }
    let units = words
        .into_iter()
        .enumerate()
        .map(|(index, w)| {
            let (label, sum, count, start, end) = w.ok_or(CtcError::EmptyWord { index })?;
            Ok(AlignedUnit {
                label,
                token: None,
                score: sum / count as f64,
                start_frame: start,
                end_frame: end,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AlignmentResult {
        units,
        total_log_score: align.total_log_score,
    })
}
