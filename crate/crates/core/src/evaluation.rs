//! Scores annotation documents against ground truth: fingerspelling CER,
//! gloss chrF, word-detection AUC and operating point, and temporal F1 of
//! fingerspelled words, with word-length strata.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gloss::{canonicalize, ParseError};
use crate::metrics::{
    chrf, corpus_cer, op_point, roc_auc, temporal_f1, LabeledScore, MetricError, MetricsReport, Stratum, TimedSpan,
};
use crate::pipeline::{AnnotationDocument, ScoreSource};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    NoPredictions,
    #[error("no ground truth for video {0:?}")]
    MissingTruth(String),
    #[error("duplicate ground truth for video {0:?}")]
    DuplicateTruth(String),
    #[error("truth line {line}: {message}")]
    Truth { line: usize, message: String },
    #[error(transparent)]
    Gloss(#[from] ParseError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Io(String),
}

/// A fingerspelled word with its inclusive frame span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpelledWord {
    pub word: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Ground truth for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub video_id: String,
    pub english: String,
    pub gloss: String,
    pub fingerspelled: Vec<SpelledWord>,
}

impl TruthRecord {
    pub fn from_case(case: &crate::synth::SentenceCase) -> Self {
        TruthRecord {
            video_id: case.video.poses.video_id.clone(),
            english: case.english.clone(),
            gloss: crate::gloss::render(&case.video.truth),
            fingerspelled: case
                .spelled_words()
                .into_iter()
                .map(|(word, (start_frame, end_frame))| SpelledWord { word, start_frame, end_frame })
                .collect(),
        }
    }

    pub fn transcript(&self) -> String {
        self.fingerspelled.iter().map(|w| w.word.as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Reads JSON Lines of [`TruthRecord`].
pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Truth {
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn word_key(w: &str) -> String {
    w.to_uppercase()
}

/// One detection sample per distinct hand-spelled word proposed for the
/// video, taking its fingerspelling score from the best-ranked candidate
/// that contains it; positive when the word was actually spelled.
pub fn detection_samples(doc: &AnnotationDocument, truth: &TruthRecord) -> Vec<(String, LabeledScore)> {
    let spelled: BTreeSet<String> = truth.fingerspelled.iter().map(|w| word_key(&w.word)).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for c in &doc.candidates {
        let Ok(seq) = c.sequence() else { continue };
        for (token, sign) in seq.tokens.iter().zip(&c.per_sign) {
            let Some(score) = sign.fingerspelling_score else { continue };
            let word = word_key(token.text());
            if seen.insert(word.clone()) {
                let label = spelled.contains(&word);
                out.push((word, LabeledScore { score: score.value(), label }));
            }
        }
    }
    out
}

/// Anchored fingerspelled words of the rank-1 candidate.
pub fn predicted_spans(doc: &AnnotationDocument) -> Vec<SpelledWord> {
    let Some(best) = doc.candidate(1) else { return Vec::new() };
    let Ok(seq) = best.sequence() else { return Vec::new() };
    seq.tokens
        .iter()
        .zip(&best.per_sign)
        .filter(|(_, s)| s.source == ScoreSource::Fingerspelling)
        .filter_map(|(t, s)| {
            s.interval.map(|(a, b)| SpelledWord {
                word: word_key(t.text()),
                start_frame: a,
                end_frame: b,
            })
        })
        .collect()
}

/// Every metric over `docs`, each joined to its truth by video id.
/// Detection uses `threshold` as the operating point.
pub fn evaluate(docs: &[AnnotationDocument], truth: &[TruthRecord], threshold: f64) -> Result<MetricsReport, EvalError> {
    if docs.is_empty() {
        return Err(EvalError::NoPredictions);
    }
    let mut by_id: BTreeMap<&str, &TruthRecord> = BTreeMap::new();
    for t in truth {
        if by_id.insert(&t.video_id, t).is_some() {
            return Err(EvalError::DuplicateTruth(t.video_id.clone()));
        }
    }
    let pairs: Vec<(&AnnotationDocument, &TruthRecord)> = docs
        .iter()
        .map(|d| {
            by_id
                .get(d.video_id.as_str())
                .map(|t| (d, *t))
                .ok_or_else(|| EvalError::MissingTruth(d.video_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut report = MetricsReport::default();

    let transcripts: Vec<(String, &str)> = pairs
        .iter()
        .filter(|(_, t)| !t.fingerspelled.is_empty())
        .map(|(d, t)| (t.transcript(), d.fingerspelling.corrected.as_str()))
        .collect();
    let cer = if transcripts.is_empty() {
        None
    } else {
        Some(corpus_cer(transcripts.iter().map(|(t, h)| (t.as_str(), *h)))?)
    };
    report.push("cer", Stratum::All, cer, transcripts.len());

    let mut chrf_sum = 0.0;
    let mut chrf_n = 0;
    for (d, t) in &pairs {
        let hyp = d.candidate(1).map_or(String::new(), |c| c.gloss_sequence.clone());
        chrf_sum += chrf(&canonicalize(&t.gloss)?, &hyp);
        chrf_n += 1;
    }
    report.push("chrf", Stratum::All, Some(chrf_sum / chrf_n as f64), chrf_n);

    let samples: Vec<(String, LabeledScore)> = pairs.iter().flat_map(|(d, t)| detection_samples(d, t)).collect();
    for stratum in Stratum::ALL {
        let s: Vec<LabeledScore> = samples.iter().filter(|(w, _)| stratum.contains(w)).map(|(_, s)| *s).collect();
        let auc = roc_auc(&s).ok().map(|(auc, _)| auc);
        report.push("detection_auc", stratum, auc, s.len());
        let op = op_point(&s, threshold);
        report.push("detection_precision", stratum, Some(op.precision), s.len());
        report.push("detection_recall", stratum, Some(op.recall), s.len());
    }

    // Videos are laid end to end so spans never match across videos.
    for stratum in Stratum::ALL {
        let (mut pred, mut gold) = (Vec::new(), Vec::new());
        let mut offset = 0;
        for (d, t) in &pairs {
            let shift = |w: &SpelledWord| TimedSpan::new(format!("{}/{}", d.video_id, w.word), w.start_frame + offset, w.end_frame + offset);
            pred.extend(predicted_spans(d).iter().filter(|w| stratum.contains(&w.word)).map(shift));
            gold.extend(t.fingerspelled.iter().filter(|w| stratum.contains(&w.word)).map(shift));
            offset += d.frames + 1;
        }
        let pr = temporal_f1(&pred, &gold)?;
        report.push("temporal_f1", stratum, Some(pr.f1), gold.len());
    }
    Ok(report)
}
