//! The annotation pipeline: gloss candidates from an LLM, fingerspelling
//! alignment of the hand-spelled words, sign alignment of the remaining
//! glosses between those anchors, then scoring and ranking.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{greedy_decode, FrameScores};
use crate::fingerspelling::{align_words_on_scores, FingerspellingModel, FsError};
use crate::gloss::{parse_gloss_sequence, render, GlossKind, GlossSequence, ParseError};
use crate::isr::{align_glosses_on_scores, isr_scores, track_for, IsrError, IsrModel, Track, ANY, MIN_SIGN_FRAMES};
use crate::llm::{correct_fingerspelling, translate_candidates, LlmClient, LlmError, PromptTemplate, TemplateName};
use crate::nn::ModelFingerprint;
use crate::pose::PoseSequence;

pub const SCHEMA_VERSION: &str = "v1";

/// A score printed with exactly six fractional digits. The value is rounded
/// on construction, so documents round-trip byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Score(f64);

impl Score {
    pub fn new(v: f64) -> Self {
        Score((v * 1e6).round() / 1e6)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(self.to_string()).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("score must be finite"));
        }
        Ok(Score::new(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Average per-sign score.
    #[default]
    Mean,
    /// Sum of per-sign scores.
    Sum,
}

impl std::str::FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(ScoreMode::Mean),
            "sum" => Ok(ScoreMode::Sum),
            other => Err(format!("unknown score mode {other:?} (expected mean or sum)")),
        }
    }
}

/// Which LLM backend produced the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    #[default]
    Stub,
    Http,
}

impl std::str::FromStr for LlmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "stub" => Ok(LlmMode::Stub),
            "http" => Ok(LlmMode::Http),
            other => Err(format!("unknown llm mode {other:?} (expected stub or http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    /// Fingerspelled words scoring at least this become anchors.
    pub threshold: f64,
    pub score_mode: ScoreMode,
    pub min_sign_frames: usize,
    /// Token kinds aligned with the fingerspelling model.
    pub anchor_kinds: Vec<GlossKind>,
    /// Run the LLM typo fixer over the context-free transcript.
    pub correct_fingerspelling: bool,
    pub llm: LlmMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 10,
            threshold: 0.3,
            score_mode: ScoreMode::Mean,
            min_sign_frames: MIN_SIGN_FRAMES,
            anchor_kinds: vec![GlossKind::Fingerspelled, GlossKind::NameSign, GlossKind::Lexicalized],
            correct_fingerspelling: true,
            llm: LlmMode::Stub,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::Config("k must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(PipelineError::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if self.min_sign_frames == 0 {
            return Err(PipelineError::Config("min_sign_frames must be at least 1".into()));
        }
        if let Some(k) = self.anchor_kinds.iter().find(|k| !k.is_hand_spelled()) {
            return Err(PipelineError::Config(format!("{k:?} tokens cannot be fingerspelling anchors")));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Fingerspelling(#[from] FsError),
    #[error(transparent)]
    Isr(#[from] IsrError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("nothing to score: {0}")]
    Empty(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("document: {0}")]
    Document(String),
}

pub struct Models {
    pub fingerspelling: FingerspellingModel,
    pub isr: IsrModel,
}

/// Both models' per-frame scores for one video; computed once and shared by
/// every candidate.
pub struct VideoScores {
    pub fingerspelling: FrameScores,
    pub isr: FrameScores,
}

impl VideoScores {
    pub fn compute(models: &Models, poses: &PoseSequence) -> Result<Self, PipelineError> {
        Ok(VideoScores {
            fingerspelling: models.fingerspelling.frame_scores(poses)?,
            isr: isr_scores(&models.isr, poses)?,
        })
    }

    pub fn frames(&self) -> usize {
        self.isr.frames()
    }
}

/// How a token's score was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    /// Fingerspelling alignment, kept as an anchor.
    Fingerspelling,
    /// Sign alignment on a class or the ANY track.
    Sign,
    /// Alignment was infeasible; the token scores 0.
    Failed,
}

/// Score and placement of one token of a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignScore {
    pub token: String,
    pub kind: GlossKind,
    pub source: ScoreSource,
    /// Score track used for sign alignment: a vocabulary gloss or `ANY`.
    pub track: Option<String>,
    pub in_vocabulary: Option<bool>,
    pub score: Score,
    /// Inclusive frame span.
    pub interval: Option<(usize, usize)>,
    pub peak_frame: Option<usize>,
    /// First to last letter of an anchored fingerspelled word.
    pub fingerspelled_region: Option<(usize, usize)>,
    /// Fingerspelling alignment score, also kept for demoted words.
    pub fingerspelling_score: Option<Score>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    Llm,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnnotation {
    pub rank: usize,
    /// Position in the candidate list as produced.
    pub index: usize,
    pub origin: CandidateOrigin,
    /// Canonical gloss line.
    pub gloss_sequence: String,
    pub aggregate_score: Score,
    pub per_sign: Vec<SignScore>,
}

impl CandidateAnnotation {
    pub fn sequence(&self) -> Result<GlossSequence, ParseError> {
        parse_gloss_sequence(&self.gloss_sequence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmInfo {
    pub model_id: String,
    pub prompt_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub fingerspelling: ModelFingerprint,
    pub isr: ModelFingerprint,
    pub llm: Option<LlmInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerspellingTranscript {
    /// Greedy decoding of the whole clip.
    pub recognized: String,
    /// After LLM typo correction (equal to `recognized` when disabled or
    /// when the call failed).
    pub corrected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDocument {
    pub schema_version: String,
    pub video_id: String,
    pub english: String,
    pub fps: f64,
    pub frames: usize,
    pub candidates: Vec<CandidateAnnotation>,
    pub models: ModelInfo,
    pub config: PipelineConfig,
    pub fingerspelling: FingerspellingTranscript,
    /// Per-frame values of every sign track referenced by a candidate.
    pub tracks: BTreeMap<String, Vec<Score>>,
    pub errors: Vec<String>,
}

impl AnnotationDocument {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let doc: AnnotationDocument =
            serde_json::from_str(text).map_err(|e| PipelineError::Document(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::Document(format!(
                "unsupported schema version {:?}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn candidate(&self, rank: usize) -> Option<&CandidateAnnotation> {
        self.candidates.iter().find(|c| c.rank == rank)
    }
}

/// Aggregate of per-sign scores.
pub fn score_candidate(scores: &[f64], mode: ScoreMode) -> Result<f64, PipelineError> {
    if scores.is_empty() {
        return Err(PipelineError::Empty("candidate has no signs".into()));
    }
    let sum: f64 = scores.iter().sum();
    Ok(match mode {
        ScoreMode::Mean => sum / scores.len() as f64,
        ScoreMode::Sum => sum,
    })
}

/// 1-based rank of each entry: descending score, ties to the lower index.
pub fn rank_order(aggregates: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..aggregates.len()).collect();
    order.sort_by(|&a, &b| aggregates[b].total_cmp(&aggregates[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; aggregates.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Steps 2–3 for one gloss sequence: fingerspelling anchors, then sign
/// alignment between them. One entry per token, in order.
pub fn align_sequence(
    seq: &GlossSequence,
    scores: &VideoScores,
    models: &Models,
    config: &PipelineConfig,
) -> Result<Vec<SignScore>, PipelineError> {
    if seq.is_empty() {
        return Err(PipelineError::Empty("empty gloss sequence".into()));
    }
    let tokens = &seq.tokens;
    let spelled: Vec<usize> = (0..tokens.len())
        .filter(|&i| config.anchor_kinds.contains(&tokens[i].kind()))
        .collect();
    let words: Vec<String> = spelled.iter().map(|&i| tokens[i].text().to_string()).collect();
    let mut fs_error = None;
    let detections = match align_words_on_scores(&scores.fingerspelling, &models.fingerspelling.alphabet, &words) {
        Ok(d) => d,
        Err(e) => {
            // Every hand-spelled word falls back to sign alignment.
            fs_error = Some(format!("fingerspelling alignment: {e}"));
            Vec::new()
        }
    };
    let mut slots: Vec<Option<(usize, usize)>> = vec![None; tokens.len()];
    let mut fs_of: Vec<Option<&crate::fingerspelling::WordDetection>> = vec![None; tokens.len()];
    for (&i, det) in spelled.iter().zip(&detections) {
        fs_of[i] = Some(det);
        if det.score >= config.threshold {
            slots[i] = Some((det.start_frame, det.end_frame));
        }
    }
    let aligned = align_glosses_on_scores(&scores.isr, &models.isr.vocabulary, tokens, &slots, config.min_sign_frames)?;
    let mut by_token: Vec<Option<&crate::isr::GlossDetection>> = vec![None; tokens.len()];
    for d in &aligned.detections {
        by_token[d.token_index] = Some(d);
    }
    let mut failed: Vec<Option<String>> = vec![None; tokens.len()];
    for f in &aligned.failures {
        for &i in &f.token_indices {
            failed[i] = Some(f.error.to_string());
        }
    }
    let vocab = &models.isr.vocabulary;
    let out = tokens
        .iter()
        .enumerate()
        .map(|(i, token)| {
            let fs_score = fs_of[i].map(|d| Score::new(d.score));
            let base = SignScore {
                token: token.to_string(),
                kind: token.kind(),
                source: ScoreSource::Failed,
                track: None,
                in_vocabulary: None,
                score: Score::new(0.0),
                interval: None,
                peak_frame: None,
                fingerspelled_region: None,
                fingerspelling_score: fs_score,
                error: None,
            };
            if let (Some(det), Some(_)) = (fs_of[i], slots[i]) {
                return SignScore {
                    source: ScoreSource::Fingerspelling,
                    score: Score::new(det.score),
                    interval: Some((det.start_frame, det.end_frame)),
                    fingerspelled_region: Some(det.fingerspelled_region),
                    ..base
                };
            }
            let track = match track_for(token, vocab) {
                Track::Class(c) => vocab.name(c).to_string(),
                Track::Any => ANY.to_string(),
            };
            let spelled_error = if spelled.contains(&i) { fs_error.clone() } else { None };
            match by_token[i] {
                Some(d) => SignScore {
                    source: ScoreSource::Sign,
                    track: Some(track),
                    in_vocabulary: Some(d.in_vocabulary),
                    score: Score::new(d.score),
                    interval: Some(d.interval),
                    peak_frame: Some(d.frame),
                    error: spelled_error,
                    ..base
                },
                None => SignScore {
                    track: Some(track),
                    in_vocabulary: Some(matches!(track_for(token, vocab), Track::Class(_))),
                    error: failed[i].clone().or(spelled_error),
                    ..base
                },
            }
        })
        .collect();
    Ok(out)
}

/// Aligns and scores each sequence, then ranks them.
pub fn score_candidates(
    sequences: &[(GlossSequence, CandidateOrigin)],
    scores: &VideoScores,
    models: &Models,
    config: &PipelineConfig,
) -> Result<Vec<CandidateAnnotation>, PipelineError> {
    let mut out = Vec::with_capacity(sequences.len());
    for (index, (seq, origin)) in sequences.iter().enumerate() {
        let per_sign = align_sequence(seq, scores, models, config)?;
        let values: Vec<f64> = per_sign.iter().map(|s| s.score.value()).collect();
        out.push(CandidateAnnotation {
            rank: 0,
            index,
            origin: *origin,
            gloss_sequence: render(seq),
            aggregate_score: Score::new(score_candidate(&values, config.score_mode)?),
            per_sign,
        });
    }
    let ranks = rank_order(&out.iter().map(|c| c.aggregate_score.value()).collect::<Vec<_>>());
    for (c, r) in out.iter_mut().zip(ranks) {
        c.rank = r;
    }
    out.sort_by_key(|c| c.rank);
    Ok(out)
}

/// Scores a manual annotation the same way as LLM candidates, without the
/// LLM. The result has rank 1 on its own.
pub fn score_manual_annotation(
    annotation: &GlossSequence,
    poses: &PoseSequence,
    models: &Models,
    config: &PipelineConfig,
) -> Result<CandidateAnnotation, PipelineError> {
    config.validate()?;
    if annotation.is_empty() {
        return Err(PipelineError::Empty("empty annotation".into()));
    }
    let scores = VideoScores::compute(models, poses)?;
    let mut ranked = score_candidates(&[(annotation.clone(), CandidateOrigin::Manual)], &scores, models, config)?;
    Ok(ranked.remove(0))
}

/// The full pipeline. LLM failures do not abort: the document then has no
/// candidates and records the error.
pub fn annotate(
    english: &str,
    poses: &PoseSequence,
    models: &Models,
    llm: &dyn LlmClient,
    config: &PipelineConfig,
) -> Result<AnnotationDocument, PipelineError> {
    config.validate()?;
    let scores = VideoScores::compute(models, poses)?;
    annotate_with_scores(english, &poses.video_id, &scores, models, llm, config)
}

/// [`annotate`] on precomputed model scores.
pub fn annotate_with_scores(
    english: &str,
    video_id: &str,
    scores: &VideoScores,
    models: &Models,
    llm: &dyn LlmClient,
    config: &PipelineConfig,
) -> Result<AnnotationDocument, PipelineError> {
    config.validate()?;
    let mut errors = Vec::new();
    let sequences: Vec<(GlossSequence, CandidateOrigin)> = match translate_candidates(llm, english, config.k) {
        Ok(set) => {
            errors.extend(set.warnings.iter().map(|w| format!("llm: {w}")));
            set.sequences().into_iter().map(|s| (s, CandidateOrigin::Llm)).collect()
        }
        Err(e) => {
            errors.push(format!("llm: {e}"));
            Vec::new()
        }
    };
    let candidates = score_candidates(&sequences, scores, models, config)?;
    let recognized = greedy_decode(&scores.fingerspelling, &models.fingerspelling.alphabet);
    let corrected = if config.correct_fingerspelling && !recognized.trim().is_empty() {
        correct_fingerspelling(llm, &recognized).unwrap_or_else(|e| {
            errors.push(format!("llm correction: {e}"));
            recognized.clone()
        })
    } else {
        recognized.clone()
    };
    Ok(AnnotationDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        video_id: video_id.to_string(),
        english: english.to_string(),
        fps: scores.isr.fps(),
        frames: scores.frames(),
        tracks: collect_tracks(&candidates, scores, models),
        candidates,
        models: ModelInfo {
            fingerspelling: models.fingerspelling.fingerprint(),
            isr: models.isr.fingerprint(),
            llm: Some(LlmInfo {
                model_id: llm.model_id().to_string(),
                prompt_sha256: PromptTemplate::get(TemplateName::KShotTranslate).sha256(),
            }),
        },
        config: config.clone(),
        fingerspelling: FingerspellingTranscript { recognized, corrected },
        errors,
    })
}

fn collect_tracks(
    candidates: &[CandidateAnnotation],
    scores: &VideoScores,
    models: &Models,
) -> BTreeMap<String, Vec<Score>> {
    let labels = models.isr.vocabulary.labels();
    let mut out = BTreeMap::new();
    for name in candidates.iter().flat_map(|c| &c.per_sign).filter_map(|s| s.track.as_ref()) {
        if out.contains_key(name) {
            continue;
        }
        if let Some(c) = labels.iter().position(|l| l == name) {
            out.insert(name.clone(), scores.isr.track(c).into_iter().map(Score::new).collect());
        }
    }
    out
}

#[cfg(test)]
mod tests;
