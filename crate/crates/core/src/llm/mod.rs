//! LLM access for the three prompts the pipeline uses: k-candidate English
//! to gloss translation, fingerspelling error correction, and gloss to
//! English back-translation.
//!
//! Clients only move text: [`LlmClient::complete`] receives the rendered
//! prompt and returns the raw response. Response parsing lives here so the
//! offline [`StubClient`] and the [`HttpClient`] share it.

mod http;
mod stub;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gloss::{parse_gloss_sequence, render, GlossSequence};

pub use http::{HttpClient, HttpConfig, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use stub::{plain_english, StubClient, StubTable, STUB_MODEL_ID};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    KShotTranslate,
    ErrorCorrect,
    BackTranslate,
}

impl TemplateName {
    pub const ALL: [TemplateName; 3] = [
        TemplateName::KShotTranslate,
        TemplateName::ErrorCorrect,
        TemplateName::BackTranslate,
    ];
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateName::KShotTranslate => "k_shot_translate",
            TemplateName::ErrorCorrect => "error_correct",
            TemplateName::BackTranslate => "back_translate",
        })
    }
}

/// A prompt body with `{phrase}` and `{k}` placeholders; `{{` and `}}`
/// stand for literal braces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: &'static str,
}

const K_SHOT: &str = include_str!("../../prompts/k_shot_translate.txt");
const ERROR_CORRECT: &str = include_str!("../../prompts/error_correct.txt");
const BACK_TRANSLATE: &str = include_str!("../../prompts/back_translate.txt");

/// sha256 of each shipped template body.
pub const PINNED_DIGESTS: [(TemplateName, &str); 3] = [
    (
        TemplateName::KShotTranslate,
        "40766f3e3565caaa2fac2f5fa9b3ae93e40e940b13a2c4482b624153da526008",
    ),
    (
        TemplateName::ErrorCorrect,
        "7547dea2e25685f134b4e3fb2997a5d86435a548627996b232596ecf53867d8b",
    ),
    (
        TemplateName::BackTranslate,
        "c3f45af61bc6f0a080137649ebc148639a5a1e00a27db24e5892c875a2dc3d37",
    ),
];

impl PromptTemplate {
    pub fn get(name: TemplateName) -> Self {
        let body = match name {
            TemplateName::KShotTranslate => K_SHOT,
            TemplateName::ErrorCorrect => ERROR_CORRECT,
            TemplateName::BackTranslate => BACK_TRANSLATE,
        };
        PromptTemplate { name, body }
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(self.body.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Substitutes the placeholders. Unknown `{...}` sequences are copied
    /// through unchanged.
    pub fn render(&self, phrase: &str, k: usize) -> String {
        let mut out = String::with_capacity(self.body.len() + phrase.len());
        let mut rest = self.body;
        while let Some(i) = rest.find(['{', '}']) {
            out.push_str(&rest[..i]);
            rest = &rest[i..];
            let step = if rest.starts_with("{{") {
                out.push('{');
                2
            } else if rest.starts_with("}}") {
                out.push('}');
                2
            } else if rest.starts_with("{phrase}") {
                out.push_str(phrase);
                "{phrase}".len()
            } else if rest.starts_with("{k}") {
                out.push_str(&k.to_string());
                "{k}".len()
            } else {
                out.push_str(&rest[..1]);
                1
            };
            rest = &rest[step..];
        }
        out.push_str(rest);
        out
    }
}

/// One request: the template it came from, its inputs, and the rendered
/// text that is actually sent.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub template: TemplateName,
    pub phrase: String,
    pub k: usize,
    pub text: String,
}

impl Prompt {
    pub fn new(template: TemplateName, phrase: &str, k: usize) -> Self {
        Prompt {
            template,
            phrase: phrase.to_string(),
            k,
            text: PromptTemplate::get(template).render(phrase, k),
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response is not a JSON candidate object: {message}")]
    NotJson { message: String, raw: String },
    #[error("response contains no usable candidate")]
    NoCandidates { raw: String },
    #[error("empty response")]
    EmptyResponse { raw: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// The raw response text, for errors that carry one.
    pub fn raw(&self) -> Option<&str> {
        match self {
            LlmError::NotJson { raw, .. } | LlmError::NoCandidates { raw } | LlmError::EmptyResponse { raw } => {
                Some(raw)
            }
            _ => None,
        }
    }

    fn retryable(&self) -> bool {
        match self {
            LlmError::Transport { .. } => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Anything that turns a prompt into response text.
pub trait LlmClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

/// Runs `op` until it succeeds, fails with a non-transient error, or
/// `policy.attempts` are used up, sleeping 1×, 2×, 4×… the initial backoff
/// between attempts.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    mut sleep: impl FnMut(Duration),
    mut op: impl FnMut(usize) -> Result<T, LlmError>,
) -> Result<T, LlmError> {
    let attempts = policy.attempts.max(1);
    let mut delay = policy.initial_backoff;
    for attempt in 1..=attempts {
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(e) if e.retryable() && attempt < attempts => {
                log::warn!("LLM attempt {attempt}/{attempts} failed: {e}; retrying in {delay:?}");
                sleep(delay);
                delay *= 2;
            }
            Err(LlmError::Transport { message, .. }) => {
                return Err(LlmError::Transport { attempts: attempt, message })
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the last attempt")
}

/// Removes a surrounding Markdown code fence (with optional language tag)
/// and surrounding whitespace.
pub fn strip_fences(raw: &str) -> &str {
    let mut s = raw.trim();
    if let Some(rest) = s.strip_prefix("```") {
        s = rest.split_once('\n').map_or("", |(_, body)| body);
        s = s.trim_end();
        s = s.strip_suffix("```").unwrap_or(s);
    } else if let Some(body) = s.strip_suffix("```") {
        // Prompts that end by opening a fence get a response that only
        // closes it.
        s = body;
    }
    s.trim()
}

/// Upper-cases `fs-`/`ns-` and `CL:` markers the way the notation parser
/// expects them, leaving everything else untouched.
pub fn fold_prefix_case(candidate: &str) -> String {
    candidate
        .split(' ')
        .map(|w| {
            let lower = w.get(..3).map(str::to_ascii_lowercase);
            match lower.as_deref() {
                Some("fs-") | Some("ns-") => format!("{}{}", lower.unwrap(), &w[3..]),
                Some("cl:") => format!("CL:{}", &w[3..]),
                _ => w.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCandidates {
    /// Canonical gloss lines, in numeric key order.
    pub candidates: Vec<String>,
    pub warnings: Vec<String>,
}

/// Parses `{"1": "...", "2": "...", ...}`, possibly fenced or surrounded by
/// prose. Keys are ordered numerically; at most `k` are kept. Entries that
/// are not strings or do not parse as gloss lines are skipped with a
/// warning.
pub fn parse_candidates(raw: &str, k: usize) -> Result<ParsedCandidates, LlmError> {
    let body = strip_fences(raw);
    let json = match (body.find('{'), body.rfind('}')) {
        (Some(a), Some(b)) if a < b => &body[a..=b],
        _ => {
            return Err(LlmError::NotJson {
                message: "no JSON object found".to_string(),
                raw: raw.to_string(),
            })
        }
    };
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(json).map_err(|e| LlmError::NotJson {
            message: e.to_string(),
            raw: raw.to_string(),
        })?;
    let mut warnings = Vec::new();
    let mut keyed: Vec<(u64, String)> = Vec::new();
    for (key, value) in map {
        let Ok(n) = key.trim().parse::<u64>() else {
            warnings.push(format!("ignored non-numeric key {key:?}"));
            continue;
        };
        match value {
            serde_json::Value::String(s) => keyed.push((n, s)),
            other => warnings.push(format!("ignored key {n}: value {other} is not a string")),
        }
    }
    keyed.sort_by_key(|(n, _)| *n);
    let mut candidates = Vec::new();
    for (n, text) in keyed {
        if candidates.len() == k {
            warnings.push(format!("ignored key {n}: more than {k} candidates"));
            continue;
        }
        match parse_gloss_sequence(&fold_prefix_case(&text)) {
            Ok(seq) if !seq.is_empty() => candidates.push(render(&seq)),
            Ok(_) => warnings.push(format!("ignored key {n}: empty candidate")),
            Err(e) => warnings.push(format!("ignored key {n}: {e}")),
        }
    }
    if candidates.is_empty() {
        return Err(LlmError::NoCandidates { raw: raw.to_string() });
    }
    if candidates.len() < k {
        warnings.push(format!("expected {k} candidates, got {}", candidates.len()));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ParsedCandidates { candidates, warnings })
}

/// Single-string answers: fences, whitespace and one pair of surrounding
/// quotes are removed.
pub fn parse_single(raw: &str) -> Result<String, LlmError> {
    let mut s = strip_fences(raw);
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            s = &s[1..s.len() - 1];
            break;
        }
    }
    let s = s.trim();
    if s.is_empty() {
        return Err(LlmError::EmptyResponse { raw: raw.to_string() });
    }
    Ok(s.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub phrase: String,
    pub candidates: Vec<String>,
    pub model_id: String,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CandidateSet {
    pub fn sequences(&self) -> Vec<GlossSequence> {
        self.candidates
            .iter()
            .map(|c| parse_gloss_sequence(c).expect("candidates are stored canonical"))
            .collect()
    }
}

/// Asks for `k` gloss translations of `phrase`.
pub fn translate_candidates(client: &dyn LlmClient, phrase: &str, k: usize) -> Result<CandidateSet, LlmError> {
    if k == 0 {
        return Err(LlmError::Input("k must be at least 1".to_string()));
    }
    if phrase.trim().is_empty() {
        return Err(LlmError::Input("empty phrase".to_string()));
    }
    let raw = client.complete(&Prompt::new(TemplateName::KShotTranslate, phrase, k))?;
    let parsed = parse_candidates(&raw, k)?;
    Ok(CandidateSet {
        phrase: phrase.to_string(),
        candidates: parsed.candidates,
        model_id: client.model_id().to_string(),
        k,
        warnings: parsed.warnings,
    })
}

/// Fixes typos in a context-free fingerspelling transcript.
pub fn correct_fingerspelling(client: &dyn LlmClient, raw: &str) -> Result<String, LlmError> {
    if raw.trim().is_empty() {
        return Err(LlmError::Input("empty transcript".to_string()));
    }
    parse_single(&client.complete(&Prompt::new(TemplateName::ErrorCorrect, raw, 1))?)
}

/// Translates a gloss line into English.
pub fn back_translate(client: &dyn LlmClient, glosses: &str) -> Result<String, LlmError> {
    if glosses.trim().is_empty() {
        return Err(LlmError::Input("empty glosses".to_string()));
    }
    parse_single(&client.complete(&Prompt::new(TemplateName::BackTranslate, glosses, 1))?)
}
