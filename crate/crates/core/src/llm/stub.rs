// Deterministic offline client. Answers come from a lookup table; phrases
// missing from it get rule-based answers seeded by the phrase text, so the
// same input always yields the same response.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmClient, LlmError, Prompt, TemplateName};

/// Canned responses keyed by the prompt phrase (compared after trimming,
/// squeezing whitespace and case folding).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StubTable {
    #[serde(default)]
    pub translate: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub correct: BTreeMap<String, String>,
    #[serde(default)]
    pub back_translate: BTreeMap<String, String>,
}

impl StubTable {
    /// The worked examples: the k-shot block of the translation prompt and
    /// two fingerspelling corrections.
    pub fn builtin() -> Self {
        let mut t = StubTable::default();
        t.translate.insert(
            "I am happy".to_string(),
            [
                "I AM HAPPY",
                "CL:1(point) AM HAPPY",
                "I VERY HAPPY",
                "ME AM HAPPY",
                "I SO HAPPY",
                "I REALLY HAPPY",
                "I AM GLAD",
                "I FEEL GOOD",
                "ME FEEL HAPPY",
                "I AM JOY",
            ]
            .map(String::from)
            .to_vec(),
        );
        t.correct.insert("29 OLD MOUNT PLESANT".to_string(), "29 OLD MOUNT PLEASANT".to_string());
        t.correct.insert(
            "HTTPNN//WW..VISISTDALARNASEE".to_string(),
            "HTTP://WWW.VISITDALARNA.SE".to_string(),
        );
        t
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Config(format!("stub table: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Entries of `other` win over entries of `self`.
    pub fn merged(mut self, other: StubTable) -> Self {
        self.translate.extend(other.translate);
        self.correct.extend(other.correct);
        self.back_translate.extend(other.back_translate);
        self
    }
}

fn key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn lookup<'a, V>(map: &'a BTreeMap<String, V>, phrase: &str) -> Option<&'a V> {
    let k = key(phrase);
    map.iter().find(|(p, _)| key(p) == k).map(|(_, v)| v)
}

#[derive(Debug, Clone)]
pub struct StubClient {
    table: StubTable,
    seed: u64,
}

pub const STUB_MODEL_ID: &str = "stub";

impl StubClient {
    pub fn new(table: StubTable, seed: u64) -> Self {
        StubClient { table, seed }
    }

    fn rng(&self, phrase: &str) -> ChaCha8Rng {
        let digest = Sha256::digest(format!("{}/{}", self.seed, key(phrase)).as_bytes());
        ChaCha8Rng::from_seed(digest.into())
    }

    fn translate(&self, phrase: &str, k: usize) -> String {
        let candidates = match lookup(&self.table.translate, phrase) {
            Some(list) => list.iter().take(k).cloned().collect(),
            None => generated_candidates(phrase, k, &mut self.rng(phrase)),
        };
        // Answer like a chat model: a fenced JSON object.
        let object: serde_json::Map<String, serde_json::Value> = candidates
            .into_iter()
            .enumerate()
            .map(|(i, c)| ((i + 1).to_string(), serde_json::Value::String(c)))
            .collect();
        format!(
            "```json\n{}\n```",
            serde_json::to_string_pretty(&object).expect("strings serialize")
        )
    }
}

impl Default for StubClient {
    fn default() -> Self {
        StubClient::new(StubTable::builtin(), 0)
    }
}

impl LlmClient for StubClient {
    fn model_id(&self) -> &str {
        STUB_MODEL_ID
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        Ok(match prompt.template {
            TemplateName::KShotTranslate => self.translate(&prompt.phrase, prompt.k),
            TemplateName::ErrorCorrect => lookup(&self.table.correct, &prompt.phrase)
                .cloned()
                .unwrap_or_else(|| prompt.phrase.clone()),
            TemplateName::BackTranslate => lookup(&self.table.back_translate, &prompt.phrase)
                .cloned()
                .unwrap_or_else(|| plain_english(&prompt.phrase)),
        })
    }
}

const DROPPABLE: [&str; 11] = ["A", "AN", "THE", "IS", "ARE", "AM", "WAS", "WERE", "BE", "OF", "DO"];
const TIME_WORDS: [&str; 8] = [
    "YESTERDAY", "TODAY", "TOMORROW", "NOW", "MORNING", "AFTERNOON", "NIGHT", "LATER",
];

/// Rule-based gloss variants: article and copula dropping, time-first
/// reordering, FINISH for past tense, ME for I, and fingerspelled names.
fn generated_candidates(phrase: &str, k: usize, rng: &mut impl Rng) -> Vec<String> {
    let words: Vec<(String, bool)> = phrase
        .split_whitespace()
        .enumerate()
        .filter_map(|(i, w)| {
            let cleaned: String = w
                .chars()
                .filter(|c| c.is_ascii_alphanumeric() || *c == '-')
                .collect::<String>()
                .to_uppercase();
            let name = i > 0 && w.chars().next().is_some_and(|c| c.is_uppercase()) && cleaned.len() > 1;
            (!cleaned.is_empty()).then_some((cleaned, name))
        })
        .collect();
    if words.is_empty() {
        return Vec::new();
    }
    let build = |ops: [bool; 5]| -> String {
        let [drop, time_first, finish, me, spell] = ops;
        let mut out: Vec<String> = Vec::new();
        let mut past = false;
        for (w, name) in &words {
            if drop && DROPPABLE.contains(&w.as_str()) {
                continue;
            }
            let mut w = w.clone();
            if finish && w.len() > 4 && w.ends_with("ED") {
                w.truncate(w.len() - 2);
                past = true;
            }
            if me && w == "I" {
                w = "ME".to_string();
            }
            if spell && *name {
                w = format!("fs-{w}");
            }
            out.push(w);
        }
        if past {
            out.push("FINISH".to_string());
        }
        if time_first {
            if let Some(i) = out.iter().position(|w| TIME_WORDS.contains(&w.as_str())) {
                let t = out.remove(i);
                out.insert(0, t);
            }
        }
        if out.is_empty() {
            words.iter().map(|(w, _)| w.clone()).collect::<Vec<_>>().join(" ")
        } else {
            out.join(" ")
        }
    };
    let mut all: Vec<[bool; 5]> = (0..32u8).map(|m| std::array::from_fn(|b| m >> b & 1 == 1)).collect();
    // Always lead with the literal reading, then shuffle the rest.
    all[1..].shuffle(rng);
    let mut out: Vec<String> = Vec::new();
    for ops in all {
        let c = build(ops);
        if !out.contains(&c) {
            out.push(c);
        }
        if out.len() == k {
            break;
        }
    }
    out
}

/// Fallback back-translation: prefixes dropped, sentence case, full stop.
pub fn plain_english(glosses: &str) -> String {
    let words: Vec<String> = glosses
        .split_whitespace()
        .map(|w| {
            let lower = w.to_lowercase();
            lower
                .strip_prefix("fs-")
                .or_else(|| lower.strip_prefix("ns-"))
                .or_else(|| lower.strip_prefix('#'))
                .unwrap_or(&lower)
                .to_string()
        })
        .collect();
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        s = first.to_uppercase() + &s[1..];
    }
    if !s.is_empty() {
        s.push('.');
    }
    s
}
