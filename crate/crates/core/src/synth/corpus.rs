// Seeded training corpora and their on-disk form: a directory holding
// `index.jsonl` (one record header per line) and `poses/<id>.jsonl`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{seeded, SignSpec, SpanKind, Timeline, World};
use crate::pose::{read_pose_file, write_pose_jsonl, PoseError, PoseSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum CorpusLabel {
    /// Clip contains these fingerspelled words in order.
    Fingerspelling { words: Vec<String> },
    /// Clip contains one sign over frames `start..=end`.
    Sign {
        gloss: String,
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub id: String,
    pub signer: u32,
    pub label: CorpusLabel,
    pub poses: PoseSequence,
}

pub type FsSample = CorpusRecord;
pub type IsrSample = CorpusRecord;

const SPECIALS: [char; 4] = ['.', '-', '/', '@'];

fn random_word(rng: &mut impl Rng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len)
        .map(|i| {
            if i > 0 && i + 1 < len && rng.random_bool(0.06) {
                *SPECIALS.choose(rng).expect("non-empty")
            } else {
                (b'A' + rng.random_range(0..26u8)) as char
            }
        })
        .collect()
}

/// A random fingerspellable word over letters only.
pub(crate) fn random_letters(rng: &mut impl Rng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| (b'A' + rng.random_range(0..26u8)) as char).collect()
}

/// Fingerspelled phrases of 1–3 words, optionally preceded or followed by
/// an unrelated sign that must not be transcribed.
pub fn fs_corpus(world: &World, phrases: usize, signers: u32, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = seeded(seed, "fs-corpus");
    let vocab = world.vocabulary();
    (0..phrases)
        .map(|i| {
            let signer = world.signer(rng.random_range(0..signers.max(1)));
            let words: Vec<String> = (0..rng.random_range(1..=3))
                .map(|_| random_word(&mut rng, 2, 7))
                .collect();
            let mut tl = Timeline::new(world, &signer);
            tl.rest(rng.random_range(3..=6));
            let distractor = rng.random_range(0..3u8);
            if distractor == 1 {
                let s = distractor_sign(world, &vocab, &mut rng);
                tl.sign(&s, &mut rng);
            }
            tl.fingerspell(&words, &mut rng);
            if distractor == 2 {
                let s = distractor_sign(world, &vocab, &mut rng);
                tl.sign(&s, &mut rng);
            }
            tl.go_rest(&mut rng);
            tl.rest(rng.random_range(2..=5));
            let id = format!("fs-{i:04}");
            let (poses, _) = tl.render(&id, &mut rng);
            CorpusRecord {
                id,
                signer: signer.id,
                label: CorpusLabel::Fingerspelling { words },
                poses,
            }
        })
        .collect()
}

/// A vocabulary sign or an unnamed out-of-vocabulary one.
fn distractor_sign(world: &World, vocab: &[String], rng: &mut impl Rng) -> SignSpec {
    let gloss = if rng.random_bool(0.5) {
        vocab.choose(rng).expect("vocabulary").clone()
    } else {
        format!("X{}", random_letters(rng, 3, 5))
    };
    world.sign(&gloss)
}

/// Isolated signs with rest or fingerspelling context on either side.
pub fn isr_corpus(world: &World, clips_per_class: usize, signers: u32, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = seeded(seed, "isr-corpus");
    let mut out = Vec::new();
    for round in 0..clips_per_class {
        for gloss in world.vocabulary() {
            let signer = world.signer(rng.random_range(0..signers.max(1)));
            let id = format!("isr-{}-{round:03}", gloss.to_lowercase());
            out.push(isr_clip(world, &signer, &gloss, &id, &mut rng));
        }
    }
    out
}

pub fn isr_clip(
    world: &World,
    signer: &super::Signer,
    gloss: &str,
    id: &str,
    rng: &mut impl Rng,
) -> CorpusRecord {
    let mut tl = Timeline::new(world, signer);
    tl.rest(rng.random_range(2..=6));
    if rng.random_bool(0.3) {
        tl.fingerspell(&[random_letters(rng, 2, 4)], rng);
    }
    let spec = world.sign(gloss);
    tl.sign(&spec, rng);
    if rng.random_bool(0.2) {
        tl.fingerspell(&[random_letters(rng, 2, 4)], rng);
    }
    tl.go_rest(rng);
    tl.rest(rng.random_range(2..=6));
    let (poses, spans) = tl.render(id, rng);
    let span = spans
        .iter()
        .find(|s| s.kind == SpanKind::Sign)
        .expect("clip contains its sign");
    CorpusRecord {
        id: id.to_string(),
        signer: signer.id,
        label: CorpusLabel::Sign {
            gloss: spec.gloss.clone(),
            start: span.start,
            end: span.end,
        },
        poses,
    }
}

#[derive(Serialize, Deserialize)]
struct IndexLine {
    id: String,
    signer: u32,
    label: CorpusLabel,
}

pub fn write_corpus(dir: &Path, records: &[CorpusRecord]) -> Result<(), PoseError> {
    let io = |e: std::io::Error| PoseError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir.join("poses")).map_err(io)?;
    let mut index = fs::File::create(dir.join("index.jsonl")).map_err(io)?;
    for r in records {
        let line = IndexLine {
            id: r.id.clone(),
            signer: r.signer,
            label: r.label.clone(),
        };
        writeln!(index, "{}", serde_json::to_string(&line).expect("index serializes")).map_err(io)?;
        fs::write(dir.join("poses").join(format!("{}.jsonl", r.id)), write_pose_jsonl(&r.poses))
            .map_err(io)?;
    }
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<Vec<CorpusRecord>, PoseError> {
    let path = dir.join("index.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| PoseError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let entry: IndexLine = serde_json::from_str(line).map_err(|e| PoseError::Parse {
            line: n + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        let poses = read_pose_file(&dir.join("poses").join(format!("{}.jsonl", entry.id)))?;
        out.push(CorpusRecord {
            id: entry.id,
            signer: entry.signer,
            label: entry.label,
            poses,
        });
    }
    Ok(out)
}
