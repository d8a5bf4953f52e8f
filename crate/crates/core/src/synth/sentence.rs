// Continuous signing from a gloss sequence, plus the perturbed candidate
// lists used to test ranking.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::corpus::random_letters;
use super::{Signer, SpanKind, SpanLabel, Timeline, World};
use crate::gloss::{GlossSequence, GlossToken};
use crate::pose::PoseSequence;

#[derive(Debug, Clone)]
pub struct SentenceVideo {
    pub poses: PoseSequence,
    pub truth: GlossSequence,
    /// Inclusive frame span per token of `truth`.
    pub token_spans: Vec<(usize, usize)>,
    pub spans: Vec<SpanLabel>,
}

/// Renders `seq`: runs of hand-spelled tokens are fingerspelled together,
/// other tokens are performed as signs (out-of-vocabulary glosses and
/// classifiers get a deterministic sign of their own).
pub fn render_sentence(
    world: &World,
    signer: &Signer,
    seq: &GlossSequence,
    video_id: &str,
    rng: &mut impl Rng,
) -> SentenceVideo {
    let mut tl = Timeline::new(world, signer);
    tl.rest(rng.random_range(4..=8));
    let mut token_spans = Vec::with_capacity(seq.len());
    let tokens = &seq.tokens;
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].kind().is_hand_spelled() {
            let mut j = i;
            while j < tokens.len() && tokens[j].kind().is_hand_spelled() {
                j += 1;
            }
            let words: Vec<String> = tokens[i..j].iter().map(|t| t.text().to_string()).collect();
            let before = tl.spans.len();
            tl.fingerspell(&words, rng);
            let word_spans: Vec<_> = tl.spans[before..]
                .iter()
                .filter(|s| s.kind == SpanKind::Word)
                .map(|s| (s.start, s.end))
                .collect();
            let fallback = (tl.len().saturating_sub(1), tl.len().saturating_sub(1));
            for k in 0..(j - i) {
                token_spans.push(word_spans.get(k).copied().unwrap_or(fallback));
            }
            i = j;
        } else {
            let spec = world.sign(tokens[i].text());
            tl.sign(&spec, rng);
            let s = tl.spans.last().expect("sign span");
            token_spans.push((s.start, s.end));
            i += 1;
        }
    }
    tl.go_rest(rng);
    tl.rest(rng.random_range(4..=8));
    let (poses, spans) = tl.render(video_id, rng);
    SentenceVideo {
        poses,
        truth: seq.clone(),
        token_spans,
        spans,
    }
}

/// 3–6 tokens: vocabulary glosses with one or two fingerspelled names.
pub fn random_sentence(world: &World, rng: &mut impl Rng) -> GlossSequence {
    let vocab = world.vocabulary();
    let n = rng.random_range(3..=6usize);
    let names = rng.random_range(1..=2usize).min(n - 1);
    let mut tokens: Vec<GlossToken> = (0..n - names)
        .map(|_| GlossToken::gloss(vocab.choose(rng).expect("vocabulary")))
        .collect();
    for _ in 0..names {
        let at = rng.random_range(0..=tokens.len());
        tokens.insert(at, GlossToken::fingerspelled(&random_letters(rng, 3, 6)));
    }
    GlossSequence::new(tokens)
}

/// `count` distinct candidates, each differing from `truth` by one or two
/// edits: gloss substitution (in or out of vocabulary), a respelled name,
/// a swapped pair, an inserted gloss, or a deletion paired with a
/// substitution.
pub fn perturb_candidates(
    world: &World,
    truth: &GlossSequence,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<GlossSequence> {
    let vocab = world.vocabulary();
    let mut out: Vec<GlossSequence> = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 100 {
        attempts += 1;
        let mut tokens = truth.tokens.clone();
        let edits = rng.random_range(1..=2);
        for _ in 0..edits {
            substitute_or_edit(&mut tokens, &vocab, rng);
        }
        let cand = GlossSequence::new(tokens);
        if !cand.is_empty() && cand != *truth && !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

fn substitute_or_edit(tokens: &mut Vec<GlossToken>, vocab: &[String], rng: &mut impl Rng) {
    if tokens.is_empty() {
        return;
    }
    let i = rng.random_range(0..tokens.len());
    match rng.random_range(0..6u8) {
        0 | 1 => {
            if tokens[i].kind().is_hand_spelled() {
                tokens[i] = GlossToken::fingerspelled(&random_letters(rng, 3, 6));
            } else {
                let other = vocab
                    .iter()
                    .filter(|g| g.as_str() != tokens[i].text())
                    .collect::<Vec<_>>();
                tokens[i] = GlossToken::gloss(other.choose(rng).expect("vocabulary"));
            }
        }
        2 => tokens[i] = GlossToken::gloss(&format!("X{}", random_letters(rng, 3, 5))),
        3 if tokens.len() > 1 => {
            let j = rng.random_range(0..tokens.len());
            tokens.swap(i, j);
            if i == j {
                tokens.shuffle(rng);
            }
        }
        4 => {
            let g = vocab.choose(rng).expect("vocabulary");
            tokens.insert(i, GlossToken::gloss(g));
        }
        _ if tokens.len() > 2 => {
            tokens.remove(i);
            let k = rng.random_range(0..tokens.len());
            if !tokens[k].kind().is_hand_spelled() {
                tokens[k] = GlossToken::gloss(vocab.choose(rng).expect("vocabulary"));
            }
        }
        _ => tokens[i] = GlossToken::gloss(&format!("X{}", random_letters(rng, 3, 5))),
    }
}

/// A rendered sentence with its English text and a candidate list holding
/// the truth at `truth_index` among perturbations of it.
#[derive(Debug, Clone)]
pub struct SentenceCase {
    pub video: SentenceVideo,
    pub english: String,
    pub candidates: Vec<GlossSequence>,
    pub truth_index: usize,
}

impl SentenceCase {
    /// The fingerspelled words of the truth with their rendered spans.
    pub fn spelled_words(&self) -> Vec<(String, (usize, usize))> {
        self.video
            .truth
            .tokens
            .iter()
            .zip(&self.video.token_spans)
            .filter(|(t, _)| t.kind().is_hand_spelled())
            .map(|(t, &span)| (t.text().to_string(), span))
            .collect()
    }
}

/// Renders `truth` (or a random sentence) and surrounds it with
/// `candidates − 1` perturbations; `truth_index` defaults to a random slot.
pub fn sentence_case(
    world: &World,
    signer: &Signer,
    truth: Option<GlossSequence>,
    video_id: &str,
    candidates: usize,
    truth_index: Option<usize>,
    rng: &mut impl Rng,
) -> SentenceCase {
    let truth = truth.unwrap_or_else(|| random_sentence(world, rng));
    let video = render_sentence(world, signer, &truth, video_id, rng);
    let mut list = perturb_candidates(world, &truth, candidates.saturating_sub(1), rng);
    let slot = truth_index.unwrap_or_else(|| rng.random_range(0..=list.len())).min(list.len());
    list.insert(slot, truth.clone());
    SentenceCase {
        english: crate::llm::plain_english(&crate::gloss::render(&truth)),
        video,
        candidates: list,
        truth_index: slot,
    }
}
