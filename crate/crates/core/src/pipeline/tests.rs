use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ctc::{Alphabet, ScoreSemantics, BLANK, SEPARATOR};
use crate::isr::SignVocabulary;
use crate::llm::{StubClient, StubTable};
use crate::nn::Tensor;
use crate::synth::{render_sentence, World, WORLD_SEED};

const T: usize = 45;

fn models() -> Models {
    Models {
        fingerspelling: FingerspellingModel::new(Alphabet::toy(), 8, 1).unwrap(),
        isr: IsrModel::new(SignVocabulary::new(&["TRAVEL", "TO", "PARK", "DOG"]).unwrap(), 8, 1).unwrap(),
    }
}

/// Softmax scores putting `p` on the scripted class of each frame.
fn fs_scores(script: &[usize], classes: usize, p: f64) -> FrameScores {
    let rest = (1.0 - p) / (classes - 1) as f64;
    let rows: Vec<Vec<f64>> = script
        .iter()
        .map(|&c| (0..classes).map(|k| if k == c { p } else { rest }).collect())
        .collect();
    FrameScores::new(Tensor::from_rows(&rows).unwrap(), ScoreSemantics::Softmax, 30.0).unwrap()
}

/// `| B B O O _ B B |` then blanks, `F F R R I I C C K K |` at 21..=31,
/// blanks to the end.
fn worked_fs(alphabet: &Alphabet) -> FrameScores {
    let id = |c| alphabet.index_of(c).unwrap();
    let mut script = vec![BLANK; T];
    let spelled = [
        (0, SEPARATOR),
        (1, id('B')),
        (2, id('B')),
        (3, id('O')),
        (4, id('O')),
        (6, id('B')),
        (7, id('B')),
        (8, SEPARATOR),
        (21, id('F')),
        (22, id('F')),
        (23, id('R')),
        (24, id('R')),
        (25, id('I')),
        (26, id('I')),
        (27, id('C')),
        (28, id('C')),
        (29, id('K')),
        (30, id('K')),
        (31, SEPARATOR),
    ];
    for (t, c) in spelled {
        script[t] = c;
    }
    fs_scores(&script, alphabet.len(), 0.9)
}

/// Sign tracks: TRAVEL 10..=13, TO 15..=18, PARK 32..=35, an unknown sign
/// 36..=39, DOG 40..=44; NULL elsewhere.
fn worked_isr(vocab: &SignVocabulary) -> FrameScores {
    let mut rows = vec![vec![0.05; vocab.classes()]; T];
    let mut mark = |from: usize, to: usize, class: Option<usize>| {
        for row in &mut rows[from..=to] {
            match class {
                Some(c) => {
                    row[c] = 0.9;
                    row[vocab.any()] = 0.8;
                }
                None => row[vocab.any()] = 0.9,
            }
            row[vocab.null()] = 0.2;
        }
    };
    mark(10, 13, vocab.lookup("TRAVEL"));
    mark(15, 18, vocab.lookup("TO"));
    mark(32, 35, vocab.lookup("PARK"));
    mark(36, 39, None);
    mark(40, 44, vocab.lookup("DOG"));
    for row in &mut rows {
        if row[vocab.any()] < 0.5 {
            // Between signs.
            row[vocab.null()] = 0.9;
        }
    }
    FrameScores::new(Tensor::from_rows(&rows).unwrap(), ScoreSemantics::Sigmoid, 30.0).unwrap()
}

fn worked_scores(m: &Models) -> VideoScores {
    VideoScores {
        fingerspelling: worked_fs(&m.fingerspelling.alphabet),
        isr: worked_isr(&m.isr.vocabulary),
    }
}

fn seq(line: &str) -> GlossSequence {
    parse_gloss_sequence(line).unwrap()
}

#[test]
fn score_modes() {
    assert_eq!(score_candidate(&[1.0, 0.5, 0.0], ScoreMode::Mean).unwrap(), 0.5);
    assert_eq!(score_candidate(&[1.0; 4], ScoreMode::Mean).unwrap(), 1.0);
    assert_eq!(score_candidate(&[1.0; 4], ScoreMode::Sum).unwrap(), 4.0);
    for mode in [ScoreMode::Mean, ScoreMode::Sum] {
        assert_eq!(score_candidate(&[0.3], mode).unwrap(), 0.3);
    }
    assert!(matches!(score_candidate(&[], ScoreMode::Mean), Err(PipelineError::Empty(_))));
    assert_eq!("SUM".parse::<ScoreMode>().unwrap(), ScoreMode::Sum);
}

#[test]
fn ranks_break_ties_by_index() {
    assert_eq!(rank_order(&[0.2, 0.9, 0.2, 0.5]), vec![3, 1, 4, 2]);
    assert_eq!(rank_order(&[]), Vec::<usize>::new());
}

#[test]
fn config_validation() {
    assert!(PipelineConfig::default().validate().is_ok());
    for bad in [
        PipelineConfig { k: 0, ..Default::default() },
        PipelineConfig { threshold: 0.0, ..Default::default() },
        PipelineConfig { threshold: 1.0, ..Default::default() },
        PipelineConfig { threshold: f64::NAN, ..Default::default() },
        PipelineConfig { anchor_kinds: vec![GlossKind::Gloss], ..Default::default() },
    ] {
        assert!(matches!(bad.validate(), Err(PipelineError::Config(_))), "{bad:?}");
    }
}

#[test]
fn worked_example_has_two_anchors_and_two_intervals() {
    let m = models();
    let scores = worked_scores(&m);
    let per_sign = align_sequence(
        &seq("fs-BOB TRAVEL TO fs-FRICK PARK WITH DOG"),
        &scores,
        &m,
        &PipelineConfig::default(),
    )
    .unwrap();
    assert_eq!(per_sign.len(), 7);
    let sources: Vec<ScoreSource> = per_sign.iter().map(|s| s.source).collect();
    use ScoreSource::*;
    assert_eq!(sources, [Fingerspelling, Sign, Sign, Fingerspelling, Sign, Sign, Sign]);
    let bob = per_sign[0].interval.unwrap();
    let frick = per_sign[3].interval.unwrap();
    assert_eq!((bob, frick), ((1, 7), (21, 30)));
    assert_eq!(per_sign[0].fingerspelled_region, Some(bob));
    assert!(per_sign[0].score.value() > 0.8);
    // The first interval sits between the anchors, the second after FRICK.
    for s in &per_sign[1..3] {
        let (a, b) = s.interval.unwrap();
        assert!(a > bob.1 && b < frick.0, "{s:?}");
    }
    for s in &per_sign[4..] {
        assert!(s.interval.unwrap().0 > frick.1, "{s:?}");
    }
    assert_eq!(per_sign[1].interval, Some((10, 13)));
    assert_eq!(per_sign[4].interval, Some((32, 35)));
    assert_eq!(per_sign[5].track.as_deref(), Some(ANY));
    assert_eq!(per_sign[5].in_vocabulary, Some(false));
    assert_eq!(per_sign[6].track.as_deref(), Some("DOG"));
    assert!(per_sign.iter().all(|s| s.error.is_none()));
}

#[test]
fn weak_fingerspelling_is_demoted_to_any() {
    let m = models();
    let scores = worked_scores(&m);
    let config = PipelineConfig { threshold: 0.95, ..Default::default() };
    let per_sign = align_sequence(&seq("fs-BOB TRAVEL TO fs-FRICK PARK WITH DOG"), &scores, &m, &config).unwrap();
    for i in [0, 3] {
        assert_eq!(per_sign[i].source, ScoreSource::Sign);
        assert_eq!(per_sign[i].track.as_deref(), Some(ANY));
        assert!(per_sign[i].fingerspelling_score.unwrap().value() > 0.8);
        assert!(per_sign[i].fingerspelled_region.is_none());
    }
    assert!(per_sign.iter().all(|s| s.interval.is_some()));
}

#[test]
fn infeasible_intervals_score_zero_without_dropping_the_candidate() {
    let m = models();
    let scores = worked_scores(&m);
    // Twelve glosses cannot fit in the 13 frames before FRICK.
    let line = "fs-BOB TRAVEL TO PARK DOG TRAVEL TO PARK DOG fs-FRICK PARK";
    let doc = score_candidates(
        &[(seq(line), CandidateOrigin::Manual), (seq("fs-BOB TRAVEL TO fs-FRICK PARK WITH DOG"), CandidateOrigin::Manual)],
        &scores,
        &m,
        &PipelineConfig { min_sign_frames: 3, ..Default::default() },
    )
    .unwrap();
    let bad = doc.iter().find(|c| c.index == 0).unwrap();
    assert_eq!(bad.per_sign.len(), 11);
    for s in &bad.per_sign[1..9] {
        assert_eq!(s.source, ScoreSource::Failed);
        assert_eq!(s.score.value(), 0.0);
        assert!(s.error.is_some());
    }
    assert_eq!(bad.per_sign[10].source, ScoreSource::Sign);
    assert_eq!(bad.rank, 2);
}

#[test]
fn fingerspelling_errors_demote_every_spelled_word() {
    let m = models();
    let scores = worked_scores(&m);
    // '~' is not in the alphabet, leaving an empty word.
    let per_sign = align_sequence(&seq("fs-~ TRAVEL"), &scores, &m, &PipelineConfig::default()).unwrap();
    assert_eq!(per_sign[0].source, ScoreSource::Sign);
    assert!(per_sign[0].error.as_deref().unwrap().contains("fingerspelling"));
}

#[test]
fn manual_annotation_without_fingerspelling_uses_the_whole_clip() {
    let m = models();
    let scores = worked_scores(&m);
    let cand = score_candidates(&[(seq("TRAVEL TO PARK DOG"), CandidateOrigin::Manual)], &scores, &m, &PipelineConfig::default())
        .unwrap()
        .remove(0);
    assert_eq!(cand.rank, 1);
    assert_eq!(cand.origin, CandidateOrigin::Manual);
    let spans: Vec<(usize, usize)> = cand.per_sign.iter().map(|s| s.interval.unwrap()).collect();
    assert_eq!(spans, [(10, 13), (15, 18), (32, 35), (40, 44)]);
    assert!(cand.per_sign.iter().all(|s| s.source == ScoreSource::Sign));
}

#[test]
fn empty_annotation_is_an_error() {
    let m = models();
    let world = World::new(WORLD_SEED);
    let video = render_sentence(&world, &world.signer(0), &seq("TRAVEL"), "v", &mut ChaCha8Rng::seed_from_u64(0));
    let err = score_manual_annotation(&GlossSequence::default(), &video.poses, &m, &PipelineConfig::default());
    assert!(matches!(err, Err(PipelineError::Empty(_))));
}

fn stub_for(phrase: &str, lines: &[&str]) -> StubClient {
    let mut table = StubTable::default();
    table.translate.insert(phrase.into(), lines.iter().map(|s| s.to_string()).collect());
    StubClient::new(StubTable::builtin().merged(table), 0)
}

const BOB: &str = "Bob traveled to Frick Park with his dog.";
const CANDIDATES: [&str; 3] = [
    "fs-BOB DOG fs-FRICK TRAVEL PARK",
    "fs-BOB PARK DOG fs-FRICK TRAVEL TO",
    "fs-BOB TRAVEL TO fs-FRICK PARK WITH DOG",
];

#[test]
fn annotate_ranks_the_matching_candidate_first() {
    let m = models();
    let scores = worked_scores(&m);
    let doc = annotate_with_scores(BOB, "bob", &scores, &m, &stub_for(BOB, &CANDIDATES), &PipelineConfig::default()).unwrap();
    assert_eq!(doc.candidates.len(), 3);
    let ranks: Vec<usize> = doc.candidates.iter().map(|c| c.rank).collect();
    assert_eq!(ranks, [1, 2, 3]);
    assert_eq!(doc.candidates[0].index, 2);
    assert_eq!(doc.candidates[0].gloss_sequence, CANDIDATES[2]);
    for c in &doc.candidates {
        assert_eq!(c.per_sign.len(), c.sequence().unwrap().len());
        let mean = c.per_sign.iter().map(|s| s.score.value()).sum::<f64>() / c.per_sign.len() as f64;
        assert_eq!(c.aggregate_score, Score::new(mean));
    }
    assert_eq!(doc.fingerspelling.recognized, "BOB FRICK");
    assert_eq!(doc.frames, T);
    assert!(doc.tracks.contains_key("DOG") && doc.tracks.contains_key(ANY));
    assert_eq!(doc.tracks["DOG"].len(), T);
    assert_eq!(doc.models.llm.as_ref().unwrap().model_id, "stub");
}

#[test]
fn k_one_gives_one_candidate() {
    let m = models();
    let scores = worked_scores(&m);
    let config = PipelineConfig { k: 1, ..Default::default() };
    let doc = annotate_with_scores(BOB, "bob", &scores, &m, &stub_for(BOB, &CANDIDATES), &config).unwrap();
    assert_eq!(doc.candidates.len(), 1);
    assert_eq!(doc.candidates[0].rank, 1);
}

struct Down;

impl LlmClient for Down {
    fn model_id(&self) -> &str {
        "down"
    }

    fn complete(&self, _: &crate::llm::Prompt) -> Result<String, LlmError> {
        Err(LlmError::Transport { attempts: 3, message: "unreachable".into() })
    }
}

#[test]
fn llm_failure_yields_an_empty_document_with_errors() {
    let m = models();
    let scores = worked_scores(&m);
    let doc = annotate_with_scores(BOB, "bob", &scores, &m, &Down, &PipelineConfig::default()).unwrap();
    assert!(doc.candidates.is_empty());
    assert_eq!(doc.errors.len(), 2, "{:?}", doc.errors);
    assert_eq!(doc.fingerspelling.corrected, doc.fingerspelling.recognized);
    assert_eq!(AnnotationDocument::from_json(&doc.to_json()).unwrap(), doc);
}

#[test]
fn documents_round_trip_and_print_six_decimals() {
    let m = models();
    let scores = worked_scores(&m);
    let doc = annotate_with_scores(BOB, "bob", &scores, &m, &stub_for(BOB, &CANDIDATES), &PipelineConfig::default()).unwrap();
    let text = doc.to_json();
    let back = AnnotationDocument::from_json(&text).unwrap();
    assert_eq!(back, doc);
    assert_eq!(back.to_json(), text);
    assert!(text.contains("\"aggregate_score\": 0."));
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let interval = &value["candidates"][0]["per_sign"][0]["interval"];
    assert_eq!(interval, &serde_json::json!([1, 7]));
    let score_text = text.split("\"aggregate_score\": ").nth(1).unwrap();
    let digits = score_text.split(|c: char| c == ',' || c == '\n').next().unwrap();
    assert_eq!(digits.split('.').nth(1).unwrap().len(), 6);
    let wrong = text.replace("\"schema_version\": \"v1\"", "\"schema_version\": \"v0\"");
    assert!(AnnotationDocument::from_json(&wrong).is_err());
}

#[test]
fn annotate_is_reproducible_on_rendered_video() {
    let m = models();
    let world = World::new(WORLD_SEED);
    let truth = seq(CANDIDATES[2]);
    let video = render_sentence(&world, &world.signer(3), &truth, "rendered", &mut ChaCha8Rng::seed_from_u64(5));
    let run = || {
        annotate(BOB, &video.poses, &m, &stub_for(BOB, &CANDIDATES), &PipelineConfig::default())
            .unwrap()
            .to_json()
    };
    let first = run();
    assert_eq!(first, run());
    let doc = AnnotationDocument::from_json(&first).unwrap();
    assert_eq!(doc.frames, video.poses.len());
    assert_eq!(doc.video_id, "rendered");
    for c in &doc.candidates {
        for s in &c.per_sign {
            if let Some((a, b)) = s.interval {
                assert!(a <= b && b < doc.frames);
            }
        }
    }
}

fn integer_scores() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec((0u32..=100).prop_map(f64::from), 1..8), 1..10)
}

fn ranks(candidates: &[Vec<f64>], mode: ScoreMode) -> Vec<usize> {
    let agg: Vec<f64> = candidates.iter().map(|c| score_candidate(c, mode).unwrap()).collect();
    rank_order(&agg)
}

proptest! {
    // Integer scores keep the transformed means exactly ordered.
    #[test]
    fn mean_ranking_is_affine_invariant(c in integer_scores(), a in 1u32..20, b in -50i32..50) {
        let moved: Vec<Vec<f64>> = c
            .iter()
            .map(|s| s.iter().map(|&x| f64::from(a) * x + f64::from(b)).collect())
            .collect();
        prop_assert_eq!(ranks(&c, ScoreMode::Mean), ranks(&moved, ScoreMode::Mean));
    }

    #[test]
    fn sum_ranking_is_scale_invariant(c in integer_scores(), a in 1u32..20) {
        let moved: Vec<Vec<f64>> = c.iter().map(|s| s.iter().map(|&x| f64::from(a) * x).collect()).collect();
        prop_assert_eq!(ranks(&c, ScoreMode::Sum), ranks(&moved, ScoreMode::Sum));
    }

    #[test]
    fn ranks_are_a_permutation(agg in prop::collection::vec(0.0f64..1.0, 0..12)) {
        let mut r = rank_order(&agg);
        for w in (0..agg.len()).collect::<Vec<_>>().windows(2) {
            let (i, j) = (w[0], w[1]);
            prop_assert!(agg[i] >= agg[j] || r[i] > r[j]);
        }
        r.sort_unstable();
        prop_assert_eq!(r, (1..=agg.len()).collect::<Vec<_>>());
    }

    #[test]
    fn per_sign_entries_stay_inside_their_intervals(
        isr_noise in prop::collection::vec(0.01f64..0.99, T * 6),
        p in 0.35f64..0.95,
        line in prop::sample::select(vec![
            "fs-BOB TRAVEL TO fs-FRICK PARK WITH DOG",
            "TRAVEL fs-BOB CL:1(point) DOG fs-FRICK",
            "fs-BOB fs-FRICK PARK",
            "TO TRAVEL DOG",
        ]),
    ) {
        let m = models();
        let mut scores = worked_scores(&m);
        scores.fingerspelling = {
            let fs = worked_fs(&m.fingerspelling.alphabet);
            let script: Vec<usize> = (0..T)
                .map(|t| (0..fs.classes()).max_by(|&a, &b| fs.get(t, a).total_cmp(&fs.get(t, b))).unwrap())
                .collect();
            fs_scores(&script, fs.classes(), p)
        };
        let rows: Vec<Vec<f64>> = isr_noise.chunks(6).map(<[f64]>::to_vec).collect();
        scores.isr = FrameScores::new(Tensor::from_rows(&rows).unwrap(), ScoreSemantics::Sigmoid, 30.0).unwrap();
        let per_sign = align_sequence(&seq(line), &scores, &m, &PipelineConfig::default()).unwrap();
        prop_assert_eq!(per_sign.len(), seq(line).len());
        let mut prev_end: Option<usize> = None;
        for s in &per_sign {
            prop_assert!((0.0..=1.0).contains(&s.score.value()));
            if let Some((a, b)) = s.interval {
                prop_assert!(a <= b && b < T);
                // Anchors and signs never overlap and stay in order.
                prop_assert!(prev_end.is_none_or(|e| a > e), "{:?}", per_sign);
                prev_end = Some(b);
            }
        }
    }
}

