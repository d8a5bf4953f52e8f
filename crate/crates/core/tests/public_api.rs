use glossboot::ctc::{greedy_decode, Alphabet, FrameScores, ScoreSemantics, BLANK};
use glossboot::fingerspelling::FingerspellingModel;
use glossboot::gloss::{canonicalize, parse_gloss_sequence, render, to_ctc_tokens, GlossSequence, GlossToken};
use glossboot::isr::{IsrModel, SignVocabulary};
use glossboot::llm::{StubClient, StubTable};
use glossboot::nn::Tensor;
use glossboot::pipeline::{annotate, AnnotationDocument, Models, PipelineConfig};
use glossboot::pose::{mirror_flip, read_pose_jsonl, select_dominant_hand, write_pose_jsonl, Side};
use glossboot::synth::{render_sentence, World, TOY_VOCABULARY, WORLD_SEED};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn token() -> impl Strategy<Value = GlossToken> {
    let word = "[A-Z]{1,6}";
    prop_oneof![
        word.prop_map(|w| GlossToken::gloss(&w)),
        word.prop_map(|w| GlossToken::fingerspelled(&w)),
        word.prop_map(|w| GlossToken::name_sign(&w)),
        word.prop_map(|w| GlossToken::lexicalized(&w)),
    ]
}

proptest! {
    #[test]
    fn rendered_sequences_parse_back(tokens in prop::collection::vec(token(), 1..8)) {
        let seq = GlossSequence::new(tokens);
        let line = render(&seq);
        prop_assert_eq!(&parse_gloss_sequence(&line).unwrap().tokens, &seq.tokens);
        prop_assert_eq!(canonicalize(&line).unwrap(), line);
    }

    #[test]
    fn one_hot_streams_decode_to_their_words(words in prop::collection::vec("[A-Z]{1,5}", 1..4), hold in 1usize..4) {
        let a = Alphabet::toy();
        let ids = to_ctc_tokens(&words, &a).unwrap();
        let mut frames = Vec::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 && ids[i - 1] == id {
                frames.push(BLANK);
            }
            frames.extend(std::iter::repeat_n(id, hold));
        }
        let mut t = Tensor::zeros(frames.len(), a.len());
        for (r, &c) in frames.iter().enumerate() {
            t.set(r, c, 1.0);
        }
        let scores = FrameScores::new(t, ScoreSemantics::Softmax, 30.0).unwrap();
        prop_assert_eq!(greedy_decode(&scores, &a), words.join(" "));
    }
}

fn sentence(signer: u32) -> glossboot::synth::SentenceVideo {
    let world = World::new(WORLD_SEED);
    let seq = parse_gloss_sequence("fs-BOB TRAVEL TO fs-FRICK PARK WITH DOG").unwrap();
    render_sentence(&world, &world.signer(signer), &seq, "v", &mut ChaCha8Rng::seed_from_u64(3))
}

#[test]
fn pose_files_and_mirroring() {
    let video = sentence(4);
    let text = write_pose_jsonl(&video.poses);
    assert_eq!(read_pose_jsonl(&text).unwrap(), video.poses);
    assert_eq!(mirror_flip(&mirror_flip(&video.poses)), video.poses);
    // Signer 4 is left-handed.
    assert_eq!(select_dominant_hand(&video.poses).unwrap().dominant, Side::Left);
}

#[test]
fn untrained_models_still_produce_a_valid_document() {
    let video = sentence(0);
    let models = Models {
        fingerspelling: FingerspellingModel::new(Alphabet::toy(), 8, 1).unwrap(),
        isr: IsrModel::new(SignVocabulary::new(&TOY_VOCABULARY).unwrap(), 8, 1).unwrap(),
    };
    let english = "Bob traveled to Frick Park with his dog.";
    let mut table = StubTable::default();
    table.translate.insert(
        english.to_string(),
        vec!["fs-BOB TRAVEL TO fs-FRICK PARK WITH DOG".into(), "fs-BOB GO PARK".into(), "TRAVEL DOG".into()],
    );
    let llm = StubClient::new(table, 0);
    let config = PipelineConfig { k: 3, ..PipelineConfig::default() };
    let doc = annotate(english, &video.poses, &models, &llm, &config).unwrap();
    assert_eq!(doc.frames, video.poses.len());
    let mut ranks: Vec<usize> = doc.candidates.iter().map(|c| c.rank).collect();
    ranks.sort();
    assert_eq!(ranks, [1, 2, 3]);
    for c in &doc.candidates {
        assert_eq!(c.per_sign.len(), c.sequence().unwrap().len());
        for s in &c.per_sign {
            if let Some((a, b)) = s.interval {
                assert!(a <= b && b < doc.frames);
            }
        }
    }
    let again = AnnotationDocument::from_json(&doc.to_json()).unwrap();
    assert_eq!(again.to_json(), doc.to_json());
}
