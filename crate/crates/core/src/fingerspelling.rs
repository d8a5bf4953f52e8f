//! Fingerspelling recognition and alignment: a dilated TCN over the
//! dominant hand with a CTC head, greedy decoding for recognition and
//! forced alignment for locating known words.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{
    aggregate_words, ctc_loss, forced_align, greedy_decode, Alphabet, AlphabetError, CtcError,
    FrameScores, TokenId,
};
use crate::gloss::{normalize_word, to_ctc_tokens, TokenizeError};
use crate::nn::{
    fit, load_weights, save_weights, ModelFingerprint, split_by_signer, NnError, Params, SignerSplit, Tape, Tcn,
    TcnConfig, Tensor, TrainOutcome, TrainRecipe,
};
use crate::pose::{augment, build_features, prepare, Augment, ChannelSpec, PoseError, PoseSequence};
use crate::synth::{CorpusLabel, CorpusRecord};

pub const MODEL_KIND: &str = "fingerspelling";

#[derive(Debug, Error)]
pub enum FsError {
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(String),
}

#[derive(Debug, Clone)]
pub struct FingerspellingModel {
    pub config: TcnConfig,
    pub params: Params,
    pub alphabet: Alphabet,
    tcn: Tcn,
}

/// A located word. `start_frame..=end_frame` and `fingerspelled_region`
/// both run from the first letter's first frame to the last letter's last
/// frame; the region is kept separately for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordDetection {
    pub word: String,
    /// Mean of the word's character scores.
    pub score: f64,
    pub start_frame: usize,
    pub end_frame: usize,
    pub fingerspelled_region: (usize, usize),
}

impl FingerspellingModel {
    /// A randomly initialised model.
    pub fn new(alphabet: Alphabet, channels: usize, seed: u64) -> Result<Self, FsError> {
        let config = TcnConfig::fingerspelling(ChannelSpec::fingerspelling().dim(), alphabet.len(), channels);
        let tcn = Tcn::new(config.clone(), "")?;
        let mut params = Params::new();
        tcn.init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed));
        params.round_to_f32();
        Ok(FingerspellingModel {
            config,
            params,
            alphabet,
            tcn,
        })
    }

    pub fn from_parts(config: TcnConfig, params: Params, alphabet: Alphabet) -> Result<Self, FsError> {
        if config.output_classes != alphabet.len() {
            return Err(FsError::Config(format!(
                "head has {} outputs but the alphabet has {} classes",
                config.output_classes,
                alphabet.len()
            )));
        }
        if config.input_dim != ChannelSpec::fingerspelling().dim() {
            return Err(FsError::Config(format!(
                "input width {} does not match the dominant-hand features",
                config.input_dim
            )));
        }
        let tcn = Tcn::new(config.clone(), "")?;
        let mut expected = Params::new();
        tcn.layout(&mut expected);
        params.check_layout(&expected)?;
        Ok(FingerspellingModel {
            config,
            params,
            alphabet,
            tcn,
        })
    }

    pub fn fingerprint(&self) -> ModelFingerprint {
        ModelFingerprint::of(&self.config, &self.params)
    }

    pub fn save(&self, dir: &Path) -> Result<String, FsError> {
        Ok(save_weights(dir, MODEL_KIND, &self.config, &self.alphabet.labels(), &self.params)?)
    }

    pub fn load(dir: &Path) -> Result<Self, FsError> {
        let bundle = load_weights(dir, MODEL_KIND)?;
        let config: TcnConfig =
            serde_json::from_value(bundle.config).map_err(|e| NnError::Corrupt(format!("config: {e}")))?;
        let alphabet = Alphabet::from_labels(&bundle.labels)?;
        Self::from_parts(config, bundle.params, alphabet)
    }

    pub fn features(&self, poses: &PoseSequence) -> Result<Tensor, FsError> {
        let (prepared, _) = prepare(poses)?;
        Ok(build_features(&prepared, &ChannelSpec::fingerspelling())?.rows)
    }

    pub fn scores_for_features(&self, features: &Tensor, fps: f64) -> Result<FrameScores, FsError> {
        let logits = self.tcn.logits(&self.params, features)?;
        Ok(FrameScores::from_logits_softmax(&logits, fps))
    }

    /// Per-frame softmax over the alphabet.
    pub fn frame_scores(&self, poses: &PoseSequence) -> Result<FrameScores, FsError> {
        self.scores_for_features(&self.features(poses)?, poses.fps)
    }

    /// Per-symbol CTC loss of `x` under `params` and its gradient for
    /// every parameter.
    pub fn loss_and_grad(&self, params: &Params, x: &Tensor, target: &[TokenId]) -> Result<(f64, Vec<Tensor>), FsError> {
        let mut tape = Tape::new(params);
        let input = tape.input(x.clone());
        let out = self.tcn.forward(&mut tape, input)?;
        let scores = FrameScores::from_logits_softmax(tape.value(out), 30.0);
        let ctc = ctc_loss(&scores, target)?;
        let n = target.len() as f64;
        let mut seed = ctc.grad_logits;
        seed.scale(1.0 / n);
        Ok((ctc.loss / n, tape.backward(out, &seed)))
    }

    /// CTC loss per target symbol.
    pub fn per_char_loss(&self, features: &Tensor, target: &[TokenId]) -> Result<f64, FsError> {
        let scores = self.scores_for_features(features, 30.0)?;
        Ok(ctc_loss(&scores, target)?.loss / target.len() as f64)
    }
}

/// Context-free transcription: greedy CTC decoding of the dominant hand.
pub fn recognize(model: &FingerspellingModel, poses: &PoseSequence) -> Result<String, FsError> {
    Ok(greedy_decode(&model.frame_scores(poses)?, &model.alphabet))
}

/// Normalises words onto the alphabet (case folding, dropping characters
/// it lacks) and encodes them; the error names the offending word.
pub fn word_tokens(words: &[String], alphabet: &Alphabet, strict: bool) -> Result<(Vec<String>, Vec<TokenId>), FsError> {
    let normalized = words
        .iter()
        .map(|w| normalize_word(w, alphabet, strict))
        .collect::<Result<Vec<_>, _>>()?;
    let tokens = to_ctc_tokens(&normalized, alphabet)?;
    Ok((normalized, tokens))
}

/// Locates `words`, in order, on precomputed scores.
pub fn align_words_on_scores(
    scores: &FrameScores,
    alphabet: &Alphabet,
    words: &[String],
) -> Result<Vec<WordDetection>, FsError> {
    if words.is_empty() {
        return Ok(Vec::new());
    }
    let (normalized, tokens) = word_tokens(words, alphabet, false)?;
    let align = forced_align(scores, &tokens, alphabet)?;
    let grouped = aggregate_words(&align)?;
    Ok(grouped
        .units
        .iter()
        .zip(&normalized)
        .map(|(u, _)| WordDetection {
            word: u.label.clone(),
            score: u.score,
            start_frame: u.start_frame,
            end_frame: u.end_frame,
            fingerspelled_region: (u.start_frame, u.end_frame),
        })
        .collect())
}

/// Forced alignment of known words; no thresholding is applied.
pub fn align_words(
    model: &FingerspellingModel,
    poses: &PoseSequence,
    words: &[String],
) -> Result<Vec<WordDetection>, FsError> {
    align_words_on_scores(&model.frame_scores(poses)?, &model.alphabet, words)
}

/// Indices of samples kept after removing the `drop_fraction` with the
/// highest loss (⌊n·f⌋ samples). Equal losses are ranked by position, the
/// earlier sample counting as worse.
pub fn drop_highest_loss(losses: &[f64], drop_fraction: f64) -> Result<Vec<usize>, FsError> {
    if !(0.0..0.5).contains(&drop_fraction) {
        return Err(FsError::Config(format!("drop fraction {drop_fraction} outside [0, 0.5)")));
    }
    let n_drop = (losses.len() as f64 * drop_fraction).floor() as usize;
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[n_drop..].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Second-pass training set: fingerspelling samples ranked by the pass-one
/// model's per-character CTC loss with the worst `drop_fraction` removed.
/// Samples whose target cannot be aligned count as infinitely bad.
pub fn filter_training_set(
    samples: &[CorpusRecord],
    model: &FingerspellingModel,
    drop_fraction: f64,
) -> Result<Vec<CorpusRecord>, FsError> {
    let prepared = prepare_samples(samples, &model.alphabet, 0, &Augment::default(), 0)?;
    let losses: Vec<f64> = prepared
        .iter()
        .map(|s| model.per_char_loss(&s.features, &s.target).unwrap_or(f64::INFINITY))
        .collect();
    Ok(drop_highest_loss(&losses, drop_fraction)?
        .into_iter()
        .map(|i| samples[i].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsTrainConfig {
    pub channels: usize,
    pub recipe: TrainRecipe,
    pub split_seed: u64,
    pub init_seed: u64,
    /// Fraction dropped between the two passes; `None` trains once.
    pub drop_fraction: Option<f64>,
    /// Perturbed copies precomputed per training sample; each step draws
    /// the original or one of them.
    pub augment_copies: usize,
    pub augment: Augment,
}

impl Default for FsTrainConfig {
    fn default() -> Self {
        FsTrainConfig {
            channels: 80,
            recipe: TrainRecipe {
                learning_rate: 3e-3,
                batch_size: 8,
                ..TrainRecipe::default()
            },
            split_seed: 0,
            init_seed: 0,
            drop_fraction: None,
            augment_copies: 8,
            augment: Augment::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FsTrainReport {
    pub model: FingerspellingModel,
    pub outcome: TrainOutcome,
    pub split: SignerSplit,
    /// Corpus indices removed by the filtering pass.
    pub dropped: Vec<usize>,
}

#[derive(Clone)]
struct Prepared {
    features: Tensor,
    /// Augmented feature matrices of the same clip.
    variants: Vec<Tensor>,
    target: Vec<TokenId>,
}

impl Prepared {
    fn draw(&self, rng: &mut impl Rng) -> &Tensor {
        match rng.random_range(0..=self.variants.len()) {
            0 => &self.features,
            i => &self.variants[i - 1],
        }
    }
}

fn fs_features(poses: &PoseSequence) -> Result<Tensor, FsError> {
    let (prepared, _) = prepare(poses)?;
    Ok(build_features(&prepared, &ChannelSpec::fingerspelling())?.rows)
}

fn prepare_samples(
    samples: &[CorpusRecord],
    alphabet: &Alphabet,
    copies: usize,
    aug: &Augment,
    seed: u64,
) -> Result<Vec<Prepared>, FsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|r| {
            let CorpusLabel::Fingerspelling { words } = &r.label else {
                return Err(FsError::Corpus(format!("{} is not a fingerspelling sample", r.id)));
            };
            let (_, target) = word_tokens(words, alphabet, true)?;
            let mut variants = Vec::with_capacity(copies);
            for _ in 0..copies {
                variants.push(fs_features(&augment(&r.poses, aug, &mut rng))?);
            }
            Ok(Prepared {
                features: fs_features(&r.poses)?,
                variants,
                target,
            })
        })
        .collect()
}

fn train_pass(
    model: &FingerspellingModel,
    train: &[Prepared],
    val: &[Prepared],
    recipe: &TrainRecipe,
) -> Result<TrainOutcome, FsError> {
    let mut failure: Option<FsError> = None;
    let outcome = fit(
        model.params.clone(),
        train,
        val,
        recipe,
        |p, s, rng| model.loss_and_grad(p, s.draw(rng), &s.target).map_err(to_nn),
        |p, s| {
            let logits = model.tcn.logits(p, &s.features)?;
            let scores = FrameScores::from_logits_softmax(&logits, 30.0);
            match ctc_loss(&scores, &s.target) {
                Ok(l) => Ok(l.loss / s.target.len() as f64),
                Err(e) => {
                    failure.get_or_insert(FsError::Ctc(e));
                    Ok(f64::INFINITY)
                }
            }
        },
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

fn to_nn(e: FsError) -> NnError {
    match e {
        FsError::Nn(e) => e,
        other => NnError::Training(other.to_string()),
    }
}

/// Signer-disjoint 70/15/15 split, AdamW with cosine annealing and early
/// stopping; optionally a second pass without the worst-fitting samples.
/// `epochs` caps each pass.
pub fn train_toy(config: &FsTrainConfig, corpus: &[CorpusRecord], epochs: usize) -> Result<FsTrainReport, FsError> {
    let alphabet = Alphabet::toy();
    let signers: Vec<u32> = corpus.iter().map(|r| r.signer).collect();
    let split = split_by_signer(&signers, config.split_seed)?;
    let mut prepared = prepare_samples(corpus, &alphabet, 0, &config.augment, 0)?;
    let with_copies = prepare_samples(
        &split.train.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>(),
        &alphabet,
        config.augment_copies,
        &config.augment,
        config.recipe.seed,
    )?;
    for (&i, p) in split.train.iter().zip(with_copies) {
        prepared[i] = p;
    }
    let pick = |idx: &[usize]| -> Vec<Prepared> { idx.iter().map(|&i| prepared[i].clone()).collect() };
    let recipe = TrainRecipe {
        max_epochs: epochs,
        ..config.recipe.clone()
    };
    let mut model = FingerspellingModel::new(alphabet, config.channels, config.init_seed)?;
    let train = pick(&split.train);
    let val = pick(&split.val);
    let mut outcome = train_pass(&model, &train, &val, &recipe)?;
    model.params = outcome.params.clone();
    let mut dropped = Vec::new();
    if let Some(f) = config.drop_fraction {
        let losses: Vec<f64> = train
            .iter()
            .map(|s| model.per_char_loss(&s.features, &s.target).unwrap_or(f64::INFINITY))
            .collect();
        let keep = drop_highest_loss(&losses, f)?;
        dropped = (0..train.len())
            .filter(|i| !keep.contains(i))
            .map(|i| split.train[i])
            .collect();
        let kept: Vec<Prepared> = keep.iter().map(|&i| train[i].clone()).collect();
        let fresh = FingerspellingModel::new(model.alphabet.clone(), config.channels, config.init_seed)?;
        outcome = train_pass(&fresh, &kept, &val, &recipe)?;
        model.params = outcome.params.clone();
    }
    model.params.round_to_f32();
    Ok(FsTrainReport {
        model,
        outcome,
        split,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{fs_corpus, World, WORLD_SEED};

    #[test]
    fn drop_rule() {
        assert_eq!(drop_highest_loss(&[1.0, 1.0, 1.0, 100.0], 0.25).unwrap(), vec![0, 1, 2]);
        assert_eq!(drop_highest_loss(&[3.0, 1.0, 2.0], 0.0).unwrap(), vec![0, 1, 2]);
        // Ties: the earlier sample goes first.
        assert_eq!(drop_highest_loss(&[5.0, 5.0, 1.0, 1.0], 0.25).unwrap(), vec![1, 2, 3]);
        assert!(drop_highest_loss(&[1.0], 0.5).is_err());
        assert!(drop_highest_loss(&[1.0], -0.1).is_err());
    }

    #[test]
    fn head_matches_alphabet() {
        let m = FingerspellingModel::new(Alphabet::toy(), 12, 0).unwrap();
        assert_eq!(m.config.output_classes, 32);
        let other = Alphabet::letters_with("");
        assert!(FingerspellingModel::from_parts(m.config.clone(), m.params.clone(), other).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let m = FingerspellingModel::new(Alphabet::toy(), 12, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = FingerspellingModel::load(dir.path()).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.alphabet, m.alphabet);
    }

    #[test]
    fn empty_video_is_an_error() {
        let m = FingerspellingModel::new(Alphabet::toy(), 12, 0).unwrap();
        let seq = PoseSequence {
            video_id: "x".into(),
            fps: 30.0,
            frames: vec![crate::pose::PoseFrame::new(0.0)],
        };
        assert!(recognize(&m, &seq).is_err());
    }

    #[test]
    fn alignment_spans_are_ordered() {
        let w = World::new(WORLD_SEED);
        let rec = &fs_corpus(&w, 1, 3, 2)[0];
        let m = FingerspellingModel::new(Alphabet::toy(), 12, 0).unwrap();
        let words = vec!["AB".to_string(), "cd!".to_string()];
        let dets = align_words(&m, &rec.poses, &words).unwrap();
        assert_eq!(dets[0].word, "AB");
        assert_eq!(dets[1].word, "CD");
        assert!(dets[0].end_frame < dets[1].start_frame);
        assert!(dets.iter().all(|d| (0.0..=1.0).contains(&d.score)));
        assert!(align_words(&m, &rec.poses, &["!!".to_string()]).is_err());
    }

    #[test]
    fn tiny_training_is_deterministic_and_learns() {
        let w = World::new(WORLD_SEED);
        let corpus = fs_corpus(&w, 24, 4, 9);
        let config = FsTrainConfig {
            channels: 12,
            recipe: TrainRecipe {
                learning_rate: 3e-3,
                patience: 100,
                ..TrainRecipe::default()
            },
            ..FsTrainConfig::default()
        };
        let a = train_toy(&config, &corpus, 3).unwrap();
        let b = train_toy(&config, &corpus, 3).unwrap();
        assert_eq!(a.model.params, b.model.params);
        let log = &a.outcome.log;
        assert!(log.last().unwrap().train_loss < log[0].train_loss);
    }
}
