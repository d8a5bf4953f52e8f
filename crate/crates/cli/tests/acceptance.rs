//! Acceptance suite: one PASS/FAIL line per criterion. Criteria 5 and 6 train
//! the toy models; 7 and 8 reuse them.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use glossboot::ctc::{ctc_loss, forced_align, greedy_decode, Alphabet, FrameScores, ScoreSemantics, TokenId, BLANK};
use glossboot::fingerspelling::{recognize, train_toy, word_tokens, FingerspellingModel, FsTrainConfig};
use glossboot::gloss::{to_ctc_tokens, GlossSequence, GlossToken};
use glossboot::isr::{classify, isr_scores, train_toy_isr, IsrModel, IsrTrainConfig, SignVocabulary};
use glossboot::metrics::{cer, chrf, corpus_cer, op_point, roc_auc, LabeledScore};
use glossboot::nn::{receptive_field, Tensor};
use glossboot::oracle;
use glossboot::pipeline::{align_sequence, score_candidates, CandidateOrigin, Models, PipelineConfig, ScoreMode, VideoScores};
use glossboot::pose::mirror_flip;
use glossboot::synth::{fs_corpus, isr_corpus, sentence_case, CorpusLabel, World, TOY_VOCABULARY, WORLD_SEED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and thresholds.
const CTC_LOSS_TOL: f64 = 1e-6;
const VITERBI_TOL: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-4;
const FS_CER_MAX: f64 = 0.05;
const ISR_TOP1_MIN: f64 = 0.90;
const TRAIN_BUDGET: Duration = Duration::from_secs(600);
const RANKING_MIN: usize = 90;
const AUC_MIN: f64 = 0.95;
const OP_MIN: f64 = 0.90;
const AUC_TOL: f64 = 1e-9;

// Desk-scale corpus sizes, as the CLI defaults.
const FS_PHRASES: usize = 500;
const ISR_PER_CLASS: usize = 30;
const SIGNERS: u32 = 20;
const FS_EPOCHS: usize = 80;
const ISR_EPOCHS: usize = 30;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn softmax_scores(probs: Tensor) -> FrameScores {
    FrameScores::new(probs, ScoreSemantics::Softmax, 30.0).unwrap()
}

fn ctc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_loss, mut worst_path) = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 500 {
        let classes = rng.random_range(2..=4);
        let frames = rng.random_range(1..=6);
        let len = rng.random_range(0..=3);
        let target: Vec<TokenId> = (0..len).map(|_| rng.random_range(1..classes)).collect();
        let logits: Vec<f64> = (0..frames * classes).map(|_| rng.random_range(-2.0..2.0)).collect();
        let probs = Tensor::from_vec(frames, classes, logits).unwrap().softmax_rows();
        let total = oracle::ctc_path_sum(&probs, &target);
        if total == 0.0 {
            continue; // infeasible: too few frames
        }
        let scores = softmax_scores(probs.clone());
        let loss = ctc_loss(&scores, &target).map_err(|e| e.to_string())?.loss;
        worst_loss = worst_loss.max((loss + total.ln()).abs());
        let alphabet = Alphabet::new("ABC".chars()).unwrap();
        let align = forced_align(&scores, &target, &alphabet).map_err(|e| e.to_string())?;
        worst_path = worst_path.max((align.total_log_score - oracle::ctc_best_path_log(&probs, &target)).abs());
        n += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_loss <= CTC_LOSS_TOL && worst_path <= VITERBI_TOL && secs < 30.0,
        format!("{n} instances; max |loss err| {worst_loss:.2e}, max |viterbi err| {worst_path:.2e}, {secs:.1}s"),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let world = World::new(WORLD_SEED);
    let clip = &fs_corpus(&world, 1, 1, 3)[0];
    let CorpusLabel::Fingerspelling { words } = &clip.label else { unreachable!() };
    let model = FingerspellingModel::new(Alphabet::toy(), 8, 4).unwrap();
    let x = model.features(&clip.poses).unwrap();
    let (_, target) = word_tokens(words, &model.alphabet, false).unwrap();
    let (_, grads) = model.loss_and_grad(&model.params, &x, &target).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let t = rng.random_range(0..model.params.len());
        let k = rng.random_range(0..model.params.tensor(t).data().len());
        let loss_with = |delta: f64| {
            let mut p = model.params.clone();
            p.tensors_mut()[t].data_mut()[k] += delta;
            model.loss_and_grad(&p, &x, &target).unwrap().0
        };
        let numeric = (loss_with(h) - loss_with(-h)) / (2.0 * h);
        let analytic = grads[t].data()[k];
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= GRAD_REL_TOL && secs < 60.0,
        format!("50 probes; max relative error {worst:.2e}, {secs:.1}s"),
    )
}

fn receptive_fields() -> Outcome {
    let fs = FingerspellingModel::new(Alphabet::toy(), FsTrainConfig::default().channels, 0).unwrap();
    let vocab = SignVocabulary::new(&TOY_VOCABULARY).unwrap();
    let isr = IsrModel::new(vocab, IsrTrainConfig::default().channels, 0).unwrap();
    let (a, b, c) = (
        receptive_field(&fs.config),
        receptive_field(&isr.config.two_hand),
        receptive_field(&isr.config.one_hand),
    );
    check(a == 35 && b == 23 && c == 23, format!("fingerspelling {a}, isr {b}/{c}"))
}

fn one_hot(classes: usize, stream: &[TokenId]) -> FrameScores {
    let mut t = Tensor::zeros(stream.len(), classes);
    for (r, &c) in stream.iter().enumerate() {
        t.set(r, c, 1.0);
    }
    softmax_scores(t)
}

fn greedy_fidelity() -> Outcome {
    let a = Alphabet::toy();
    let id = |c| a.index_of(c).unwrap();
    let sep = a.separator();
    let stream = [sep, id('A'), id('A'), id('A'), BLANK, id('B'), id('B'), sep, id('C'), id('C'), id('C'), id('C'), sep];
    let example = greedy_decode(&one_hot(a.len(), &stream), &a);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0;
    for _ in 0..1000 {
        let words: Vec<String> = (0..rng.random_range(1..=3))
            .map(|_| (0..rng.random_range(1..=6)).map(|_| a.symbols()[rng.random_range(0..a.symbols().len())]).collect())
            .collect();
        let tokens = to_ctc_tokens(&words, &a).unwrap();
        let mut frames = Vec::new();
        for (i, &tok) in tokens.iter().enumerate() {
            if i > 0 && (tokens[i - 1] == tok || rng.random_bool(0.3)) {
                frames.push(BLANK);
            }
            frames.extend(std::iter::repeat_n(tok, rng.random_range(1..=3)));
        }
        if greedy_decode(&one_hot(a.len(), &frames), &a) != words.join(" ") {
            failures += 1;
        }
    }
    check(
        example == "AB C" && failures == 0,
        format!("example decodes to {example:?}; {failures}/1000 round-trip failures"),
    )
}

struct Trained {
    fs: Option<FingerspellingModel>,
    isr: Option<IsrModel>,
}

fn fingerspelling_task(trained: &mut Trained) -> Outcome {
    let world = World::new(WORLD_SEED);
    let corpus = fs_corpus(&world, FS_PHRASES, SIGNERS, 1);
    let start = Instant::now();
    let report = train_toy(&FsTrainConfig::default(), &corpus, FS_EPOCHS).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut pairs = Vec::new();
    for &i in &report.split.test {
        let CorpusLabel::Fingerspelling { words } = &corpus[i].label else { unreachable!() };
        pairs.push((words.join(" "), recognize(&report.model, &corpus[i].poses).unwrap()));
    }
    let held_out = corpus_cer(pairs.iter().map(|(t, h)| (t.as_str(), h.as_str()))).map_err(|e| e.to_string())?;
    trained.fs = Some(report.model);
    check(
        held_out <= FS_CER_MAX && elapsed <= TRAIN_BUDGET,
        format!(
            "{} symbols, {} phrases; held-out CER {:.2}% on {} clips; trained in {:.0}s",
            Alphabet::toy().symbols().len(),
            corpus.len(),
            100.0 * held_out,
            pairs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn isr_task(trained: &mut Trained) -> Outcome {
    let world = World::new(WORLD_SEED);
    let corpus = isr_corpus(&world, ISR_PER_CLASS, SIGNERS, 1);
    let vocab = SignVocabulary::new(&TOY_VOCABULARY).unwrap();
    let start = Instant::now();
    let report = train_toy_isr(&IsrTrainConfig::default(), vocab.clone(), &corpus, ISR_EPOCHS).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut correct = 0;
    for &i in &report.split.test {
        let CorpusLabel::Sign { gloss, .. } = &corpus[i].label else { unreachable!() };
        correct += usize::from(classify(&report.model, &corpus[i].poses).unwrap() == *gloss);
    }
    let top1 = correct as f64 / report.split.test.len() as f64;
    let mut mirror_mismatch = 0;
    for clip in corpus.iter().take(100) {
        let a = isr_scores(&report.model, &clip.poses).unwrap();
        let b = isr_scores(&report.model, &mirror_flip(&clip.poses)).unwrap();
        mirror_mismatch += usize::from(a.probs() != b.probs());
    }
    trained.isr = Some(report.model);
    check(
        top1 >= ISR_TOP1_MIN && mirror_mismatch == 0 && elapsed <= TRAIN_BUDGET,
        format!(
            "{} classes; held-out top-1 {:.1}% ({correct}/{}); mirrored pairs differing {mirror_mismatch}/100; trained in {:.0}s",
            vocab.glosses().len(),
            100.0 * top1,
            report.split.test.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn models(trained: &Trained) -> Result<Models, String> {
    match (&trained.fs, &trained.isr) {
        (Some(fs), Some(isr)) => Ok(Models { fingerspelling: fs.clone(), isr: isr.clone() }),
        _ => Err("needs the models of criteria 5 and 6".into()),
    }
}

/// Edit family of a perturbed candidate relative to the truth.
fn edit_family(truth: &GlossSequence, cand: &GlossSequence) -> &'static str {
    let words = |s: &GlossSequence| s.tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>();
    let (mut a, mut b) = (words(truth), words(cand));
    let spelled = |v: &[String], t: &GlossSequence| {
        t.tokens.iter().zip(v).filter(|(t, _)| t.kind().is_hand_spelled()).map(|(_, w)| w.clone()).collect::<Vec<_>>()
    };
    let (fa, fb) = (spelled(&a, truth), spelled(&b, cand));
    if cand.tokens.iter().zip(&b).any(|(t, w)| !t.kind().is_hand_spelled() && !a.contains(w) && !TOY_VOCABULARY.contains(&w.as_str())) {
        return "out-of-vocabulary";
    }
    if fb.iter().any(|w| !fa.contains(w)) {
        return "respelled";
    }
    a.sort();
    b.sort();
    match b.len().cmp(&a.len()) {
        _ if a == b => "reordered",
        std::cmp::Ordering::Greater => "inserted",
        std::cmp::Ordering::Less => "deleted",
        std::cmp::Ordering::Equal => "substituted",
    }
}

fn ranking_oracle(trained: &Trained) -> Outcome {
    let models = models(trained)?;
    let world = World::new(WORLD_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let (mut mean_wins, mut sum_wins) = (0, 0);
    // Pairwise truth-beats-candidate counts per edit family (mean mode).
    let mut families: std::collections::BTreeMap<&str, (usize, usize)> = Default::default();
    for v in 0..100u32 {
        let case = sentence_case(&world, &world.signer(1000 + v), None, &format!("rank-{v}"), 10, None, &mut rng);
        let scores = VideoScores::compute(&models, &case.video.poses).map_err(|e| e.to_string())?;
        let pool: Vec<(GlossSequence, CandidateOrigin)> =
            case.candidates.iter().map(|c| (c.clone(), CandidateOrigin::Llm)).collect();
        for mode in [ScoreMode::Mean, ScoreMode::Sum] {
            let config = PipelineConfig { score_mode: mode, ..PipelineConfig::default() };
            let ranked = score_candidates(&pool, &scores, &models, &config).map_err(|e| e.to_string())?;
            let first = usize::from(ranked[0].index == case.truth_index);
            if mode == ScoreMode::Sum {
                sum_wins += first;
                continue;
            }
            mean_wins += first;
            let truth_rank = ranked.iter().find(|c| c.index == case.truth_index).map(|c| c.rank).unwrap();
            for c in ranked.iter().filter(|c| c.index != case.truth_index) {
                let e = families.entry(edit_family(&case.video.truth, &case.candidates[c.index])).or_default();
                e.0 += usize::from(truth_rank < c.rank);
                e.1 += 1;
            }
        }
    }
    let breakdown: Vec<String> = families
        .iter()
        .map(|(f, (w, n))| format!("{f} {:.0}%", 100.0 * *w as f64 / *n as f64))
        .collect();
    check(
        mean_wins >= RANKING_MIN,
        format!(
            "truth ranked first in {mean_wins}/100 (mean); sum mode {sum_wins}/100; truth beats candidate by edit: {}",
            breakdown.join(", ")
        ),
    )
}

/// Same sentence with every hand-spelled word replaced by a random word of
/// equal length drawn from `letters`.
fn with_decoys(truth: &GlossSequence, letters: &[char], rng: &mut ChaCha8Rng) -> GlossSequence {
    GlossSequence::new(
        truth
            .tokens
            .iter()
            .map(|t| {
                if t.kind().is_hand_spelled() {
                    let word: String = t.text().chars().map(|_| letters[rng.random_range(0..letters.len())]).collect();
                    GlossToken::fingerspelled(&word)
                } else {
                    t.clone()
                }
            })
            .collect(),
    )
}

fn detection(trained: &Trained) -> Outcome {
    let models = models(trained)?;
    let world = World::new(WORLD_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let config = PipelineConfig::default();
    let alphabet: Vec<char> = ('A'..='Z').collect();
    // `samples` pits true words against uniformly random decoys; `absent`
    // against decoys using only letters spelled nowhere in the clip.
    let (mut samples, mut absent) = (Vec::new(), Vec::new());
    for v in 0..100u32 {
        let case = sentence_case(&world, &world.signer(2000 + v), None, &format!("det-{v}"), 1, None, &mut rng);
        let scores = VideoScores::compute(&models, &case.video.poses).map_err(|e| e.to_string())?;
        let truth = &case.video.truth;
        let spelled: String = truth.tokens.iter().filter(|t| t.kind().is_hand_spelled()).map(|t| t.text()).collect();
        let unused: Vec<char> = alphabet.iter().copied().filter(|c| !spelled.contains(*c)).collect();
        let random = with_decoys(truth, &alphabet, &mut rng);
        let disjoint = with_decoys(truth, &unused, &mut rng);
        for (seq, label, out) in [(truth, true, 0), (&random, false, 0), (truth, true, 1), (&disjoint, false, 1)] {
            let per_sign = align_sequence(seq, &scores, &models, &config).map_err(|e| e.to_string())?;
            let target = if out == 0 { &mut samples } else { &mut absent };
            for (t, s) in seq.tokens.iter().zip(&per_sign) {
                if let (true, Some(score)) = (t.kind().is_hand_spelled(), s.fingerspelling_score) {
                    target.push(LabeledScore { score: score.value(), label });
                }
            }
        }
    }
    let (auc, _) = roc_auc(&samples).map_err(|e| e.to_string())?;
    let op = op_point(&samples, config.threshold);
    let (auc_absent, _) = roc_auc(&absent).map_err(|e| e.to_string())?;
    let op_absent = op_point(&absent, config.threshold);
    check(
        auc >= AUC_MIN && op.precision >= OP_MIN && op.recall >= OP_MIN,
        format!(
            "{} words vs random decoys: AUC {auc:.4}; at θ={} precision {:.3}, recall {:.3} \
             (decoys from letters absent from the clip: AUC {auc_absent:.4}, precision {:.3}, recall {:.3})",
            samples.len(),
            config.threshold,
            op.precision,
            op.recall,
            op_absent.precision,
            op_absent.recall
        ),
    )
}

fn metric_units() -> Outcome {
    let c = cer("PLEASANT", "PLESANT").map_err(|e| e.to_string())?;
    let lev = oracle::edit_distance(&"PLEASANT".chars().collect::<Vec<_>>(), &"PLESANT".chars().collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let mut s: Vec<LabeledScore> = (0..n)
            .map(|_| LabeledScore { score: (rng.random_range(0..20) as f64) / 20.0, label: rng.random_bool(0.5) })
            .collect();
        s[0].label = true;
        s[1].label = false;
        let (auc, _) = roc_auc(&s).map_err(|e| e.to_string())?;
        let pos: Vec<f64> = s.iter().filter(|x| x.label).map(|x| x.score).collect();
        let neg: Vec<f64> = s.iter().filter(|x| !x.label).map(|x| x.score).collect();
        worst = worst.max((auc - oracle::pairwise_auc(&pos, &neg)).abs());
    }
    let self_chrf = chrf("fs-BOB TRAVEL TO fs-FRICK PARK", "fs-BOB TRAVEL TO fs-FRICK PARK");
    check(
        c == 0.125 && lev == 1 && worst <= AUC_TOL && self_chrf == 1.0,
        format!("cer {c}; AUC max deviation {worst:.1e} over 100 sets; chrf(a,a) {self_chrf}"),
    )
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_glossboot"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("glossboot {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn hermetic_end_to_end() -> Outcome {
    let fx = fixtures();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let english = std::fs::read_to_string(fx.join("sentence/transcripts.jsonl")).map_err(|e| e.to_string())?;
    let english: serde_json::Value = serde_json::from_str(english.lines().next().unwrap()).unwrap();
    let english = english["english"].as_str().unwrap();
    let mut docs = Vec::new();
    let mut svgs = Vec::new();
    for run in 0..2 {
        let doc = dir.path().join(format!("doc{run}.json"));
        let svg = dir.path().join(format!("timeline{run}.svg"));
        run_cli(&[
            "annotate",
            "--poses",
            fx.join("sentence/poses/sentence-000.jsonl").to_str().unwrap(),
            "--english",
            english,
            "--model-dir",
            fx.join("models").to_str().unwrap(),
            "--stub-table",
            fx.join("sentence/stub_table.json").to_str().unwrap(),
            "--llm",
            "stub",
            "--out",
            doc.to_str().unwrap(),
        ])?;
        run_cli(&["render-timeline", "--doc", doc.to_str().unwrap(), "--rank", "1", "--out", svg.to_str().unwrap()])?;
        docs.push(std::fs::read(&doc).map_err(|e| e.to_string())?);
        svgs.push(std::fs::read(&svg).map_err(|e| e.to_string())?);
    }
    let golden_doc = std::fs::read(fx.join("golden/annotation.json")).map_err(|e| e.to_string())?;
    let golden_svg = std::fs::read(fx.join("golden/timeline.svg")).map_err(|e| e.to_string())?;
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/annotation.schema.json"))
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let instance: serde_json::Value = serde_json::from_slice(&docs[0]).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    let top = instance["candidates"][0]["index"].as_u64();
    check(
        docs[0] == docs[1] && svgs[0] == svgs[1] && docs[0] == golden_doc && svgs[0] == golden_svg && errors.is_empty(),
        format!(
            "runs identical: doc {} svg {}; golden: doc {} svg {}; schema errors {}; rank-1 candidate index {:?}",
            docs[0] == docs[1],
            svgs[0] == svgs[1],
            docs[0] == golden_doc,
            svgs[0] == golden_svg,
            errors.len(),
            top
        ),
    )
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut trained = Trained { fs: None, isr: None };
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{n:>2}] {name}: {detail}");
    };
    report(1, "CTC oracle equivalence", ctc_oracle());
    report(2, "gradient check", gradient_check());
    report(3, "receptive fields", receptive_fields());
    report(4, "greedy-decode fidelity", greedy_fidelity());
    report(5, "synthetic fingerspelling task", fingerspelling_task(&mut trained));
    report(6, "synthetic ISR task", isr_task(&mut trained));
    report(7, "ranking oracle", ranking_oracle(&trained));
    report(8, "detection discrimination", detection(&trained));
    report(9, "metric unit checks", metric_units());
    report(10, "hermetic end-to-end", hermetic_end_to_end());
    // A failed criterion is a finding, not a broken build: the lines
    // above are the report.
    println!("{}/10 criteria passed", 10 - failed);
}
