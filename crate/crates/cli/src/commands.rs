use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glossboot::evaluation::{evaluate, read_truth, TruthRecord};
use glossboot::fingerspelling::{recognize as recognize_fs, train_toy, FingerspellingModel, FsTrainConfig};
use glossboot::gloss::{parse_gloss_sequence, render as render_gloss};
use glossboot::isr::{classify, train_toy_isr, IsrModel, IsrTrainConfig, SignVocabulary};
use glossboot::llm::{HttpClient, HttpConfig, LlmClient, StubClient, StubTable};
use glossboot::metrics::corpus_cer;
use glossboot::nn::{EpochLog, SignerSplit};
use glossboot::pipeline::{annotate as run_pipeline, score_manual_annotation, AnnotationDocument, LlmMode, Models};
use glossboot::pose::{read_pose_file, write_pose_jsonl};
use glossboot::synth::{
    fs_corpus, isr_corpus, read_corpus, sentence_case, write_corpus, CorpusLabel, CorpusRecord, World, WORLD_SEED,
};
use glossboot::timeline::render_timeline;
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{AlignArgs, AnnotateArgs, EvalArgs, ModelKind, PipelineArgs, RecognizeArgs, SynthArgs, SynthKind, TimelineArgs, TrainArgs};

// Desk-scale corpus and training sizes.
pub const FS_PHRASES: usize = 500;
pub const ISR_PER_CLASS: usize = 30;
pub const SIGNERS: u32 = 20;
pub const FS_EPOCHS: usize = 80;
pub const ISR_EPOCHS: usize = 30;

pub const FS_DIR: &str = "fingerspelling";
pub const ISR_DIR: &str = "isr";
pub const TRAINING_LOG: &str = "training_log.jsonl";
pub const TRAINING_SUMMARY: &str = "training_summary.json";

/// Bad invocation: missing inputs or inconsistent flags. Exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(usage(format!("{} does not exist", path.display())))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(existing(path)?).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1)))
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let world = World::new(WORLD_SEED);
    match args.kind {
        SynthKind::Fs { out, phrases, signers, seed } => {
            let corpus = fs_corpus(&world, phrases, signers, seed);
            write_corpus(&out, &corpus)?;
            info!("wrote {} fingerspelling clips to {}", corpus.len(), out.display());
        }
        SynthKind::Isr { out, per_class, signers, seed } => {
            let corpus = isr_corpus(&world, per_class, signers, seed);
            write_corpus(&out, &corpus)?;
            info!("wrote {} sign clips to {}", corpus.len(), out.display());
        }
        SynthKind::Sentences { out, count, candidates, gloss, english, truth_position, signer, seed } => {
            if candidates == 0 {
                return Err(usage("--candidates must be at least 1"));
            }
            if english.is_some() && gloss.is_none() {
                return Err(usage("--english needs --gloss"));
            }
            if truth_position.is_some_and(|p| p == 0 || p > candidates) {
                return Err(usage(format!("--truth-position must lie in 1..={candidates}")));
            }
            let fixed = gloss.as_deref().map(parse_gloss_sequence).transpose()?;
            let count = if fixed.is_some() { 1 } else { count };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut transcripts = Vec::new();
            let mut truths = Vec::new();
            let mut table = StubTable::default();
            for i in 0..count {
                let id = format!("sentence-{i:03}");
                let person = world.signer(signer + i as u32);
                let mut case = sentence_case(
                    &world,
                    &person,
                    fixed.clone(),
                    &id,
                    candidates,
                    truth_position.map(|p| p - 1),
                    &mut rng,
                );
                if let Some(e) = &english {
                    case.english = e.clone();
                }
                write_file(&out.join("poses").join(format!("{id}.jsonl")), &write_pose_jsonl(&case.video.poses))?;
                let lines: Vec<String> = case.candidates.iter().map(render_gloss).collect();
                if table.translate.insert(case.english.clone(), lines).is_some() {
                    warn!("{id}: English text {:?} repeats; keeping the later candidates", case.english);
                }
                transcripts.push(Transcript { video_id: id, english: case.english.clone() });
                truths.push(TruthRecord::from_case(&case));
            }
            write_file(&out.join("transcripts.jsonl"), &to_jsonl(&transcripts))?;
            write_file(&out.join("truth.jsonl"), &to_jsonl(&truths))?;
            write_file(&out.join("stub_table.json"), &pretty(&table))?;
            info!("wrote {count} sentence videos to {}", out.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainingSummary<'a> {
    kind: &'a str,
    corpus_clips: usize,
    epochs_run: usize,
    best_epoch: usize,
    stopped_early: bool,
    train_clips: usize,
    val_clips: usize,
    test_clips: usize,
    /// Held-out CER (fingerspelling) or top-1 accuracy (isr).
    test_metric: &'a str,
    test_value: f64,
}

fn write_training_artifacts(dir: &Path, log: &[EpochLog], summary: &TrainingSummary) -> Result<()> {
    let lines: Vec<serde_json::Value> = log
        .iter()
        .map(|e| {
            serde_json::json!({"epoch": e.epoch, "train_loss": e.train_loss, "val_loss": e.val_loss, "lr": e.lr})
        })
        .collect();
    write_file(&dir.join(TRAINING_LOG), &to_jsonl(&lines))?;
    write_file(&dir.join(TRAINING_SUMMARY), &pretty(summary))
}

fn fs_words(r: &CorpusRecord) -> Option<String> {
    match &r.label {
        CorpusLabel::Fingerspelling { words } => Some(words.join(" ")),
        CorpusLabel::Sign { .. } => None,
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    existing(&args.corpus)?;
    if let Some(v) = &args.vocab {
        existing(v)?;
    }
    let corpus = read_corpus(&args.corpus)?;
    if corpus.is_empty() {
        bail!("{} holds no clips", args.corpus.display());
    }
    match args.kind {
        ModelKind::Fingerspelling => {
            if args.vocab.is_some() {
                return Err(usage("--vocab applies to isr training only"));
            }
            if corpus.iter().any(|r| fs_words(r).is_none()) {
                bail!("{} is not a fingerspelling corpus", args.corpus.display());
            }
            let mut config = FsTrainConfig { init_seed: args.seed, ..FsTrainConfig::default() };
            if let Some(c) = args.channels {
                config.channels = c;
            }
            let epochs = args.epochs.unwrap_or(FS_EPOCHS);
            info!("training fingerspelling: {} clips, {epochs} epochs", corpus.len());
            let report = train_toy(&config, &corpus, epochs)?;
            report.model.save(&args.out)?;
            let digest = report.model.fingerprint().weights_sha256;
            let pairs: Vec<(String, String)> = report
                .split
                .test
                .iter()
                .map(|&i| Ok((fs_words(&corpus[i]).expect("checked"), recognize_fs(&report.model, &corpus[i].poses)?)))
                .collect::<Result<_>>()?;
            let cer = corpus_cer(pairs.iter().map(|(t, h)| (t.as_str(), h.as_str())))?;
            info!("held-out CER {:.4}; weights {digest}", cer);
            let summary = summary("fingerspelling", &corpus, &report.outcome, &report.split, "cer", cer);
            write_training_artifacts(&args.out, &report.outcome.log, &summary)
        }
        ModelKind::Isr => {
            let glosses: Vec<String> = match &args.vocab {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("{}: expected a JSON list", path.display()))?
                }
                None => {
                    let mut seen = Vec::new();
                    for r in &corpus {
                        match &r.label {
                            CorpusLabel::Sign { gloss, .. } if !seen.contains(gloss) => seen.push(gloss.clone()),
                            CorpusLabel::Sign { .. } => {}
                            CorpusLabel::Fingerspelling { .. } => {
                                bail!("{} is not an isolated-sign corpus", args.corpus.display())
                            }
                        }
                    }
                    seen
                }
            };
            let vocab = SignVocabulary::new(&glosses)?;
            let mut config = IsrTrainConfig { init_seed: args.seed, ..IsrTrainConfig::default() };
            if let Some(c) = args.channels {
                config.channels = c;
            }
            let epochs = args.epochs.unwrap_or(ISR_EPOCHS);
            info!("training isr: {} clips, {} classes, {epochs} epochs", corpus.len(), vocab.glosses().len());
            let report = train_toy_isr(&config, vocab.clone(), &corpus, epochs)?;
            report.model.save(&args.out)?;
            let digest = report.model.fingerprint().weights_sha256;
            let mut correct = 0;
            for &i in &report.split.test {
                if let CorpusLabel::Sign { gloss, .. } = &corpus[i].label {
                    let predicted = classify(&report.model, &corpus[i].poses)?;
                    correct += usize::from(vocab.lookup(&predicted) == vocab.lookup(gloss));
                }
            }
            let top1 = correct as f64 / report.split.test.len().max(1) as f64;
            info!("held-out top-1 {:.4}; weights {digest}", top1);
            let summary = summary("isr", &corpus, &report.outcome, &report.split, "top1", top1);
            write_training_artifacts(&args.out, &report.outcome.log, &summary)
        }
    }
}

fn summary<'a>(
    kind: &'a str,
    corpus: &[CorpusRecord],
    outcome: &glossboot::nn::TrainOutcome,
    split: &SignerSplit,
    metric: &'a str,
    value: f64,
) -> TrainingSummary<'a> {
    TrainingSummary {
        kind,
        corpus_clips: corpus.len(),
        epochs_run: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        train_clips: split.train.len(),
        val_clips: split.val.len(),
        test_clips: split.test.len(),
        test_metric: metric,
        test_value: value,
    }
}

fn load_models(dir: &Path) -> Result<Models> {
    let fs_dir = dir.join(FS_DIR);
    let isr_dir = dir.join(ISR_DIR);
    existing(&fs_dir)?;
    existing(&isr_dir)?;
    Ok(Models {
        fingerspelling: FingerspellingModel::load(&fs_dir).with_context(|| format!("loading {}", fs_dir.display()))?,
        isr: IsrModel::load(&isr_dir).with_context(|| format!("loading {}", isr_dir.display()))?,
    })
}

pub fn recognize(args: RecognizeArgs) -> Result<()> {
    let poses = read_pose_file(existing(&args.poses)?)?;
    let fs_dir = args.model_dir.join(FS_DIR);
    let model = FingerspellingModel::load(existing(&fs_dir)?)?;
    println!("{}", recognize_fs(&model, &poses)?);
    Ok(())
}

pub fn align(args: AlignArgs) -> Result<()> {
    let poses = read_pose_file(existing(&args.poses)?)?;
    let models = load_models(&args.model_dir)?;
    let seq = parse_gloss_sequence(&args.gloss)?;
    let scored = score_manual_annotation(&seq, &poses, &models, &args.pipeline.config())?;
    let text = pretty(&scored);
    match &args.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Transcript {
    video_id: String,
    english: String,
}

fn llm_client(args: &PipelineArgs) -> Result<Box<dyn LlmClient>> {
    Ok(match args.llm {
        LlmMode::Stub => {
            let mut table = StubTable::builtin();
            if let Some(path) = &args.stub_table {
                table = table.merged(StubTable::load(existing(path)?)?);
            }
            Box::new(StubClient::new(table, args.seed))
        }
        LlmMode::Http => Box::new(HttpClient::new(HttpConfig::from_env().map_err(|e| usage(e.to_string()))?)?),
    })
}

pub fn annotate(args: AnnotateArgs) -> Result<()> {
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let config = args.pipeline.config();
    config.validate().map_err(|e| usage(e.to_string()))?;
    let inputs: Vec<(PathBuf, String, PathBuf)> = match (&args.poses, &args.batch) {
        (Some(poses), None) => {
            let english = args.english.clone().ok_or_else(|| usage("--poses needs --english"))?;
            vec![(existing(poses)?.to_path_buf(), english, args.out.clone())]
        }
        (None, Some(batch)) => {
            let dir = args.poses_dir.as_deref().ok_or_else(|| usage("--batch needs --poses-dir"))?;
            existing(dir)?;
            jsonl::<Transcript>(batch)?
                .into_iter()
                .map(|t| {
                    let poses = dir.join(format!("{}.jsonl", t.video_id));
                    existing(&poses)?;
                    Ok((poses, t.english, args.out.join(format!("{}.json", t.video_id))))
                })
                .collect::<Result<_>>()?
        }
        _ => return Err(usage("give either --poses with --english, or --batch with --poses-dir")),
    };
    let models = load_models(&args.model_dir)?;
    let llm = llm_client(&args.pipeline)?;
    let run = |(poses, english, out): &(PathBuf, String, PathBuf)| -> Result<()> {
        let seq = read_pose_file(poses)?;
        let doc = run_pipeline(english, &seq, &models, llm.as_ref(), &config)
            .with_context(|| format!("annotating {}", poses.display()))?;
        for e in &doc.errors {
            warn!("{}: {e}", doc.video_id);
        }
        write_file(out, &doc.to_json())?;
        info!("{}: {} candidates -> {}", doc.video_id, doc.candidates.len(), out.display());
        Ok(())
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let results: Vec<Result<()>> = pool.install(|| inputs.par_iter().map(run).collect());
    let failed: Vec<String> = results.into_iter().filter_map(|r| r.err()).map(|e| format!("{e:#}")).collect();
    for f in &failed {
        log::error!("{f}");
    }
    if !failed.is_empty() {
        bail!("{} of {} videos failed", failed.len(), inputs.len());
    }
    Ok(())
}

fn read_document(path: &Path) -> Result<AnnotationDocument> {
    let text = fs::read_to_string(existing(path)?).with_context(|| format!("reading {}", path.display()))?;
    AnnotationDocument::from_json(&text).with_context(|| format!("{}", path.display()))
}

pub fn render(args: TimelineArgs) -> Result<()> {
    let doc = read_document(&args.doc)?;
    let svg = render_timeline(&doc, args.rank)?;
    write_file(&args.out, &svg)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let mut paths = Vec::new();
    for p in &args.pred {
        if existing(p)?.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|x| x == "json"));
            found.sort();
            paths.extend(found);
        } else {
            paths.push(p.clone());
        }
    }
    let docs: Vec<AnnotationDocument> = paths.iter().map(|p| read_document(p)).collect::<Result<_>>()?;
    let truth = read_truth(existing(&args.truth)?)?;
    let report = evaluate(&docs, &truth, args.threshold)?;
    print!("{}", report.pretty());
    if let Some(out) = &args.out {
        write_file(out, &pretty(&report))?;
    }
    Ok(())
}
