mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glossboot::pipeline::{LlmMode, PipelineConfig, ScoreMode};

/// Pseudo-annotation of signed video from English text and pose keypoints.
#[derive(Parser, Debug)]
#[command(name = "glossboot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic corpora and sentence videos.
    Synth(SynthArgs),
    /// Train a toy recognizer on a corpus directory.
    Train(TrainArgs),
    /// Context-free fingerspelling transcript of a pose file.
    Recognize(RecognizeArgs),
    /// Align and score one gloss line against a pose file.
    Align(AlignArgs),
    /// Full pipeline: LLM candidates, alignment, ranking.
    Annotate(AnnotateArgs),
    /// SVG timeline of one ranked candidate.
    RenderTimeline(TimelineArgs),
    /// Metrics of annotation documents against ground truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(subcommand)]
    kind: SynthKind,
}

#[derive(Subcommand, Debug)]
enum SynthKind {
    /// Fingerspelled phrases.
    Fs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = commands::FS_PHRASES)]
        phrases: usize,
        #[arg(long, default_value_t = commands::SIGNERS)]
        signers: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Isolated signs of the toy vocabulary.
    Isr {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = commands::ISR_PER_CLASS)]
        per_class: usize,
        #[arg(long, default_value_t = commands::SIGNERS)]
        signers: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Continuous sentences with transcripts, ground truth and a stub
    /// candidate table.
    Sentences {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Candidates per sentence, the truth included.
        #[arg(long, default_value_t = 10)]
        candidates: usize,
        /// Render this gloss line instead of random sentences.
        #[arg(long)]
        gloss: Option<String>,
        /// English text for --gloss.
        #[arg(long)]
        english: Option<String>,
        /// 1-based slot of the truth in the candidate list.
        #[arg(long)]
        truth_position: Option<usize>,
        #[arg(long, default_value_t = 0)]
        signer: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModelKind {
    Fingerspelling,
    Isr,
}

#[derive(Args, Debug)]
struct TrainArgs {
    kind: ModelKind,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON list of gloss names (isr only); defaults to the corpus labels.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RecognizeArgs {
    #[arg(long)]
    poses: PathBuf,
    /// Directory holding `fingerspelling/` (and `isr/`) model directories.
    #[arg(long)]
    model_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    #[arg(long, default_value = "mean")]
    score_mode: ScoreMode,
    #[arg(long, default_value_t = glossboot::isr::MIN_SIGN_FRAMES)]
    min_sign_frames: usize,
    #[arg(long, default_value = "stub")]
    llm: LlmMode,
    /// Extra stub answers (JSON), merged over the built-in table.
    #[arg(long)]
    stub_table: Option<PathBuf>,
    /// Skip the LLM pass over the fingerspelling transcript.
    #[arg(long)]
    no_correction: bool,
    /// Seed for the stub's generated answers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            threshold: self.threshold,
            score_mode: self.score_mode,
            min_sign_frames: self.min_sign_frames,
            correct_fingerspelling: !self.no_correction,
            llm: self.llm,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    gloss: String,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    /// Pose file of a single video.
    #[arg(long, conflicts_with = "batch", requires = "english")]
    poses: Option<PathBuf>,
    #[arg(long)]
    english: Option<String>,
    /// JSON Lines of {video_id, english}; poses come from --poses-dir.
    #[arg(long, requires = "poses_dir")]
    batch: Option<PathBuf>,
    #[arg(long)]
    poses_dir: Option<PathBuf>,
    #[arg(long)]
    model_dir: PathBuf,
    /// Output file (single video) or directory (batch).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct TimelineArgs {
    #[arg(long)]
    doc: PathBuf,
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Annotation documents, or directories of them.
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    /// JSON Lines of ground-truth records.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Recognize(a) => commands::recognize(a),
        Command::Align(a) => commands::align(a),
        Command::Annotate(a) => commands::annotate(a),
        Command::RenderTimeline(a) => commands::render(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let usage = e.downcast_ref::<commands::UsageError>().is_some();
            eprintln!("error: {e:#}");
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
