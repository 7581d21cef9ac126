use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "signet", version, about = "Writer-independent offline signature verification with a Siamese CNN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic signature corpus.
    GenSynth(GenSynthArgs),
    /// Split writers, build pairs and train a model.
    Train(TrainArgs),
    /// Threshold-sweep evaluation on the held-out writers of a dataset.
    Eval(EvalArgs),
    /// Accuracy matrix of several models over several datasets.
    CrossEval(CrossEvalArgs),
    /// Decide whether two signature images come from the same writer.
    Verify(VerifyArgs),
    /// Export the highest-energy activation maps of a convolution layer.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    /// The published network, 155x220 input.
    Full,
    /// Small network with 32x48 input.
    Tiny,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Full => "full",
            Arch::Tiny => "tiny",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Pairing {
    /// Forgeries of the same writer as negatives.
    Skilled,
    /// Genuine signatures of other training writers as negatives.
    Unskilled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Style {
    /// Few long, slanted strokes with a wide baseline swing.
    Default,
    /// Many short, upright strokes with a fainter, faster tremor.
    Fine,
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Settings file of `key = value` lines; flags on the command line win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Random seed [default: 0; eval defaults to the seed stored in the checkpoint].
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory [default: synth, run, eval, cross-eval or activations].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Network architecture [default: full for train; the checkpoint's own otherwise].
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    /// Worker threads [default: all cores].
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct GenSynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 10)]
    pub writers: usize,
    /// Genuine signatures per writer.
    #[arg(long, default_value_t = 24)]
    pub genuine: usize,
    /// Forged signatures per writer.
    #[arg(long, default_value_t = 30)]
    pub forged: usize,
    #[arg(long, default_value_t = 100)]
    pub height: usize,
    #[arg(long, default_value_t = 150)]
    pub width: usize,
    /// Control-point noise of genuine samples (unit-square units).
    #[arg(long, default_value_t = 0.008)]
    pub genuine_jitter: f64,
    /// Control-point noise of forgeries; must exceed the genuine jitter.
    #[arg(long, default_value_t = 0.03)]
    pub forgery_amplitude: f64,
    #[arg(long, value_enum, default_value_t = Style::Default)]
    pub style: Style,
}

#[derive(Clone, Debug, Args)]
pub struct SplitArgs {
    /// Writers held out for testing, K - M [default: 5; eval defaults to the checkpoint's split].
    #[arg(long, value_name = "N")]
    pub test_writers: Option<usize>,
    /// Writers used for training (M); overrides --test-writers.
    #[arg(long, value_name = "M")]
    pub train_writers: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Dataset root: <writer>/genuine/*.png and <writer>/forged/*.png.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Pairing::Skilled)]
    pub pairing: Pairing,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    /// RMSprop decay rate of the squared-gradient average.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    /// Comma-separated epochs after which the learning rate is multiplied by 0.1, or `none`.
    #[arg(long, default_value = "10", value_name = "LIST")]
    pub lr_decay_epochs: String,
    /// Contrastive loss weight of similar pairs.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Contrastive loss weight of dissimilar pairs.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Contrastive loss margin.
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    /// Architecture as JSON; overrides --arch.
    #[arg(long, value_name = "PATH")]
    pub arch_file: Option<PathBuf>,
    /// Continue a run from one of its checkpoints.
    #[arg(long, value_name = "CHECKPOINT")]
    pub resume: Option<PathBuf>,
    /// Score the held-out pairs after every epoch.
    #[arg(long)]
    pub validate: bool,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Threshold sweep step.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
}

#[derive(Clone, Debug, Args)]
pub struct CrossEvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Comma-separated checkpoints, one matrix row each.
    #[arg(long, value_delimiter = ',', required = true, value_name = "PATHS")]
    pub checkpoints: Vec<PathBuf>,
    /// Comma-separated dataset roots, one matrix column each.
    #[arg(long, value_delimiter = ',', required = true, value_name = "DIRS")]
    pub datasets: Vec<PathBuf>,
    /// Threshold sweep step.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Accept when the embedding distance is at most this value.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: f64,
    pub image_a: PathBuf,
    pub image_b: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Layer index in the architecture [default: last convolution].
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    pub image: PathBuf,
}
