//! Command-line verbs.

mod dataset;
mod diffusion;
mod evaluate;
mod export;
mod generate;
mod prior;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ereact_core::diffusion::{Architecture, ConditionMode, Sampler};

use crate::config::{Preset, RunConfig};
use crate::error::{CliError, Result};
use crate::export::ExportFormat;

pub use evaluate::{compare_table, report_row, report_table_header};
pub use prior::{ClusterRecord, SweepArm};

#[derive(Debug, Parser)]
#[command(name = "ereact", version, about = "Emotion-driven reaction generation pipeline")]
pub struct Cli {
    /// JSON run configuration overlaid on the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory for the command's artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic interaction dataset.
    Dataset,
    /// Train the emotion encoder and fit the emotion prior.
    TrainPrior(TrainPriorArgs),
    /// Train the reaction denoiser.
    TrainDiffusion(TrainDiffusionArgs),
    /// Generate a reaction for one actor motion.
    Generate(GenerateArgs),
    /// Score generated reactions, compare reports or check prior clusters.
    Evaluate(EvaluateArgs),
    /// Convert a motion file to BVH or JSON.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct TrainPriorArgs {
    /// Output directory of `dataset`.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    /// Train on labeled data only.
    #[arg(long, conflicts_with = "unlabeled_count")]
    pub supervised_only: bool,
    /// Unlabeled sequences to use; a comma list runs one arm per count.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub unlabeled_count: Vec<usize>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    OneHot,
    Centroid,
    Sampled,
}

impl From<ConditionArg> for ConditionMode {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::OneHot => ConditionMode::OneHot,
            ConditionArg::Centroid => ConditionMode::Centroid,
            ConditionArg::Sampled => ConditionMode::Sampled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchitectureArg {
    SymmetricFixed,
    Asymmetric,
    NonFixed,
}

impl From<ArchitectureArg> for Architecture {
    fn from(a: ArchitectureArg) -> Self {
        match a {
            ArchitectureArg::SymmetricFixed => Architecture::Symmetric,
            ArchitectureArg::Asymmetric => Architecture::Asymmetric,
            ArchitectureArg::NonFixed => Architecture::NonFixed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainDiffusionArgs {
    /// Output directory of `dataset`.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    /// Output directory of `train-prior`.
    #[arg(long, value_name = "DIR")]
    pub prior: PathBuf,
    /// Overrides the configured condition mode.
    #[arg(long, value_enum)]
    pub condition: Option<ConditionArg>,
    /// Overrides the configured architecture.
    #[arg(long, value_enum)]
    pub architecture: Option<ArchitectureArg>,
    /// Overrides the configured optimiser step count.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Ddim,
    Ddpm,
}

/// Sampler selection shared by `generate` and `evaluate`.
#[derive(Debug, Args)]
pub struct SamplerArgs {
    /// Overrides the configured sampler.
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    /// DDIM step count.
    #[arg(long)]
    pub steps: Option<usize>,
}

impl SamplerArgs {
    fn resolve(&self, default: Sampler) -> Result<Sampler> {
        let default_steps = match default {
            Sampler::Ddim { steps } => steps,
            Sampler::Ddpm => ereact_core::diffusion::DEFAULT_DDIM_STEPS,
        };
        match (self.sampler, self.steps) {
            (None, None) => Ok(default),
            (Some(SamplerArg::Ddpm), Some(_)) => Err(CliError::Usage("--steps applies only to the DDIM sampler".into())),
            (Some(SamplerArg::Ddpm), None) => Ok(Sampler::Ddpm),
            (Some(SamplerArg::Ddim), steps) => Ok(Sampler::Ddim { steps: steps.unwrap_or(default_steps) }),
            (None, Some(steps)) => match default {
                Sampler::Ddpm => Err(CliError::Usage("--steps applies only to the DDIM sampler".into())),
                Sampler::Ddim { .. } => Ok(Sampler::Ddim { steps }),
            },
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("condition").required(true).args(["emotion", "empathetic", "unconditional"]))]
pub struct GenerateArgs {
    /// Output directory of `train-prior`.
    #[arg(long, value_name = "DIR")]
    pub prior: PathBuf,
    /// Output directory of `train-diffusion`.
    #[arg(long, value_name = "DIR")]
    pub diffusion: PathBuf,
    /// Actor motion file (.emo).
    #[arg(long, value_name = "PATH")]
    pub actor: PathBuf,
    /// Target emotion of the reaction.
    #[arg(long)]
    pub emotion: Option<String>,
    /// Condition on the emotion read from the actor.
    #[arg(long)]
    pub empathetic: bool,
    /// Generate without an emotion token.
    #[arg(long)]
    pub unconditional: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Also write the actor and reactor in this format.
    #[arg(long, value_enum)]
    pub export: Option<ExportFormat>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output directory of `dataset`.
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Output directory of `train-prior`.
    #[arg(long, value_name = "DIR")]
    pub prior: Option<PathBuf>,
    /// Output directory of `train-diffusion`.
    #[arg(long, value_name = "DIR")]
    pub diffusion: Option<PathBuf>,
    /// Score the ground-truth eval reactors instead of generated ones.
    #[arg(long)]
    pub ground_truth: bool,
    /// Print a side-by-side table of two reports.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with_all = ["ground_truth", "cluster_agreement"])]
    pub compare: Option<Vec<PathBuf>>,
    /// Score the prior's k-means clusters against the withheld labels.
    #[arg(long)]
    pub cluster_agreement: bool,
    /// Use only the first N eval actors.
    #[arg(long)]
    pub max_actors: Option<usize>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Motion file (.emo).
    #[arg(long, value_name = "PATH")]
    pub motion: PathBuf,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: ExportFormat,
    /// Dataset whose skeleton and frame rate the motion uses; the built-in
    /// humanoid at the desk frame rate otherwise.
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Skeleton JSON file; overrides the dataset skeleton.
    #[arg(long, value_name = "PATH")]
    pub skeleton: Option<PathBuf>,
    /// Frame rate; overrides the dataset frame rate.
    #[arg(long)]
    pub fps: Option<f64>,
}

/// Shared state of one invocation.
pub(crate) struct Session {
    pub config: RunConfig,
    pub out: Option<PathBuf>,
}

impl Session {
    /// The output directory, created if needed. Its parent must exist.
    pub fn out_dir(&self) -> Result<&Path> {
        let out = self
            .out
            .as_deref()
            .ok_or_else(|| CliError::Usage("this command needs --out <DIR>".into()))?;
        create_out_dir(out)?;
        Ok(out)
    }
}

pub(crate) fn create_out_dir(out: &Path) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(CliError::Missing(parent.to_path_buf()));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

pub(crate) fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serialises");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::resolve(cli.preset, cli.config.as_deref(), cli.seed)?;
    let session = Session { config, out: cli.out };
    match cli.command {
        Command::Dataset => dataset::run(&session),
        Command::TrainPrior(args) => prior::run(&session, &args),
        Command::TrainDiffusion(args) => diffusion::run(&session, &args),
        Command::Generate(args) => generate::run(&session, &args),
        Command::Evaluate(args) => evaluate::run(&session, &args),
        Command::Export(args) => export::run(&session, &args),
    }
}
