//! Run configuration: command-line flags override values from an optional
//! TOML config file, which override built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cadex::eval::BaselineLabels;
use clap::{Args, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineChoice {
    Model,
    Truth,
}

/// Flags shared by every subcommand. Everything is optional here so that a
/// config file can fill the gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Model file for `train`, output directory otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of rows used for training.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub train_lr: Option<f64>,
    /// Desired class index (0 = first class in the schema's label list).
    #[arg(long)]
    pub target: Option<usize>,
    /// Comma-separated list; `explain` uses the first value.
    #[arg(long, value_delimiter = ',')]
    pub n_change: Option<Vec<usize>>,
    #[arg(long)]
    pub n_skip: Option<usize>,
    #[arg(long)]
    pub t_flip: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Adam step size of the counterfactual search.
    #[arg(long)]
    pub search_lr: Option<f64>,
    #[arg(long)]
    pub alternatives: Option<usize>,
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long, value_enum)]
    pub baseline_labels: Option<BaselineChoice>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    schema: Option<PathBuf>,
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    train_fraction: Option<f64>,
    hidden: Option<usize>,
    epochs: Option<usize>,
    patience: Option<usize>,
    train_lr: Option<f64>,
    target: Option<usize>,
    n_change: Option<Vec<usize>>,
    n_skip: Option<usize>,
    t_flip: Option<f64>,
    max_epochs: Option<usize>,
    search_lr: Option<f64>,
    alternatives: Option<usize>,
    split: Option<SplitChoice>,
    jobs: Option<usize>,
    repeats: Option<usize>,
    trees: Option<usize>,
    baseline_labels: Option<BaselineChoice>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub train_fraction: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub patience: usize,
    pub train_lr: f64,
    pub target: usize,
    pub n_change: Option<Vec<usize>>,
    pub n_skip: usize,
    pub t_flip: f64,
    pub max_epochs: usize,
    pub search_lr: f64,
    pub alternatives: Option<usize>,
    pub split: SplitChoice,
    pub jobs: Option<usize>,
    pub repeats: usize,
    pub trees: usize,
    pub baseline_labels: BaselineLabels,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> anyhow::Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                toml::from_str::<FileConfig>(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let a = args.clone();
        let cfg = RunConfig {
            schema: a.schema.or(file.schema),
            data: a.data.or(file.data),
            model: a.model.or(file.model),
            out: a.out.or(file.out),
            seed: a.seed.or(file.seed).unwrap_or(42),
            train_fraction: a.train_fraction.or(file.train_fraction).unwrap_or(0.8),
            hidden: a.hidden.or(file.hidden).unwrap_or(15),
            epochs: a.epochs.or(file.epochs).unwrap_or(500),
            patience: a.patience.or(file.patience).unwrap_or(10),
            train_lr: a.train_lr.or(file.train_lr).unwrap_or(1e-3),
            target: a.target.or(file.target).unwrap_or(0),
            n_change: a.n_change.or(file.n_change),
            n_skip: a.n_skip.or(file.n_skip).unwrap_or(0),
            t_flip: a.t_flip.or(file.t_flip).unwrap_or(0.2),
            max_epochs: a.max_epochs.or(file.max_epochs).unwrap_or(1000),
            search_lr: a.search_lr.or(file.search_lr).unwrap_or(0.05),
            alternatives: a.alternatives.or(file.alternatives),
            split: a.split.or(file.split).unwrap_or(SplitChoice::Validation),
            jobs: a.jobs.or(file.jobs),
            repeats: a.repeats.or(file.repeats).unwrap_or(10),
            trees: a.trees.or(file.trees).unwrap_or(100),
            baseline_labels: match a.baseline_labels.or(file.baseline_labels) {
                Some(BaselineChoice::Truth) => BaselineLabels::GroundTruth,
                _ => BaselineLabels::Model,
            },
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> anyhow::Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!("--train-fraction must lie in (0, 1)");
        }
        if !(self.t_flip > 0.0 && self.t_flip < 1.0) {
            bail!("--t-flip must lie in (0, 1)");
        }
        if self.target > 1 {
            bail!("--target must be 0 or 1");
        }
        if self
            .n_change
            .as_ref()
            .is_some_and(|v| v.is_empty() || v.contains(&0))
        {
            bail!("--n-change values must be >= 1");
        }
        if self.hidden == 0 {
            bail!("--hidden must be >= 1");
        }
        if self.search_lr <= 0.0 || self.train_lr <= 0.0 {
            bail!("learning rates must be positive");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be >= 1");
        }
        if self.alternatives == Some(0) {
            bail!("--alternatives must be >= 1");
        }
        if self.repeats == 0 || self.trees == 0 {
            bail!("--repeats and --trees must be >= 1");
        }
        Ok(())
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
        match path {
            Some(p) => Ok(p.as_path()),
            None => bail!("missing required --{flag}"),
        }
    }
}
