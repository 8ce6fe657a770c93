mod config;
mod output;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use cadex::data::{Encoder, Scaler};
use cadex::eval::{evaluate, EvalSettings};
use cadex::persist::{load_model, save_model, SavedModel};
use cadex::{
    find_counterfactual, init_network, load_dataset, load_schema, train, AdamParams, Dataset,
    EncodedSample, Schema, SearchConfig, SearchError, SearchOutcome, TrainConfig,
};
use clap::{Parser, Subcommand};

use crate::config::{RunArgs, RunConfig, SplitChoice};
use crate::output::write_atomic;

#[derive(Parser)]
#[command(
    name = "cadex",
    version,
    about = "Constrained counterfactual explanations for tabular classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the classifier and write a model file plus a training report.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Search counterfactual explanations for one sample.
    Explain {
        #[command(flatten)]
        run: RunArgs,
        /// Zero-based row number in the --data file.
        #[arg(long, conflicts_with = "record")]
        row: Option<usize>,
        /// Raw attribute fields in schema order, delimited like the data file.
        #[arg(long)]
        record: Option<String>,
    },
    /// Reproduce the aggregate evaluation and write CSV reports.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Failure classes with their process exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
    AlreadyTarget,
    NoExplanations,
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::AlreadyTarget => 4,
            Failure::NoExplanations => 5,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { run } => resolve(&run).and_then(|c| cmd_train(&c)),
        Command::Explain { run, row, record } => {
            resolve(&run).and_then(|c| cmd_explain(&c, row, record.as_deref()))
        }
        Command::Evaluate { run } => resolve(&run).and_then(|c| cmd_evaluate(&c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) | Failure::Data(e) => eprintln!("error: {e:#}"),
                Failure::AlreadyTarget => {
                    eprintln!("error: sample is already classified as target")
                }
                Failure::NoExplanations => eprintln!("error: no explanation found"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

fn resolve(run: &RunArgs) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::resolve(run).map_err(Failure::Config)?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    Ok(cfg)
}

fn required<'a>(
    cfg: &RunConfig,
    path: &'a Option<PathBuf>,
    flag: &str,
) -> Result<&'a Path, Failure> {
    cfg.require(path, flag).map_err(Failure::Config)
}

fn read_schema(cfg: &RunConfig) -> Result<Arc<Schema>, Failure> {
    let path = required(cfg, &cfg.schema, "schema")?;
    Ok(Arc::new(load_schema(path).with_context(|| {
        format!("loading schema {}", path.display())
    })?))
}

fn read_data(cfg: &RunConfig, schema: Arc<Schema>) -> Result<Dataset, Failure> {
    let path = required(cfg, &cfg.data, "data")?;
    Ok(load_dataset(path, schema).with_context(|| format!("loading data {}", path.display()))?)
}

fn read_model(cfg: &RunConfig, schema: &Schema) -> Result<SavedModel, Failure> {
    let path = required(cfg, &cfg.model, "model")?;
    let file = File::open(path).with_context(|| format!("cannot open model {}", path.display()))?;
    let model = load_model(&mut BufReader::new(file))
        .with_context(|| format!("reading model {}", path.display()))?;
    if model.network.input_width() != schema.width() {
        return Err(Failure::Data(anyhow!(
            "model expects {} inputs but the schema encodes {} columns",
            model.network.input_width(),
            schema.width()
        )));
    }
    Ok(model)
}

fn search_config(cfg: &RunConfig, schema: &Schema, n_change: usize) -> SearchConfig {
    SearchConfig {
        target: cfg.target,
        max_epochs: cfg.max_epochs,
        n_change,
        n_skip: cfg.n_skip,
        t_flip: cfg.t_flip,
        direction: schema.expand_direction(),
        adam: AdamParams::with_learning_rate(cfg.search_lr),
    }
}

fn cmd_train(cfg: &RunConfig) -> CmdResult {
    let out = required(cfg, &cfg.out, "out")?;
    let schema = read_schema(cfg)?;
    let data = read_data(cfg, schema)?;
    let (train_set, val_set) = data
        .split(cfg.train_fraction, cfg.seed)
        .map_err(|e| Failure::Config(e.into()))?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Failure::Data(anyhow!(
            "split left an empty training or validation set"
        )));
    }
    let mut net = init_network(train_set.width(), cfg.hidden, cfg.seed)
        .map_err(|e| Failure::Config(e.into()))?;
    let train_cfg = TrainConfig {
        adam: AdamParams::with_learning_rate(cfg.train_lr),
        max_epochs: cfg.epochs,
        patience: cfg.patience,
    };
    let report = train(&mut net, &train_set, &val_set, &train_cfg).context("training")?;

    let mut bytes = Vec::new();
    save_model(&mut bytes, &net, &train_set.encoder.scaler).context("serializing model")?;
    write_atomic(out, &bytes)?;

    let train_acc = net.accuracy(&train_set);
    let summary = format!(
        "epochs run: {}\nbest epoch: {}\ntrain loss: {:.6}\nvalidation loss: {:.6}\ntrain accuracy: {:.4}\nvalidation accuracy: {:.4}\nvalidation majority rate: {:.4}\n",
        report.epochs,
        report.best_epoch,
        report.train_loss,
        report.val_loss,
        train_acc,
        report.val_accuracy,
        val_set.majority_rate(),
    );
    write_atomic(&out.with_extension("report.txt"), summary.as_bytes())?;
    write_atomic(
        &out.with_extension("report.csv"),
        &output::train_report_csv(&report, train_acc)?,
    )?;
    print!("{summary}");
    println!("model written to {}", out.display());
    Ok(())
}

fn cmd_explain(cfg: &RunConfig, row: Option<usize>, record: Option<&str>) -> CmdResult {
    let schema = read_schema(cfg)?;
    let model = read_model(cfg, &schema)?;
    let encoder = Encoder::new(schema.clone(), model.scaler.clone());

    let (sample_id, x): (usize, EncodedSample) = match (row, record) {
        (Some(row), _) => {
            // Unscaled rows; apply the model's standardization.
            let raw = read_data(cfg, schema.clone())?;
            let pos = raw.ids.iter().position(|&id| id == row).ok_or_else(|| {
                Failure::Config(anyhow!("row {row} out of range ({} rows)", raw.len()))
            })?;
            let mut x = raw.samples[pos].clone();
            encoder.scaler.apply(&mut x);
            (row, x)
        }
        (None, Some(text)) => {
            let fields: Vec<&str> = match schema.delimiter() {
                cadex::data::Delimiter::Whitespace => text.split_whitespace().collect(),
                cadex::data::Delimiter::Comma => text.split(',').map(str::trim).collect(),
            };
            let rec = schema
                .parse_record(&fields)
                .map_err(|e| Failure::Data(anyhow!("--record: {e}")))?;
            (
                0,
                encoder.encode(&rec).map_err(|e| Failure::Data(e.into()))?,
            )
        }
        (None, None) => return Err(Failure::Config(anyhow!("give either --row or --record"))),
    };

    let n_change = cfg.n_change.as_ref().map_or(5, |v| v[0]);
    let base = search_config(cfg, &schema, n_change);
    let alternatives = cfg.alternatives.unwrap_or(1);
    let target_name = &schema.label().classes[cfg.target].name;

    let mut found = Vec::new();
    for n_skip in cfg.n_skip..cfg.n_skip + alternatives {
        let config = SearchConfig {
            n_skip,
            ..base.clone()
        };
        match find_counterfactual(&model.network, &encoder, &x, &config) {
            Ok(SearchOutcome::Found(e)) => found.push(e),
            Ok(SearchOutcome::NotFound { epochs }) => {
                println!("n_skip {n_skip}: no counterfactual within {epochs} epochs")
            }
            Err(SearchError::AlreadyTarget) => return Err(Failure::AlreadyTarget),
            Err(SearchError::NoDescentDirection) => {
                println!("n_skip {n_skip}: no column can move in an allowed direction")
            }
            Err(SearchError::InvalidConfig(m)) => return Err(Failure::Config(anyhow!(m))),
            Err(e) => return Err(Failure::Data(e.into())),
        }
    }
    if found.is_empty() {
        return Err(Failure::NoExplanations);
    }

    let original = encoder.decode(&x).map_err(|e| Failure::Data(e.into()))?;
    let original: Vec<(String, String)> = schema
        .attributes()
        .iter()
        .enumerate()
        .map(|(i, a)| (a.name.clone(), schema.display_value(i, &original.0[i])))
        .collect();
    println!(
        "sample {sample_id}: {} explanation(s) reaching class {target_name:?}\n",
        found.len()
    );
    let refs: Vec<_> = found.iter().collect();
    print!("{}", output::diff_table(&original, &refs));

    let csv = output::explanations_csv(found.iter().map(|e| (sample_id, e)))?;
    match &cfg.out {
        Some(dir) => {
            let path = dir.join("explanations.csv");
            write_atomic(&path, &csv)?;
            println!("\nexplanations written to {}", path.display());
        }
        None => print!("\n{}", String::from_utf8_lossy(&csv)),
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> CmdResult {
    let out = required(cfg, &cfg.out, "out")?.to_path_buf();
    let schema = read_schema(cfg)?;
    let model = read_model(cfg, &schema)?;
    let data = read_data(cfg, schema.clone())?;
    let (train_set, val_set) = data
        .split(cfg.train_fraction, cfg.seed)
        .map_err(|e| Failure::Config(e.into()))?;
    if !same_scaler(&train_set.encoder.scaler, &model.scaler) {
        return Err(Failure::Config(anyhow!(
            "the model was trained on a different split; use the same --seed and --train-fraction as `train`"
        )));
    }
    let (population, split_name) = match cfg.split {
        SplitChoice::Train => (&train_set, "train"),
        SplitChoice::Validation => (&val_set, "validation"),
    };
    if population.is_empty() {
        return Err(Failure::Data(anyhow!("the {split_name} split is empty")));
    }

    let n_changes = cfg.n_change.clone().unwrap_or_else(|| vec![5, 7, 10]);
    let mut settings = EvalSettings::new(search_config(cfg, &schema, n_changes[0]));
    settings.n_changes = n_changes;
    settings.n_alternatives = cfg.alternatives.unwrap_or(10);
    settings.baseline_labels = cfg.baseline_labels;
    settings.n_trees = cfg.trees;
    settings.repeats = cfg.repeats;
    settings.seed = cfg.seed;

    let report =
        evaluate(&model.network, &train_set, population, &settings).context("evaluation")?;

    write_atomic(
        &out.join("solutions_histogram.csv"),
        &output::histogram_csv(&report)?,
    )?;
    write_atomic(&out.join("distance_cdf.csv"), &output::cdf_csv(&report)?)?;
    write_atomic(
        &out.join("distance_quantiles.csv"),
        &output::quantiles_csv(&report)?,
    )?;
    write_atomic(
        &out.join("transferability.csv"),
        &output::transfer_csv(&report)?,
    )?;
    let rows = report
        .population
        .iter()
        .zip(&report.explanations)
        .flat_map(|(&i, exps)| exps.iter().map(move |e| (population.ids[i], e)));
    write_atomic(
        &out.join("explanations.csv"),
        &output::explanations_csv(rows)?,
    )?;
    let summary = output::eval_summary(&report, split_name);
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    println!("reports written to {}", out.display());
    Ok(())
}

fn same_scaler(a: &Scaler, b: &Scaler) -> bool {
    a.mean.len() == b.mean.len()
        && a.mean
            .iter()
            .zip(&b.mean)
            .all(|(x, y)| x.to_bits() == y.to_bits())
        && a.std
            .iter()
            .zip(&b.std)
            .all(|(x, y)| x.to_bits() == y.to_bits())
}
