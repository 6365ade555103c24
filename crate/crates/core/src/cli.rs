//! Command-line entry point.
//!
//! Subcommands: `gen` (write a synthetic dataset), `mfcc` (extract an MFCC
//! matrix from a WAV file), `eval`, `crosspred`, `ablate`, `comorbid`,
//! `contrib`, and `report` (everything bundled). Every artifact lands under
//! the output directory next to a run manifest recording the resolved
//! configuration, its hash, and the seed, which is enough to re-execute the
//! run. Runs are deterministic: repeating a command with the same seed
//! produces byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{ablation, comorbidity, contribution, cross_prediction, ComorbidityMode};
use crate::crossmodal::SoftmaxSign;
use crate::dataset::{
    generate_synthetic, load_manifest, write_dataset, Dataset, GeneratorConfig, TaskId,
};
use crate::error::{Error, Result};
use crate::eval::CmOrder;
use crate::features::{mfcc, read_wav, standardize_duration, MfccConfig};
use crate::pipeline::{cross_validate_fused, fuse_dataset, FusedDataset, PipelineConfig};
use crate::trainer::{ClassWeighting, OptimizerKind};

/// Where the records come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Manifest { path: String },
    Generator { config: GeneratorConfig },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Generator { config: GeneratorConfig::default() }
    }
}

/// Resolved configuration of one run. The output directory is deliberately
/// not part of it, so the hash is location-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    /// Empty means all twelve tasks.
    pub tasks: Vec<TaskId>,
    pub pipeline: PipelineConfig,
    pub comorbidity_mode: ComorbidityMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::default(),
            tasks: Vec::new(),
            pipeline: PipelineConfig::default(),
            comorbidity_mode: ComorbidityMode::default(),
        }
    }
}

impl RunConfig {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn selected_tasks(&self) -> Vec<TaskId> {
        if self.tasks.is_empty() {
            TaskId::ALL.to_vec()
        } else {
            self.tasks.clone()
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mmscreen", version, about = "Multimodal screening pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as a manifest directory
    Gen(GenArgs),
    /// Extract an MFCC matrix from a 16 kHz mono WAV file
    Mfcc(MfccArgs),
    /// Cross-validated evaluation for the selected tasks
    Eval(RunArgs),
    /// Accuracy matrix of task-trained models scored against every task
    Crosspred(RunArgs),
    /// Remove each fusion input in turn and report the paired deltas
    Ablate(RunArgs),
    /// Pairwise label co-occurrence over the disorder tasks
    Comorbid(RunArgs),
    /// Contribution ratios of the fusion inputs from trained models
    Contrib(RunArgs),
    /// Run evaluation and every analysis, bundling all outputs
    Report(RunArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the generated record count
    #[arg(long)]
    n: Option<usize>,
    /// Generator configuration JSON
    #[arg(long)]
    gen_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MfccArgs {
    /// Input WAV file (RIFF PCM, 16-bit, mono, 16 kHz)
    wav: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration JSON (CLI flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ingest a dataset from this manifest
    #[arg(long, conflicts_with_all = ["gen_default", "gen_config"])]
    manifest: Option<PathBuf>,
    /// Use the default synthetic generator
    #[arg(long)]
    gen_default: bool,
    /// Generator configuration JSON
    #[arg(long, conflicts_with = "gen_default")]
    gen_config: Option<PathBuf>,
    /// Task name, repeatable; `all` selects every task
    #[arg(long)]
    task: Vec<String>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Number of folds
    #[arg(long)]
    k: Option<usize>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Optimizer: sgd or adam
    #[arg(long)]
    optimizer: Option<String>,
    /// Class weighting: none or inverse_frequency
    #[arg(long)]
    class_weighting: Option<String>,
    /// Attention softmax sign: negative or positive
    #[arg(long)]
    softmax_sign: Option<String>,
    /// Confusion normalization: normalize-then-average or average-then-normalize
    #[arg(long)]
    cm_order: Option<String>,
    /// Comorbidity mode: conditional or jaccard
    #[arg(long)]
    comorbidity_mode: Option<String>,
    /// Concurrent fold workers (default: available parallelism)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write per-fold model checkpoints
    #[arg(long)]
    save_models: bool,
}

/// Parse argv, execute, and map errors to exit codes: 0 success, 1 usage
/// error, 2 data/config error, 3 runtime failure.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let line = e
                .to_string()
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .to_string();
            eprintln!("{line}");
            return 1;
        }
    };
    match execute(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } | Error::Schema(_) | Error::Data(_) | Error::Config(_) => 2,
                Error::Io(_) | Error::Numeric(_) => 3,
            }
        }
    }
}

fn execute(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::Gen(args) => run_gen(args, argv),
        Command::Mfcc(args) => run_mfcc(args, argv),
        Command::Eval(args) => run_analysis(args, argv, Step::Eval),
        Command::Crosspred(args) => run_analysis(args, argv, Step::Crosspred),
        Command::Ablate(args) => run_analysis(args, argv, Step::Ablate),
        Command::Comorbid(args) => run_analysis(args, argv, Step::Comorbid),
        Command::Contrib(args) => run_analysis(args, argv, Step::Contrib),
        Command::Report(args) => run_analysis(args, argv, Step::Report),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Eval,
    Crosspred,
    Ablate,
    Comorbid,
    Contrib,
    Report,
}

/// Collects artifacts under the output directory with relative paths.
struct OutputDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl OutputDir {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), artifacts: Vec::new() })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }

    fn finish(mut self, command: &[String], config: &RunConfig, workers: usize) -> Result<()> {
        #[derive(Serialize)]
        struct RunManifest<'a> {
            command: &'a [String],
            config: &'a RunConfig,
            config_hash: String,
            seed: u64,
            workers: usize,
            artifacts: &'a [String],
        }
        self.artifacts.sort();
        let manifest = RunManifest {
            command,
            config,
            config_hash: config.hash(),
            seed: config.pipeline.seed,
            workers,
            artifacts: &self.artifacts,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(self.root.join("run_manifest.json"), json + "\n")?;
        Ok(())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_variant<T: serde::de::DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::Config(format!("invalid value `{value}` for --{flag}")))
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config: RunConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => RunConfig::default(),
    };

    if let Some(path) = &args.manifest {
        config.dataset = DatasetSource::Manifest { path: path.display().to_string() };
    } else if let Some(path) = &args.gen_config {
        let gen: GeneratorConfig = read_json(path)?;
        gen.validate()?;
        config.dataset = DatasetSource::Generator { config: gen };
    } else if args.gen_default {
        config.dataset = DatasetSource::Generator { config: GeneratorConfig::default() };
    }

    if !args.task.is_empty() {
        if args.task.iter().any(|t| t == "all") {
            config.tasks = Vec::new();
        } else {
            config.tasks = args
                .task
                .iter()
                .map(|t| TaskId::parse(t))
                .collect::<Result<_>>()?;
        }
    }
    if let Some(seed) = args.seed {
        config.pipeline.seed = seed;
    }
    if let Some(k) = args.k {
        config.pipeline.k = k;
    }
    if let Some(epochs) = args.epochs {
        config.pipeline.train.epochs = epochs;
    }
    if let Some(lr) = args.lr {
        config.pipeline.train.learning_rate = lr;
    }
    if let Some(opt) = &args.optimizer {
        config.pipeline.train.optimizer = parse_variant::<OptimizerKind>("optimizer", opt)?;
    }
    if let Some(w) = &args.class_weighting {
        config.pipeline.train.class_weighting =
            parse_variant::<ClassWeighting>("class-weighting", w)?;
    }
    if let Some(sign) = &args.softmax_sign {
        config.pipeline.softmax_sign = parse_variant::<SoftmaxSign>("softmax-sign", sign)?;
    }
    if let Some(order) = &args.cm_order {
        config.pipeline.cm_order = parse_variant::<CmOrder>("cm-order", order)?;
    }
    if let Some(mode) = &args.comorbidity_mode {
        config.comorbidity_mode = parse_variant::<ComorbidityMode>("comorbidity-mode", mode)?;
    }
    config.pipeline.workers = args.workers.unwrap_or_else(default_workers);
    config.pipeline.validate()?;
    Ok(config)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load_dataset(source: &DatasetSource, seed: u64) -> Result<Dataset> {
    match source {
        DatasetSource::Manifest { path } => load_manifest(Path::new(path)),
        DatasetSource::Generator { config } => generate_synthetic(config, seed),
    }
}

fn run_gen(args: GenArgs, argv: &[String]) -> Result<()> {
    let mut gen = match &args.gen_config {
        Some(path) => read_json::<GeneratorConfig>(path)?,
        None => GeneratorConfig::default(),
    };
    if let Some(n) = args.n {
        gen.n_records = n;
    }
    gen.validate()?;
    let dataset = generate_synthetic(&gen, args.seed)?;

    let mut out = OutputDir::new(&args.out)?;
    write_dataset(&dataset, &out.root.join("dataset"))?;
    out.artifacts.push("dataset/manifest.json".to_string());
    eprintln!(
        "wrote {} records to {}",
        dataset.len(),
        out.root.join("dataset").display()
    );

    let config = RunConfig {
        dataset: DatasetSource::Generator { config: gen },
        pipeline: PipelineConfig { seed: args.seed, ..PipelineConfig::default() },
        ..RunConfig::default()
    };
    out.finish(argv, &config, 1)
}

fn run_mfcc(args: MfccArgs, argv: &[String]) -> Result<()> {
    let cfg = MfccConfig::default();
    let samples = read_wav(&args.wav)?;
    let samples = standardize_duration(&samples, cfg.target_samples());
    let matrix = mfcc(&samples, &cfg)?;

    let mut csv = (0..cfg.n_kept_coeffs)
        .map(|d| format!("f{d}"))
        .collect::<Vec<_>>()
        .join(",");
    csv.push('\n');
    for row in &matrix {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }

    let mut out = OutputDir::new(&args.out)?;
    out.write("mfcc.csv", &csv)?;
    eprintln!("wrote {} frames x {} coefficients", matrix.len(), cfg.n_kept_coeffs);
    out.finish(argv, &RunConfig::default(), 1)
}

fn run_analysis(args: RunArgs, argv: &[String], step: Step) -> Result<()> {
    let config = resolve_config(&args)?;
    let dataset = load_dataset(&config.dataset, config.pipeline.seed)?;
    let fused = fuse_dataset(&dataset);
    let tasks = config.selected_tasks();
    let mut out = OutputDir::new(&args.out)?;

    if matches!(step, Step::Eval | Step::Report) {
        step_eval(&mut out, &fused, &tasks, &config, args.save_models)?;
    }
    if matches!(step, Step::Contrib) {
        step_contrib(&mut out, &fused, &tasks, &config)?;
    }
    if matches!(step, Step::Crosspred | Step::Report) {
        step_crosspred(&mut out, &fused, &tasks, &config)?;
    }
    if matches!(step, Step::Ablate | Step::Report) {
        step_ablate(&mut out, &fused, &tasks, &config)?;
    }
    if matches!(step, Step::Comorbid | Step::Report) {
        step_comorbid(&mut out, &dataset, &config)?;
    }

    out.finish(argv, &config, config.pipeline.workers)
}

fn write_json<T: Serialize>(out: &mut OutputDir, rel: &str, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("artifact serializes");
    out.write(rel, &(json + "\n"))
}

fn step_eval(
    out: &mut OutputDir,
    fused: &FusedDataset,
    tasks: &[TaskId],
    config: &RunConfig,
    save_models: bool,
) -> Result<()> {
    for &task in tasks {
        eprintln!("eval: {task}");
        let outcome = cross_validate_fused(fused, task, &config.pipeline)?;
        out.write(&format!("eval_{task}.csv"), &outcome.report.to_table_csv())?;
        write_json(out, &format!("eval_{task}.json"), &outcome.report)?;

        for fold in &outcome.run.folds {
            let mut history = String::from("epoch,loss\n");
            for (epoch, loss) in fold.history.epoch_loss.iter().enumerate() {
                history.push_str(&format!("{epoch},{loss}\n"));
            }
            out.write(&format!("history/{task}/fold{}.csv", fold.fold_index), &history)?;
            if save_models {
                out.write(
                    &format!("models/{task}/fold{}.json", fold.fold_index),
                    &(fold.model.to_json() + "\n"),
                )?;
            }
        }

        // Contribution ratios reuse the trained models from this run.
        let report = contribution(&outcome.run)?;
        out.write(&format!("contribution_{task}.csv"), &report.to_csv())?;
        write_json(out, &format!("contribution_{task}.json"), &report)?;
    }
    Ok(())
}

fn step_contrib(
    out: &mut OutputDir,
    fused: &FusedDataset,
    tasks: &[TaskId],
    config: &RunConfig,
) -> Result<()> {
    for &task in tasks {
        eprintln!("contrib: {task}");
        let run = crate::pipeline::run_cv(fused, task, &config.pipeline)?;
        let report = contribution(&run)?;
        out.write(&format!("contribution_{task}.csv"), &report.to_csv())?;
        write_json(out, &format!("contribution_{task}.json"), &report)?;
    }
    Ok(())
}

fn step_crosspred(
    out: &mut OutputDir,
    fused: &FusedDataset,
    tasks: &[TaskId],
    config: &RunConfig,
) -> Result<()> {
    eprintln!("crosspred: {} train tasks", tasks.len());
    let matrix = cross_prediction(fused, &config.pipeline, tasks)?;
    out.write("crosspred.csv", &matrix.to_csv())?;
    write_json(out, "crosspred.json", &matrix)
}

fn step_ablate(
    out: &mut OutputDir,
    fused: &FusedDataset,
    tasks: &[TaskId],
    config: &RunConfig,
) -> Result<()> {
    for &task in tasks {
        eprintln!("ablate: {task}");
        let report = ablation(fused, task, &config.pipeline)?;
        out.write(&format!("ablation_{task}.csv"), &report.to_csv())?;
        write_json(out, &format!("ablation_{task}.json"), &report)?;
    }
    Ok(())
}

fn step_comorbid(out: &mut OutputDir, dataset: &Dataset, config: &RunConfig) -> Result<()> {
    eprintln!("comorbid: {:?}", config.comorbidity_mode);
    let matrix = comorbidity(dataset, config.comorbidity_mode);
    out.write("comorbidity.csv", &matrix.to_csv())?;
    write_json(out, "comorbidity.json", &matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_hash_is_stable_and_content_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        let mut c = RunConfig::default();
        c.pipeline.seed = 99;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let err = serde_json::from_str::<RunConfig>("{\"bogus\": 1}");
        assert!(err.is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!(
            parse_variant::<ComorbidityMode>("m", "jaccard").unwrap(),
            ComorbidityMode::Jaccard
        );
        assert_eq!(
            parse_variant::<CmOrder>("m", "average-then-normalize").unwrap(),
            CmOrder::AverageThenNormalize
        );
        assert!(parse_variant::<CmOrder>("m", "sideways").is_err());
    }
}
