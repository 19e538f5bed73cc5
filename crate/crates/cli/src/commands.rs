//! Argument parsing and subcommand dispatch for the `norank` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use norank_core::data::{load_dataset, save_dataset, DatasetKind, LabeledDataset};
use norank_core::decomp::{cp_als, save_cp, save_tucker, tucker_hooi, AlsOptions};
use norank_core::encoder::{embed, init_params, load_params, save_params};
use norank_core::io::{load_matrix, load_tensor, save_matrix};
use norank_core::metrics::{evaluate, DistanceMatrix};
use norank_core::mining::MiningStrategy;
use norank_core::trainer::{train, TrainConfig};
use norank_core::vectorize_samples;
use serde_json::json;

use crate::benchmark::{neighborhood_k, run_benchmark};
use crate::config::{DatasetSpec, EncoderSpec, Method, ReportFormat, RunConfig, SEED_ENV};
use crate::error::{CliError, CliResult};
use crate::report::{emit_report, parse_metrics_csv, parse_metrics_json, write_manifest, MetricsRow};

#[derive(Debug, Parser)]
#[command(name = "norank", version, about = "Metric-learning embeddings versus tensor decompositions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as a DTN1 tensor plus labels CSV.
    Generate(GenerateArgs),
    /// Train an encoder and save its parameters and training log.
    Train(TrainArgs),
    /// Embed a tensor with a saved encoder.
    Embed(EmbedArgs),
    /// Fit a CP or Tucker model to a tensor.
    Decompose(DecomposeArgs),
    /// Score an embedding against labels.
    Evaluate(EvaluateArgs),
    /// Run the full method grid on one dataset.
    Benchmark(BenchmarkArgs),
    /// Convert a metrics table between CSV and JSON.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorKind {
    Galaxy,
    Crystal,
    Blobs,
    Random,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Synthetic generator to use when no tensor file is given.
    #[arg(long, value_enum, default_value = "crystal")]
    pub generator: GeneratorKind,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Feature count for blobs.
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Sample shape for the random generator, e.g. `8,8`.
    #[arg(long, value_delimiter = ',', default_value = "8,8")]
    pub sample_dims: Vec<usize>,
    /// Sample-first DTN1 tensor; overrides the generator.
    #[arg(long, requires = "labels")]
    pub tensor: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Treat file datasets as connectivity matrices (enables augmentation).
    #[arg(long)]
    pub connectivity: bool,
}

impl DatasetArgs {
    pub fn spec(&self) -> DatasetSpec {
        match (&self.tensor, &self.labels) {
            (Some(t), Some(l)) => DatasetSpec::Files {
                tensor: t.clone(),
                labels: l.clone(),
                kind: if self.connectivity { DatasetKind::Connectivity } else { DatasetKind::Generic },
            },
            _ => match self.generator {
                GeneratorKind::Galaxy => DatasetSpec::Galaxy { n: self.n, seed: self.data_seed },
                GeneratorKind::Crystal => DatasetSpec::Crystal { n: self.n, seed: self.data_seed },
                GeneratorKind::Blobs => DatasetSpec::Blobs {
                    n: self.n,
                    dim: self.dim,
                    classes: self.classes,
                    separation: self.separation,
                    seed: self.data_seed,
                },
                GeneratorKind::Random => DatasetSpec::Random {
                    n: self.n,
                    dims: self.sample_dims.clone(),
                    classes: self.classes,
                    seed: self.data_seed,
                },
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// JSON training config; flags below override its fields.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub mining: Option<MiningStrategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Train through a projection head.
    #[arg(long)]
    pub head: bool,
}

impl TrainFlags {
    fn apply(&self, train: &mut TrainConfig, encoder: &mut EncoderSpec) -> CliResult<()> {
        if let Some(path) = &self.train_config {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            *train = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        }
        if let Some(v) = self.epochs {
            train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            train.learning_rate = v;
        }
        if let Some(v) = self.margin {
            train.loss.margin = v;
        }
        if let Some(v) = self.mining {
            train.mining = v;
        }
        if let Some(v) = self.seed {
            train.seed = v;
            encoder.seed = v;
        }
        if let Some(v) = &self.hidden {
            encoder.hidden = v.clone();
        }
        if let Some(v) = self.embedding_dim {
            encoder.embedding_dim = v;
        }
        encoder.head |= self.head;
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Directory for the encoder parameters and `train_log.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tensor: PathBuf,
    /// Output DTN1 matrix (one embedding per row).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecompositionKind {
    Cp,
    Tucker,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub tensor: PathBuf,
    #[arg(long, value_enum)]
    pub method: DecompositionKind,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub tensor: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Embedding matrix (DTN1) with one row per sample.
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long, default_value = "embedding")]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Full run config as JSON; replaces every flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, value_delimiter = ',', default_value = "metric-learning,pca,tsne,cp:5,tucker:5,raw")]
    pub methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
    pub formats: Vec<String>,
    #[arg(long, default_value = "benchmark-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `metrics.csv` or `metrics.json`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    pub formats: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Config(format!("{SEED_ENV}='{v}' is not a u64"))),
        Err(_) => Ok(None),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write(path: PathBuf, text: &str) -> CliResult<PathBuf> {
    fs::write(&path, text).map_err(CliError::io(&path))?;
    Ok(path)
}

fn load(args: &DatasetArgs, seed: Option<u64>) -> CliResult<(DatasetSpec, LabeledDataset)> {
    let mut spec = args.spec();
    if let Some(s) = seed {
        let mut tmp = RunConfig::new(spec, vec![Method::Raw], ".");
        tmp.override_seeds(s);
        spec = tmp.dataset;
    }
    let ds = spec.load()?;
    Ok((spec, ds))
}

fn generate(args: &GenerateArgs) -> CliResult<()> {
    let (spec, ds) = load(&args.dataset, env_seed()?)?;
    create_dir(&args.out)?;
    let tensor = args.out.join("data.dtn");
    let labels = args.out.join("labels.csv");
    save_dataset(&tensor, &labels, &ds).map_err(CliError::stage("write dataset"))?;
    let mut counts = vec![0usize; ds.n_classes()];
    ds.labels.iter().for_each(|&l| counts[l] += 1);
    let meta = json!({
        "dataset": spec,
        "samples": ds.len(),
        "sample_dims": ds.sample_dims,
        "class_names": ds.class_names,
        "class_counts": counts,
    });
    let meta_path = write(args.out.join("dataset.json"), &(serde_json::to_string_pretty(&meta).expect("json") + "\n"))?;
    write_manifest(&args.out, &[tensor, labels, meta_path], json!({ "dataset": spec }), json!({}))?;
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> CliResult<()> {
    let seed = env_seed()?;
    let (_, ds) = load(&args.dataset, seed)?;
    let mut cfg = TrainConfig::default();
    let mut enc = EncoderSpec::default();
    args.flags.apply(&mut cfg, &mut enc)?;
    if let Some(s) = seed {
        cfg.seed = s;
        enc.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let params =
        init_params(ds.x.cols(), &enc.hidden, enc.embedding_dim, enc.head, enc.seed).map_err(CliError::stage("init"))?;
    let (params, log) = train(&ds, params, &cfg).map_err(CliError::stage("train"))?;
    create_dir(&args.out)?;
    save_params(&args.out, &params).map_err(CliError::stage("save encoder"))?;
    write(args.out.join("train_log.csv"), &log.to_csv())?;
    write(args.out.join("train_config.json"), &(serde_json::to_string_pretty(&cfg).expect("json") + "\n"))?;
    Ok(())
}

fn embed_cmd(args: &EmbedArgs) -> CliResult<()> {
    let params = load_params(&args.model).map_err(CliError::stage("load encoder"))?;
    let t = load_tensor(&args.tensor).map_err(CliError::stage("load tensor"))?;
    let x = vectorize_samples(&t).map_err(CliError::stage("load tensor"))?;
    let z = embed(&params, &x).map_err(CliError::stage("embed"))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_matrix(&args.out, &z).map_err(CliError::stage("write embedding"))
}

fn decompose_cmd(args: &DecomposeArgs) -> CliResult<()> {
    let seed = env_seed()?.unwrap_or(args.seed);
    let t = load_tensor(&args.tensor).map_err(CliError::stage("load tensor"))?;
    if args.rank == 0 {
        return Err(CliError::Config("rank must be positive".into()));
    }
    let opts = AlsOptions { max_iters: args.max_iters, seed, ..AlsOptions::default() };
    create_dir(&args.out)?;
    let diag = match args.method {
        DecompositionKind::Cp => {
            let (model, diag) = cp_als(&t, args.rank, &opts).map_err(CliError::stage("cp"))?;
            save_cp(&args.out, &model, &diag).map_err(CliError::stage("save cp"))?;
            diag
        }
        DecompositionKind::Tucker => {
            let ranks: Vec<usize> = t.dims().iter().map(|&d| args.rank.min(d)).collect();
            let (model, diag) = tucker_hooi(&t, &ranks, &opts).map_err(CliError::stage("tucker"))?;
            save_tucker(&args.out, &model, &diag).map_err(CliError::stage("save tucker"))?;
            diag
        }
    };
    println!("relative_error={} explained_variance={}", diag.relative_error, diag.explained_variance);
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs) -> CliResult<()> {
    let seed = env_seed()?.unwrap_or(args.seed);
    let ds = load_dataset(&args.tensor, &args.labels).map_err(CliError::stage("load dataset"))?;
    let z = load_matrix(&args.embedding).map_err(CliError::stage("load embedding"))?;
    let original = DistanceMatrix::new(&ds.x);
    let report =
        evaluate(&original, &z, &ds.labels, neighborhood_k(ds.len()), seed).map_err(CliError::stage("evaluate"))?;
    let name = args.tensor.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    emit_report(&[MetricsRow::new(&name, &args.method, &report)], &[ReportFormat::Csv, ReportFormat::Json], &args.out)?;
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = CliError>>(items: &[String]) -> CliResult<Vec<T>> {
    items.iter().map(|s| s.trim().parse()).collect()
}

pub fn benchmark_config(args: &BenchmarkArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => {
            let mut cfg = RunConfig::new(args.dataset.spec(), parse_list(&args.methods)?, args.out.clone());
            cfg.formats = parse_list(&args.formats)?;
            args.flags.apply(&mut cfg.train, &mut cfg.encoder)?;
            if let Some(s) = args.flags.seed {
                cfg.override_seeds(s);
            }
            cfg
        }
    };
    cfg.apply_seed_env()?;
    Ok(cfg)
}

fn report_cmd(args: &ReportArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.input).map_err(|e| CliError::Config(format!("{}: {e}", args.input.display())))?;
    let rows = match args.input.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_metrics_json(&text)?,
        _ => parse_metrics_csv(&text)?,
    };
    emit_report(&rows, &parse_list::<ReportFormat>(&args.formats)?, &args.out)?;
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Decompose(a) => decompose_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Benchmark(a) => {
            let cfg = benchmark_config(a)?;
            let outcome = run_benchmark(&cfg)?;
            for row in outcome.metric_rows() {
                println!("{} {}: silhouette={} ari={}", row.dataset, row.method, row.silhouette, row.ari);
            }
            Ok(())
        }
        Command::Report(a) => report_cmd(a),
    }
}
