//! The experiment grid: every method turns the dataset into per-sample
//! features, which are clustered with K-Means and scored.

use std::fs;
use std::path::PathBuf;

use norank_core::baselines::{pca_fit_transform, tsne_embed, TsneConfig};
use norank_core::data::LabeledDataset;
use norank_core::decomp::{cp_als, diagnostics, from_error, tucker_hooi, AlsOptions, DecompDiagnostics};
use norank_core::encoder::{embed, fit_linear_decoder, init_params};
use norank_core::metrics::{distance_histograms, evaluate, DistanceHistograms, DistanceMatrix, MetricsReport};
use norank_core::trainer::{train, TrainLog};
use norank_core::{DenseTensor, Matrix};
use serde_json::json;

use crate::config::{Method, ReportFormat, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{
    emit_report, histograms_csv, reconstruction_csv, scatter_svg, write_manifest, MetricsRow, ReconstructionRow,
};

/// Upper bound on the neighbourhood size used for trustworthiness and continuity.
pub const MAX_NEIGHBORHOOD_K: usize = 10;
/// Ridge used when fitting the linear decoder for metric-learning reconstructions.
pub const DECODER_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub embedding: Matrix,
    pub report: MetricsReport,
    pub reconstruction: Option<DecompDiagnostics>,
    pub histograms: DistanceHistograms,
    pub train_log: Option<TrainLog>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub dataset: String,
    pub labels: Vec<usize>,
    pub methods: Vec<MethodOutcome>,
    pub files: Vec<PathBuf>,
}

impl BenchmarkOutcome {
    pub fn get(&self, method: Method) -> Option<&MethodOutcome> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn metric_rows(&self) -> Vec<MetricsRow> {
        self.methods.iter().map(|m| MetricsRow::new(&self.dataset, &m.method.to_string(), &m.report)).collect()
    }
}

/// Neighbourhood size for trustworthiness/continuity, kept below `n / 2`.
pub fn neighborhood_k(n: usize) -> usize {
    MAX_NEIGHBORHOOD_K.min(n.saturating_sub(1) / 2).max(1)
}

/// t-SNE settings with the perplexity clamped into the valid range for `n` samples.
pub fn tsne_settings(base: &TsneConfig, n: usize) -> TsneConfig {
    let upper = (n as f64 - 1.0) / 3.0;
    let perplexity = if base.perplexity < upper { base.perplexity } else { (upper - 1.0).max(0.5 * (1.0 + upper)) };
    TsneConfig { perplexity, ..base.clone() }
}

fn reconstruction_of(x: &Matrix, x_hat: &Matrix) -> norank_core::Result<DecompDiagnostics> {
    let t = DenseTensor::new(vec![x.rows(), x.cols()], x.data().to_vec())?;
    let t_hat = DenseTensor::new(vec![x_hat.rows(), x_hat.cols()], x_hat.data().to_vec())?;
    diagnostics(&t, &t_hat)
}

/// Per-sample features, reconstruction diagnostics and training log for one method.
pub fn run_method(
    method: Method,
    ds: &LabeledDataset,
    cfg: &RunConfig,
) -> norank_core::Result<(Matrix, Option<DecompDiagnostics>, Option<TrainLog>)> {
    let opts = AlsOptions { seed: cfg.seed, ..AlsOptions::default() };
    match method {
        Method::Raw => Ok((ds.x.clone(), Some(from_error(0.0)), None)),
        Method::Pca => {
            let c = cfg.pca_components.min(ds.len()).min(ds.x.cols());
            let (model, y) = pca_fit_transform(&ds.x, c)?;
            let diag = reconstruction_of(&ds.x, &model.inverse_transform(&y)?)?;
            Ok((y, Some(diag), None))
        }
        Method::Tsne => Ok((tsne_embed(&ds.x, &tsne_settings(&cfg.tsne, ds.len()))?.y, None, None)),
        Method::Cp(rank) => {
            let (model, diag) = cp_als(&ds.to_tensor(), rank, &opts)?;
            Ok((model.sample_features(), Some(diag), None))
        }
        Method::Tucker(rank) => {
            let t = ds.to_tensor();
            let ranks: Vec<usize> = t.dims().iter().map(|&d| rank.min(d)).collect();
            let (model, diag) = tucker_hooi(&t, &ranks, &opts)?;
            Ok((model.sample_features(), Some(diag), None))
        }
        Method::MetricLearning => {
            let e = &cfg.encoder;
            let params = init_params(ds.x.cols(), &e.hidden, e.embedding_dim, e.head, e.seed)?;
            let (params, log) = train(ds, params, &cfg.train)?;
            let z = embed(&params, &ds.x)?;
            let diag = fit_linear_decoder(&z, &ds.x, DECODER_RIDGE)?.diagnostics(&z, &ds.x)?;
            Ok((z, Some(diag), Some(log)))
        }
    }
}

/// Runs every configured method on `ds` without touching the disk.
pub fn compute_benchmark(cfg: &RunConfig, ds: &LabeledDataset) -> CliResult<BenchmarkOutcome> {
    let original = DistanceMatrix::new(&ds.x);
    let k = neighborhood_k(ds.len());
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let stage = || CliError::stage(format!("method {method}"));
        let (embedding, reconstruction, train_log) = run_method(method, ds, cfg).map_err(stage())?;
        let report = evaluate(&original, &embedding, &ds.labels, k, cfg.seed).map_err(stage())?;
        let histograms = distance_histograms(&embedding, &ds.labels, cfg.histogram_bins).map_err(stage())?;
        methods.push(MethodOutcome { method, embedding, report, reconstruction, histograms, train_log });
    }
    Ok(BenchmarkOutcome { dataset: cfg.dataset.name(), labels: ds.labels.clone(), methods, files: Vec::new() })
}

fn file_stem(method: Method) -> String {
    method.to_string().replace(':', "_")
}

/// Two plotting coordinates: the embedding itself when it is at most 2-D, its top two principal components otherwise.
fn plot_coordinates(z: &Matrix) -> norank_core::Result<Matrix> {
    if z.cols() <= 2 {
        return Ok(z.clone());
    }
    Ok(pca_fit_transform(z, 2.min(z.rows()))?.1)
}

/// Writes the tables, plots and manifest for a computed benchmark.
pub fn write_artifacts(cfg: &RunConfig, outcome: &mut BenchmarkOutcome) -> CliResult<()> {
    let dir = &cfg.output_dir;
    let rows = outcome.metric_rows();
    let mut files = emit_report(&rows, &cfg.formats, dir)?;
    let write = |name: String, text: String| -> CliResult<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(CliError::io(&path))?;
        Ok(path)
    };
    if cfg.formats.contains(&ReportFormat::Csv) {
        let recon: Vec<ReconstructionRow> = outcome
            .methods
            .iter()
            .filter_map(|m| {
                m.reconstruction.clone().map(|diagnostics| ReconstructionRow {
                    dataset: outcome.dataset.clone(),
                    method: m.method.to_string(),
                    diagnostics,
                })
            })
            .collect();
        files.push(write("reconstruction.csv".into(), reconstruction_csv(&recon))?);
        let hists: Vec<(String, DistanceHistograms)> =
            outcome.methods.iter().map(|m| (m.method.to_string(), m.histograms.clone())).collect();
        files.push(write("histograms.csv".into(), histograms_csv(&outcome.dataset, &hists))?);
    }
    if cfg.formats.contains(&ReportFormat::Svg) {
        for m in &outcome.methods {
            let coords = plot_coordinates(&m.embedding).map_err(CliError::stage(format!("plot {}", m.method)))?;
            let title = format!("{} / {}", outcome.dataset, m.method);
            files.push(write(format!("scatter_{}.svg", file_stem(m.method)), scatter_svg(&coords, &outcome.labels, &title))?);
        }
    }
    let seeds = json!({
        "run": cfg.seed,
        "train": cfg.train.seed,
        "encoder": cfg.encoder.seed,
        "tsne": cfg.tsne.seed,
    });
    let config = serde_json::to_value(cfg).expect("config serializes");
    files.push(write_manifest(dir, &files, seeds, config)?);
    outcome.files = files;
    Ok(())
}

/// Loads the dataset, runs all methods and writes every artifact.
pub fn run_benchmark(cfg: &RunConfig) -> CliResult<BenchmarkOutcome> {
    cfg.validate()?;
    let ds = cfg.dataset.load()?;
    let mut outcome = compute_benchmark(cfg, &ds)?;
    write_artifacts(cfg, &mut outcome)?;
    Ok(outcome)
}
