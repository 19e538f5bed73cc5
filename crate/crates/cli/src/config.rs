//! Run configuration: dataset source, method list, training settings and
//! output options. Everything round-trips through JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use norank_core::baselines::TsneConfig;
use norank_core::data::{
    generate_blobs, generate_crystals, generate_galaxies, generate_random, load_dataset, DatasetKind, LabeledDataset,
};
use norank_core::encoder::{DEFAULT_EMBEDDING_DIM, DEFAULT_HIDDEN};
use norank_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "NORANK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Galaxy { n: usize, seed: u64 },
    Crystal { n: usize, seed: u64 },
    Blobs { n: usize, dim: usize, classes: usize, separation: f64, seed: u64 },
    Random { n: usize, dims: Vec<usize>, classes: usize, seed: u64 },
    Files {
        tensor: PathBuf,
        labels: PathBuf,
        #[serde(default = "generic_kind")]
        kind: DatasetKind,
    },
}

fn generic_kind() -> DatasetKind {
    DatasetKind::Generic
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Galaxy { .. } => "galaxy".into(),
            Self::Crystal { .. } => "crystal".into(),
            Self::Blobs { .. } => "blobs".into(),
            Self::Random { .. } => "random".into(),
            Self::Files { tensor, .. } => {
                tensor.file_stem().map_or_else(|| "files".into(), |s| s.to_string_lossy().into_owned())
            }
        }
    }

    pub fn load(&self) -> CliResult<LabeledDataset> {
        let stage = CliError::stage("dataset");
        match self {
            Self::Galaxy { n, seed } => generate_galaxies(*n, *seed),
            Self::Crystal { n, seed } => generate_crystals(*n, *seed),
            Self::Blobs { n, dim, classes, separation, seed } => generate_blobs(*n, *dim, *classes, *separation, *seed),
            Self::Random { n, dims, classes, seed } => generate_random(*n, dims, *classes, *seed),
            Self::Files { tensor, labels, kind } => load_dataset(tensor, labels).map(|mut ds| {
                ds.kind = *kind;
                ds
            }),
        }
        .map_err(stage)
    }

    fn set_seed(&mut self, value: u64) {
        match self {
            Self::Galaxy { seed, .. }
            | Self::Crystal { seed, .. }
            | Self::Blobs { seed, .. }
            | Self::Random { seed, .. } => *seed = value,
            Self::Files { .. } => {}
        }
    }
}

/// A row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    MetricLearning,
    Pca,
    Tsne,
    Cp(usize),
    Tucker(usize),
    Raw,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MetricLearning => f.write_str("metric-learning"),
            Self::Pca => f.write_str("pca"),
            Self::Tsne => f.write_str("tsne"),
            Self::Cp(r) => write!(f, "cp:{r}"),
            Self::Tucker(r) => write!(f, "tucker:{r}"),
            Self::Raw => f.write_str("raw"),
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let rank = |r: &str| {
            r.parse::<usize>()
                .ok()
                .filter(|&r| r > 0)
                .ok_or_else(|| CliError::Config(format!("invalid rank in method '{s}'")))
        };
        match s.split_once(':') {
            Some(("cp", r)) => Ok(Self::Cp(rank(r)?)),
            Some(("tucker", r)) => Ok(Self::Tucker(rank(r)?)),
            None => match s {
                "metric-learning" => Ok(Self::MetricLearning),
                "pca" => Ok(Self::Pca),
                "tsne" => Ok(Self::Tsne),
                "raw" => Ok(Self::Raw),
                _ => Err(CliError::Config(format!("unknown method '{s}'"))),
            },
            Some(_) => Err(CliError::Config(format!("unknown method '{s}'"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = CliError;

    fn try_from(s: String) -> CliResult<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            _ => Err(CliError::Config(format!("unknown report format '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub head: bool,
    pub seed: u64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self { hidden: DEFAULT_HIDDEN.to_vec(), embedding_dim: DEFAULT_EMBEDDING_DIM, head: false, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub tsne: TsneConfig,
    #[serde(default = "default_pca_components")]
    pub pca_components: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Seed for K-Means, decompositions and everything not covered above.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

fn default_pca_components() -> usize {
    2
}

fn default_bins() -> usize {
    20
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg]
}

impl RunConfig {
    pub fn new(dataset: DatasetSpec, methods: Vec<Method>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset,
            methods,
            train: TrainConfig::default(),
            encoder: EncoderSpec::default(),
            tsne: TsneConfig::default(),
            pca_components: default_pca_components(),
            histogram_bins: default_bins(),
            seed: 0,
            output_dir: output_dir.into(),
            formats: default_formats(),
        }
    }

    pub fn from_json_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.methods.is_empty() {
            return Err(CliError::Config("at least one method is required".into()));
        }
        if self.formats.is_empty() {
            return Err(CliError::Config("at least one report format is required".into()));
        }
        if self.pca_components == 0 || self.histogram_bins == 0 {
            return Err(CliError::Config("pca_components and histogram_bins must be positive".into()));
        }
        if self.encoder.embedding_dim == 0 || self.encoder.hidden.contains(&0) {
            return Err(CliError::Config("encoder widths must be positive".into()));
        }
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Replaces every seed in the config with `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        self.seed = seed;
        self.dataset.set_seed(seed);
        self.train.seed = seed;
        self.encoder.seed = seed;
        self.tsne.seed = seed;
    }

    /// Applies `NORANK_SEED` when set; a malformed value is a config error.
    pub fn apply_seed_env(&mut self) -> CliResult<()> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                let seed = v.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}='{v}' is not a u64")))?;
                self.override_seeds(seed);
                Ok(())
            }
            Err(_) => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [Method::MetricLearning, Method::Pca, Method::Tsne, Method::Cp(5), Method::Tucker(20), Method::Raw] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        for bad in ["cp:0", "cp:x", "umap", "tucker", "pca:3"] {
            assert!(matches!(bad.parse::<Method>(), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let json = r#"{"dataset": {"source": "crystal", "n": 64, "seed": 3},
                       "methods": ["pca", "cp:5"], "output_dir": "out"}"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.methods, vec![Method::Pca, Method::Cp(5)]);
        assert_eq!(cfg.train, TrainConfig::default());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn seed_override_reaches_every_component() {
        let mut cfg = RunConfig::new(DatasetSpec::Galaxy { n: 8, seed: 1 }, vec![Method::Raw], "o");
        cfg.override_seeds(99);
        assert_eq!(cfg.dataset, DatasetSpec::Galaxy { n: 8, seed: 99 });
        assert_eq!((cfg.seed, cfg.train.seed, cfg.encoder.seed, cfg.tsne.seed), (99, 99, 99, 99));
    }

    #[test]
    fn empty_method_list_is_a_config_error() {
        let cfg = RunConfig::new(DatasetSpec::Galaxy { n: 8, seed: 1 }, vec![], "o");
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
