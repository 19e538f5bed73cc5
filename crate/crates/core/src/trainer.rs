//! Mini-batch SGD over the weighted objective.
//!
//! Each epoch shuffles the samples, splits them into near-equal batches and
//! for every batch: encodes, mines triplets in the loss space, evaluates the
//! objective restricted to the batch and takes one plain SGD step. The
//! original-space neighbour lists are computed once and reused.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment_connectivity, AugmentConfig, DatasetKind, LabeledDataset};
use crate::encoder::{backward, forward_batch, EncoderGrads, EncoderParams};
use crate::error::{Error, Result};
use crate::losses::{sample_non_neighbor_pairs, total_loss, LossBreakdown, LossConfig, GLOBAL_PAIRS_PER_SAMPLE};
use crate::metrics::knn_indices;
use crate::mining::{hard_mine, random_triplets, semi_hard_mine, MiningStrategy, TripletBatch};
use crate::tensor::Matrix;

/// Mixed into the run seed for whole-dataset evaluation.
const EVAL_SEED_SALT: u64 = 0x5eed_e7a1;

/// Step-size rule indexed by the global SGD step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LrSchedule {
    /// `η_t = η₀`. Does not satisfy `Σ η_t² < ∞`.
    Constant,
    /// `η_t = η₀ / (1 + γ·t)`.
    InverseTime { gamma: f64 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::InverseTime { gamma: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Strategy once the warm-up epochs are over.
    pub mining: MiningStrategy,
    /// Leading epochs that sample random triplets while the encoder is cold.
    pub warmup_epochs: usize,
    pub augment: bool,
    pub augment_probability: f64,
    /// Also evaluate the objective and its gradient on the whole dataset at the
    /// end of each epoch. Mining and pair sampling use one fixed seed, so the
    /// logged value depends on the parameters alone.
    pub full_dataset_eval: bool,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.02,
            schedule: LrSchedule::default(),
            seed: 0,
            mining: MiningStrategy::SemiHard,
            warmup_epochs: 1,
            augment: true,
            augment_probability: 0.5,
            full_dataset_eval: false,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if let LrSchedule::InverseTime { gamma } = self.schedule {
            if !(gamma.is_finite() && gamma >= 0.0) {
                return Err(Error::InvalidArgument(format!("decay rate must be non-negative, got {gamma}")));
            }
        }
        if !(0.0..=1.0).contains(&self.augment_probability) {
            return Err(Error::InvalidArgument(format!(
                "augmentation probability must lie in [0, 1], got {}",
                self.augment_probability
            )));
        }
        self.loss.validate()
    }
}

pub fn lr_schedule(cfg: &TrainConfig, t: usize) -> f64 {
    match cfg.schedule {
        LrSchedule::Constant => cfg.learning_rate,
        LrSchedule::InverseTime { gamma } => cfg.learning_rate / (1.0 + gamma * t as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch losses averaged over the epoch.
    pub loss: LossBreakdown,
    /// Mean batch-gradient norm.
    pub grad_norm: f64,
    /// Whole-dataset objective after the epoch's last step.
    pub full_loss: Option<LossBreakdown>,
    pub full_grad_norm: Option<f64>,
    pub triplets: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// One row per epoch; whole-dataset columns are appended when they were recorded.
    pub fn to_csv(&self) -> String {
        let full = self.epochs.iter().any(|e| e.full_loss.is_some());
        let mut out = String::from("epoch,triplet,diversity,uniformity,local,global,total,grad_norm,seconds");
        out.push_str(if full { ",full_total,full_grad_norm\n" } else { "\n" });
        for e in &self.epochs {
            let l = &e.loss;
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.epoch, l.triplet, l.diversity, l.uniformity, l.local, l.global, l.total, e.grad_norm, e.seconds
            );
            if full {
                let cell = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
                let _ = write!(out, ",{},{}", cell(e.full_loss.map(|l| l.total)), cell(e.full_grad_norm));
            }
            out.push('\n');
        }
        out
    }

    pub fn totals(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss.total).collect()
    }

    /// Whole-dataset totals, when every epoch recorded one.
    pub fn full_totals(&self) -> Option<Vec<f64>> {
        self.epochs.iter().map(|e| e.full_loss.map(|l| l.total)).collect()
    }
}

/// Neighbour lists restricted to `batch`, re-indexed to batch positions.
fn local_neighbors(global: &[Vec<usize>], batch: &[usize], position: &mut [usize]) -> Vec<Vec<usize>> {
    for (p, &i) in batch.iter().enumerate() {
        position[i] = p;
    }
    let out = batch
        .iter()
        .map(|&i| global[i].iter().filter(|&&j| position[j] != usize::MAX).map(|&j| position[j]).collect())
        .collect();
    for &i in batch {
        position[i] = usize::MAX;
    }
    out
}

fn mine(z: &Matrix, labels: &[usize], strategy: MiningStrategy, margin: f64, seed: u64) -> Result<TripletBatch> {
    if labels.iter().all(|&l| l == labels[0]) {
        return Ok(TripletBatch { triplets: Vec::new(), strategy });
    }
    match strategy {
        MiningStrategy::SemiHard => semi_hard_mine(z, labels, margin, seed),
        MiningStrategy::Hard => hard_mine(z, labels),
        MiningStrategy::Random => random_triplets(labels, labels.len(), seed),
    }
}

/// Loss and parameter gradient on the rows `batch` of `x`.
fn batch_step(
    params: &EncoderParams,
    x: &Matrix,
    labels: &[usize],
    neighbors: &[Vec<usize>],
    strategy: MiningStrategy,
    loss_cfg: &LossConfig,
    seed: u64,
) -> Result<(LossBreakdown, EncoderGrads, usize)> {
    let trace = forward_batch(params, x)?;
    let space = trace.loss_space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets = mine(space, labels, strategy, loss_cfg.margin, rng.random())?;
    let pairs = sample_non_neighbor_pairs(neighbors, GLOBAL_PAIRS_PER_SAMPLE * labels.len(), rng.random());
    let (loss, upstream) = total_loss(space, &triplets.triplets, neighbors, Some(&pairs), loss_cfg)?;
    let grads = backward(params, &trace, &upstream)?;
    Ok((loss, grads, triplets.len()))
}

fn augment_rows(x: &mut Matrix, side: usize, probability: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    for i in 0..x.rows() {
        let draw: f64 = rng.random();
        let seed: u64 = rng.random();
        if draw >= probability {
            continue;
        }
        let c = Matrix::new(side, side, x.row(i).to_vec())?;
        let cfg = AugmentConfig { seed, ..AugmentConfig::default() };
        x.row_mut(i).copy_from_slice(augment_connectivity(&c, &cfg)?.data());
    }
    Ok(())
}

fn check_inputs(dataset: &LabeledDataset, params: &EncoderParams) -> Result<()> {
    if dataset.x.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} features but the encoder expects {}",
            dataset.x.cols(),
            params.input_dim()
        )));
    }
    if dataset.labels.iter().all(|&l| l == dataset.labels[0]) {
        return Err(Error::InvalidArgument("training needs at least two classes".into()));
    }
    Ok(())
}

pub fn train(dataset: &LabeledDataset, params: EncoderParams, cfg: &TrainConfig) -> Result<(EncoderParams, TrainLog)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    check_inputs(dataset, &params)?;
    let mut params = params;
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok((params, log));
    }
    let n = dataset.len();
    let k = cfg.loss.k_neighbors.min(n - 1);
    let neighbors = knn_indices(&dataset.x, k)?;
    let connectivity_side = match (cfg.augment, dataset.kind, dataset.sample_dims.as_slice()) {
        (true, DatasetKind::Connectivity, &[a, b]) if a == b => Some(a),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut position = vec![usize::MAX; n];
    let n_batches = n.div_ceil(cfg.batch_size);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let strategy = if epoch < cfg.warmup_epochs { MiningStrategy::Random } else { cfg.mining };
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        let mut grad_norm = 0.0;
        let mut triplet_count = 0;
        for b in 0..n_batches {
            let batch = &order[b * n / n_batches..(b + 1) * n / n_batches];
            let mut x = dataset.x.select_rows(batch);
            if let Some(side) = connectivity_side {
                augment_rows(&mut x, side, cfg.augment_probability, &mut rng)?;
            }
            let labels: Vec<usize> = batch.iter().map(|&i| dataset.labels[i]).collect();
            let nb = local_neighbors(&neighbors, batch, &mut position);
            let (loss, grads, count) = batch_step(&params, &x, &labels, &nb, strategy, &cfg.loss, rng.random())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, value: loss.total });
            }
            params.sgd_step(&grads, lr_schedule(cfg, step));
            if !params.is_finite() {
                return Err(Error::Diverged { epoch, value: f64::NAN });
            }
            step += 1;
            sum.triplet += loss.triplet;
            sum.diversity += loss.diversity;
            sum.uniformity += loss.uniformity;
            sum.local += loss.local;
            sum.global += loss.global;
            sum.total += loss.total;
            grad_norm += grads.norm();
            triplet_count += count;
        }
        let m = n_batches as f64;
        let loss = LossBreakdown {
            triplet: sum.triplet / m,
            diversity: sum.diversity / m,
            uniformity: sum.uniformity / m,
            local: sum.local / m,
            global: sum.global / m,
            total: sum.total / m,
        };
        let (full_loss, full_grad_norm) = if cfg.full_dataset_eval {
            let seed = cfg.seed ^ EVAL_SEED_SALT;
            let (loss, grads, _) = batch_step(&params, &dataset.x, &dataset.labels, &neighbors, cfg.mining, &cfg.loss, seed)?;
            (Some(loss), Some(grads.norm()))
        } else {
            (None, None)
        };
        log.epochs.push(EpochLog {
            epoch,
            loss,
            grad_norm: grad_norm / m,
            full_loss,
            full_grad_norm,
            triplets: triplet_count,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((params, log))
}
