//! Loss terms of the training objective and their gradients with respect to
//! the embeddings.
//!
//! Every function returns the value together with an `n x d` gradient matrix
//! aligned with the rows of `Z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mining::Triplet;
use crate::tensor::{dot, Matrix};

/// Columns whose centered norm falls below this are treated as constant.
pub const CONSTANT_COLUMN_EPS: f64 = 1e-12;
/// Non-neighbour pairs sampled per sample for the global term.
pub const GLOBAL_PAIRS_PER_SAMPLE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub margin: f64,
    pub lambda_diversity: f64,
    pub lambda_uniformity: f64,
    pub lambda_local: f64,
    pub lambda_global: f64,
    pub k_neighbors: usize,
    pub delta_local: f64,
    pub delta_global: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 2.0,
            lambda_diversity: 0.0,
            lambda_uniformity: 0.1,
            lambda_local: 0.1,
            lambda_global: 0.01,
            k_neighbors: 10,
            delta_local: 0.001,
            delta_global: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("margin", self.margin), ("delta_local", self.delta_local), ("delta_global", self.delta_global)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let weights = [
            ("lambda_diversity", self.lambda_diversity),
            ("lambda_uniformity", self.lambda_uniformity),
            ("lambda_local", self.lambda_local),
            ("lambda_global", self.lambda_global),
        ];
        for (name, v) in weights {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.k_neighbors == 0 {
            return Err(Error::InvalidArgument("k_neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub triplet: f64,
    pub diversity: f64,
    pub uniformity: f64,
    pub local: f64,
    pub global: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Fills `total` from the components and the config weights.
    pub fn weighted(triplet: f64, diversity: f64, uniformity: f64, local: f64, global: f64, cfg: &LossConfig) -> Self {
        let total = triplet
            + cfg.lambda_diversity * diversity
            + cfg.lambda_uniformity * uniformity
            + cfg.lambda_local * local
            + cfg.lambda_global * global;
        Self { triplet, diversity, uniformity, local, global, total }
    }

    pub fn is_finite(&self) -> bool {
        [self.triplet, self.diversity, self.uniformity, self.local, self.global, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::InvalidArgument(format!("sample index {i} out of range for {n} embeddings")));
    }
    Ok(())
}

/// Gradients of one active triplet with respect to `(z_a, z_p, z_n)`.
pub fn triplet_gradient(za: &[f64], zp: &[f64], zn: &[f64]) -> [Vec<f64>; 3] {
    let ga = zn.iter().zip(zp).map(|(n, p)| 2.0 * (n - p)).collect();
    let gp = zp.iter().zip(za).map(|(p, a)| 2.0 * (p - a)).collect();
    let gn = za.iter().zip(zn).map(|(a, n)| 2.0 * (a - n)).collect();
    [ga, gp, gn]
}

/// `Σ max(0, ‖z_a − z_p‖² − ‖z_a − z_n‖² + α)`; a hinge exactly at zero is inactive.
pub fn triplet_loss(z: &Matrix, triplets: &[Triplet], margin: f64) -> Result<(f64, Matrix)> {
    let n = z.rows();
    let mut grad = Matrix::zeros(n, z.cols());
    let mut value = 0.0;
    for t in triplets {
        for i in [t.anchor, t.positive, t.negative] {
            check_index(i, n)?;
        }
        let (za, zp, zn) = (z.row(t.anchor), z.row(t.positive), z.row(t.negative));
        let h = sq_dist(za, zp) - sq_dist(za, zn) + margin;
        if h <= 0.0 {
            continue;
        }
        value += h;
        let [ga, gp, gn] = triplet_gradient(za, zp, zn);
        for (idx, g) in [(t.anchor, ga), (t.positive, gp), (t.negative, gn)] {
            for (dst, v) in grad.row_mut(idx).iter_mut().zip(g) {
                *dst += v;
            }
        }
    }
    Ok((value, grad))
}

#[derive(Debug, Clone)]
pub struct Regularizers {
    pub diversity: f64,
    pub uniformity: f64,
    pub diversity_grad: Matrix,
    pub uniformity_grad: Matrix,
    /// Columns with zero variance, counted as perfectly correlated.
    pub constant_columns: Vec<usize>,
}

/// Mean absolute off-diagonal column correlation and log-mean Gaussian pair energy.
pub fn regularizers(z: &Matrix) -> Result<Regularizers> {
    let (n, d) = z.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("regularizers need at least 2 embeddings, got {n}")));
    }
    if d < 2 {
        return Err(Error::InvalidArgument(format!("diversity needs at least 2 dimensions, got {d}")));
    }
    let (diversity, diversity_grad, constant_columns) = diversity(z);
    let (uniformity, uniformity_grad) = uniformity(z);
    Ok(Regularizers { diversity, uniformity, diversity_grad, uniformity_grad, constant_columns })
}

fn diversity(z: &Matrix) -> (f64, Matrix, Vec<usize>) {
    let (n, d) = z.shape();
    let mut u = z.clone();
    let mut norms = vec![0.0; d];
    let mut constant = Vec::new();
    for (j, norm) in norms.iter_mut().enumerate() {
        let mut col = u.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|v| *v -= mean);
        *norm = dot(&col, &col).sqrt();
        if *norm <= CONSTANT_COLUMN_EPS {
            constant.push(j);
            col.iter_mut().for_each(|v| *v = 0.0);
        } else {
            col.iter_mut().for_each(|v| *v /= *norm);
        }
        u.set_column(j, &col);
    }
    let c = u.t_matmul(&u).expect("square product");
    let is_const = |j: usize| constant.binary_search(&j).is_ok();
    let pairs = (d * (d - 1)) as f64;
    let mut sum = 0.0;
    let mut signs = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            if is_const(i) || is_const(j) {
                sum += 1.0;
            } else {
                let cij = c.get(i, j);
                sum += cij.abs();
                signs.set(i, j, if cij > 0.0 { 1.0 } else if cij < 0.0 { -1.0 } else { 0.0 });
            }
        }
    }
    // ∂/∂U of Σ_{i≠j}|u_iᵀu_j| / (d(d−1)), then back through normalization and centering.
    let mut g = u.matmul(&signs).expect("conformable");
    g.scale(2.0 / pairs);
    for j in 0..d {
        let mut gc = g.column(j);
        if is_const(j) {
            gc.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let uj = u.column(j);
            let radial = dot(&uj, &gc);
            for (gv, uv) in gc.iter_mut().zip(&uj) {
                *gv = (*gv - radial * uv) / norms[j];
            }
            let mean = gc.iter().sum::<f64>() / n as f64;
            gc.iter_mut().for_each(|v| *v -= mean);
        }
        g.set_column(j, &gc);
    }
    (sum / pairs, g, constant)
}

fn uniformity(z: &Matrix) -> (f64, Matrix) {
    let (n, d) = z.shape();
    let mut s = 0.0;
    let mut grad = Matrix::zeros(n, d);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = (-2.0 * sq_dist(z.row(i), z.row(j))).exp();
            s += 2.0 * w;
            for k in 0..d {
                let diff = z.get(i, k) - z.get(j, k);
                grad.set(i, k, grad.get(i, k) + w * diff);
                grad.set(j, k, grad.get(j, k) - w * diff);
            }
        }
    }
    let ordered = (n * (n - 1)) as f64;
    grad.scale(-8.0 / s);
    ((s / ordered).ln(), grad)
}

/// All directed non-neighbour pairs when there are at most `max_pairs`,
/// otherwise `max_pairs` draws uniform over that set (with replacement).
pub fn sample_non_neighbor_pairs(neighbors: &[Vec<usize>], max_pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let n = neighbors.len();
    let is_neighbor = |i: usize, j: usize| neighbors[i].contains(&j);
    let total: usize = neighbors.iter().enumerate().map(|(i, nb)| n - 1 - nb.iter().filter(|&&j| j != i).count()).sum();
    if total <= max_pairs {
        let mut out = Vec::with_capacity(total);
        for i in 0..n {
            for j in 0..n {
                if i != j && !is_neighbor(i, j) {
                    out.push((i, j));
                }
            }
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(max_pairs);
    while out.len() < max_pairs {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && !is_neighbor(i, j) {
            out.push((i, j));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LocalityLosses {
    pub local: f64,
    pub global: f64,
    pub local_grad: Matrix,
    pub global_grad: Matrix,
}

fn validate_neighbors(neighbors: &[Vec<usize>], n: usize) -> Result<()> {
    if neighbors.len() != n {
        return Err(Error::DimensionMismatch(format!("{} neighbour lists for {n} embeddings", neighbors.len())));
    }
    for (i, nb) in neighbors.iter().enumerate() {
        if nb.len() >= n {
            return Err(Error::InvalidArgument(format!("k = {} neighbours with only {n} samples", nb.len())));
        }
        for &j in nb {
            check_index(j, n)?;
            if j == i {
                return Err(Error::InvalidArgument(format!("sample {i} lists itself as a neighbour")));
            }
        }
    }
    Ok(())
}

/// Local consistency over original-space neighbour pairs and global separation
/// over `global_pairs` (every non-neighbour pair when `None`).
pub fn locality_losses(
    z: &Matrix,
    neighbors: &[Vec<usize>],
    global_pairs: Option<&[(usize, usize)]>,
    delta_local: f64,
    delta_global: f64,
) -> Result<LocalityLosses> {
    let (n, d) = z.shape();
    validate_neighbors(neighbors, n)?;
    let mut local = 0.0;
    let mut local_grad = Matrix::zeros(n, d);
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            let h = sq_dist(z.row(i), z.row(j)) - delta_local;
            if h > 0.0 {
                local += h;
                accumulate_pair(&mut local_grad, z, i, j, 2.0);
            }
        }
    }
    let exhaustive;
    let pairs = match global_pairs {
        Some(p) => p,
        None => {
            exhaustive = sample_non_neighbor_pairs(neighbors, usize::MAX, 0);
            &exhaustive
        }
    };
    let mut global = 0.0;
    let mut global_grad = Matrix::zeros(n, d);
    for &(i, j) in pairs {
        check_index(i, n)?;
        check_index(j, n)?;
        let h = delta_global - sq_dist(z.row(i), z.row(j));
        if h > 0.0 {
            global += h;
            accumulate_pair(&mut global_grad, z, i, j, -2.0);
        }
    }
    Ok(LocalityLosses { local, global, local_grad, global_grad })
}

/// Adds `c·(z_i − z_j)` to row `i` and subtracts it from row `j`.
fn accumulate_pair(grad: &mut Matrix, z: &Matrix, i: usize, j: usize, c: f64) {
    for k in 0..z.cols() {
        let diff = c * (z.get(i, k) - z.get(j, k));
        grad.set(i, k, grad.get(i, k) + diff);
        grad.set(j, k, grad.get(j, k) - diff);
    }
}

/// Weighted objective and its gradient with respect to `Z`.
pub fn total_loss(
    z: &Matrix,
    triplets: &[Triplet],
    neighbors: &[Vec<usize>],
    global_pairs: Option<&[(usize, usize)]>,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Matrix)> {
    cfg.validate()?;
    let (triplet, mut grad) = triplet_loss(z, triplets, cfg.margin)?;
    let reg = regularizers(z)?;
    let loc = locality_losses(z, neighbors, global_pairs, cfg.delta_local, cfg.delta_global)?;
    grad.axpy(cfg.lambda_diversity, &reg.diversity_grad)?;
    grad.axpy(cfg.lambda_uniformity, &reg.uniformity_grad)?;
    grad.axpy(cfg.lambda_local, &loc.local_grad)?;
    grad.axpy(cfg.lambda_global, &loc.global_grad)?;
    let breakdown = LossBreakdown::weighted(triplet, reg.diversity, reg.uniformity, loc.local, loc.global, cfg);
    Ok((breakdown, grad))
}
