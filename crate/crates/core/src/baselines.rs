//! Reference embeddings: PCA and exact t-SNE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::truncated_svd;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `D x c`, orthonormal columns.
    pub components: Matrix,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        centered(x, &self.mean)?.matmul(&self.components)
    }

    pub fn inverse_transform(&self, y: &Matrix) -> Result<Matrix> {
        let mut x = y.matmul_t(&self.components)?;
        for i in 0..x.rows() {
            for (v, m) in x.row_mut(i).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(x)
    }
}

fn centered(x: &Matrix, mean: &[f64]) -> Result<Matrix> {
    if x.cols() != mean.len() {
        return Err(Error::DimensionMismatch(format!("{} features for a model of {}", x.cols(), mean.len())));
    }
    let mut c = x.clone();
    for i in 0..c.rows() {
        for (v, m) in c.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    Ok(c)
}

/// Projects the centered data on its top `c` right singular vectors.
/// Each component is signed so that its largest-magnitude entry is positive.
pub fn pca_fit_transform(x: &Matrix, c: usize) -> Result<(PcaModel, Matrix)> {
    let (n, d) = x.shape();
    if c == 0 || c > n.min(d) {
        return Err(Error::RankOutOfRange { k: c, max: n.min(d) });
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let xc = centered(x, &mean)?;
    let total = xc.frobenius_norm().powi(2);
    let svd = truncated_svd(&xc, c)?;
    let mut components = svd.v;
    for k in 0..c {
        let col = components.column(k);
        let pivot = col.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            components.set_column(k, &col.iter().map(|v| -v).collect::<Vec<_>>());
        }
    }
    let explained_variance_ratio =
        svd.s.iter().map(|s| if total > 0.0 { s * s / total } else { 0.0 }).collect();
    let y = xc.matmul(&components)?;
    Ok((PcaModel { mean, components, explained_variance_ratio }, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub output_dim: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self { perplexity: 30.0, iterations: 500, learning_rate: 100.0, seed: 0, output_dim: 2 }
    }
}

pub const TSNE_MIN_SAMPLES: usize = 8;
pub const PERPLEXITY_TOLERANCE: f64 = 1e-4;
pub const BISECTION_STEPS: usize = 100;
const INIT_STD: f64 = 1e-2;
const MOMENTUM_SWITCH: usize = 250;
const MIN_GAIN: f64 = 0.01;

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < TSNE_MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!("t-SNE needs at least {TSNE_MIN_SAMPLES} samples, got {n}")));
        }
        let upper = (n as f64 - 1.0) / 3.0;
        if !(self.perplexity > 1.0 && self.perplexity < upper) {
            return Err(Error::InvalidArgument(format!(
                "perplexity {} outside (1, {upper}) for {n} samples",
                self.perplexity
            )));
        }
        if self.iterations == 0 || self.output_dim == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("t-SNE needs iterations, output_dim and learning_rate > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    pub y: Matrix,
    pub kl: f64,
    /// KL divergence after every iteration.
    pub kl_history: Vec<f64>,
}

fn squared_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Row `i` holds `p_{j|i}` with a bandwidth found by bisection on the entropy.
pub fn conditional_probabilities(x: &Matrix, perplexity: f64) -> Result<Matrix> {
    let n = x.rows();
    let d2 = squared_distances(x);
    let target = perplexity.ln();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        // Shifting by the nearest distance leaves p_{j|i} unchanged and avoids underflow.
        let d_min = others.iter().map(|&j| d2.get(i, j)).fold(f64::INFINITY, f64::min);
        let dist: Vec<f64> = others.iter().map(|&j| d2.get(i, j) - d_min).collect();
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut row = vec![0.0; dist.len()];
        let mut converged = false;
        for _ in 0..BISECTION_STEPS {
            let mut sum = 0.0;
            for (r, &dj) in row.iter_mut().zip(&dist) {
                *r = (-beta * dj).exp();
                sum += *r;
            }
            let mut weighted = 0.0;
            for (r, &dj) in row.iter_mut().zip(&dist) {
                *r /= sum;
                weighted += *r * dj;
            }
            let entropy = sum.ln() + beta * weighted;
            let gap = entropy - target;
            if gap.abs() <= PERPLEXITY_TOLERANCE {
                converged = true;
                break;
            }
            if gap > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        if !converged {
            return Err(Error::Bisection(i));
        }
        for (&j, &r) in others.iter().zip(&row) {
            p.set(i, j, r);
        }
    }
    Ok(p)
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(x: &Matrix, perplexity: f64) -> Result<Matrix> {
    let cond = conditional_probabilities(x, perplexity)?;
    let n = x.rows();
    Ok(Matrix::from_fn(n, n, |i, j| (cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64)))
}

/// Student-t affinities `q_ij` of a low-dimensional layout, plus their unnormalized kernel.
pub fn joint_q(y: &Matrix) -> (Matrix, Matrix) {
    let n = y.rows();
    let mut num = squared_distances(y);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = if i == j { 0.0 } else { 1.0 / (1.0 + num.get(i, j)) };
            num.set(i, j, v);
            total += v;
        }
    }
    let mut q = num.clone();
    q.scale(1.0 / total);
    (q, num)
}

/// `Σ_{i≠j} p_ij ln(p_ij / q_ij)` over entries with `p_ij > 0`.
pub fn kl_divergence(p: &Matrix, q: &Matrix) -> f64 {
    let mut kl = 0.0;
    for (a, b) in p.data().iter().zip(q.data()) {
        if *a > 0.0 {
            kl += a * (a / b).ln();
        }
    }
    kl
}

/// Exact t-SNE by gradient descent with momentum and adaptive gains.
pub fn tsne_embed(x: &Matrix, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.rows();
    cfg.validate(n)?;
    let p = joint_probabilities(x, cfg.perplexity)?;
    let dim = cfg.output_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("positive std");
    let mut y = Matrix::from_fn(n, dim, |_, _| normal.sample(&mut rng));
    let mut velocity = Matrix::zeros(n, dim);
    let mut gains = Matrix::from_fn(n, dim, |_, _| 1.0);
    let mut kl_history = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        let (q, num) = joint_q(&y);
        let mut grad = Matrix::zeros(n, dim);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = 4.0 * (p.get(i, j) - q.get(i, j)) * num.get(i, j);
                for k in 0..dim {
                    grad.set(i, k, grad.get(i, k) + w * (y.get(i, k) - y.get(j, k)));
                }
            }
        }
        let momentum = if iter < MOMENTUM_SWITCH { 0.5 } else { 0.8 };
        for ((g, v), gain) in grad.data().iter().zip(velocity.data_mut()).zip(gains.data_mut()) {
            *gain = if (*g > 0.0) != (*v > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(MIN_GAIN);
            *v = momentum * *v - cfg.learning_rate * *gain * g;
        }
        y.axpy(1.0, &velocity)?;
        for k in 0..dim {
            let mean = (0..n).map(|i| y.get(i, k)).sum::<f64>() / n as f64;
            for i in 0..n {
                y.set(i, k, y.get(i, k) - mean);
            }
        }
        let kl = kl_divergence(&p, &joint_q(&y).0);
        if !kl.is_finite() {
            return Err(Error::NonFinite("t-SNE divergence"));
        }
        kl_history.push(kl);
    }
    let kl = *kl_history.last().expect("at least one iteration");
    Ok(TsneResult { y, kl, kl_history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn pca_collinear_data() {
        let x = Matrix::from_fn(10, 2, |i, j| (i as f64) * if j == 0 { 1.0 } else { 2.0 });
        let (model, _) = pca_fit_transform(&x, 1).unwrap();
        assert!((model.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_centered_mean_is_zero() {
        let mut x = random_matrix(12, 4, 1);
        for j in 0..4 {
            let m = x.column(j).iter().sum::<f64>() / 12.0;
            for i in 0..12 {
                x.set(i, j, x.get(i, j) - m);
            }
        }
        let (model, _) = pca_fit_transform(&x, 2).unwrap();
        assert!(model.mean.iter().all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn pca_full_rank_reconstruction() {
        let x = random_matrix(20, 5, 2);
        let (model, y) = pca_fit_transform(&x, 5).unwrap();
        let back = model.inverse_transform(&y).unwrap();
        assert!(back.sub(&x).unwrap().frobenius_norm() <= 1e-8);
        let gram = model.components.t_matmul(&model.components).unwrap();
        assert!(gram.sub(&Matrix::identity(5)).unwrap().frobenius_norm() < 1e-10);
        let r = &model.explained_variance_ratio;
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(pca_fit_transform(&x, 6).is_err());
        assert!(pca_fit_transform(&x, 0).is_err());
    }

    #[test]
    fn pca_translation_invariant() {
        let x = random_matrix(15, 3, 3);
        let shifted = Matrix::from_fn(15, 3, |i, j| x.get(i, j) + 10.0 * (j as f64 + 1.0));
        let (_, a) = pca_fit_transform(&x, 2).unwrap();
        let (_, b) = pca_fit_transform(&shifted, 2).unwrap();
        assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-9);
    }

    #[test]
    fn conditional_rows_sum_to_one_and_match_perplexity() {
        let x = random_matrix(30, 4, 4);
        let p = conditional_probabilities(&x, 5.0).unwrap();
        for i in 0..30 {
            let row = p.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
            assert!((h - 5f64.ln()).abs() <= PERPLEXITY_TOLERANCE);
        }
        let (q, _) = joint_q(&random_matrix(30, 2, 5));
        assert!((q.data().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let x = random_matrix(12, 3, 6);
        let p = joint_probabilities(&x, 3.0).unwrap();
        assert_eq!(kl_divergence(&p, &p), 0.0);
    }

    #[test]
    fn config_validation() {
        let cfg = TsneConfig::default();
        assert!(cfg.validate(100).is_ok());
        assert!(cfg.validate(60).is_err());
        assert!(TsneConfig { perplexity: 2.0, ..cfg.clone() }.validate(7).is_err());
    }

    #[test]
    fn separates_two_far_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Matrix::from_fn(8, 3, |i, _| if i < 4 { 0.0 } else { 50.0 } + rng.random_range(-0.5..0.5));
        let cfg = TsneConfig { perplexity: 2.0, iterations: 300, seed: 1, ..TsneConfig::default() };
        let out = tsne_embed(&x, &cfg).unwrap();
        assert!(out.kl_history.iter().all(|v| v.is_finite() && *v >= 0.0));
        // Some axis-aligned threshold must split the blobs.
        let separable = (0..2).any(|k| {
            let a: Vec<f64> = (0..4).map(|i| out.y.get(i, k)).collect();
            let b: Vec<f64> = (4..8).map(|i| out.y.get(i, k)).collect();
            let (amax, amin) = (a.iter().cloned().fold(f64::MIN, f64::max), a.iter().cloned().fold(f64::MAX, f64::min));
            let (bmax, bmin) = (b.iter().cloned().fold(f64::MIN, f64::max), b.iter().cloned().fold(f64::MAX, f64::min));
            amax < bmin || bmax < amin
        });
        assert!(separable);
    }

    #[test]
    fn kl_decreases_over_windows_on_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = Matrix::from_fn(80, 10, |i, _| if i < 40 { 0.0 } else { 4.0 } + normal.sample(&mut rng));
        let cfg = TsneConfig { perplexity: 20.0, iterations: 500, seed: 2, ..TsneConfig::default() };
        let out = tsne_embed(&x, &cfg).unwrap();
        let h = &out.kl_history;
        for start in 0..h.len() - 50 {
            assert!(h[start + 50] < h[start], "window at {start}: {} -> {}", h[start], h[start + 50]);
        }
        assert_eq!(out.kl, *h.last().unwrap());
    }
}
