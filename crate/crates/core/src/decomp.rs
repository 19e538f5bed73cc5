//! Fixed-rank CP (ALS) and Tucker (HOOI) decompositions with reconstruction diagnostics.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_matrix, load_tensor, save_matrix, save_tensor};
use crate::linalg::{complete_orthonormal, dominant_subspace, least_squares, truncated_svd};
use crate::tensor::{DenseTensor, Matrix};

/// Rank grid used by the benchmark harness.
pub const RANK_GRID: [usize; 6] = [2, 3, 5, 10, 15, 20];

const ALS_FALLBACK_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsOptions {
    pub max_iters: usize,
    /// Stop once a sweep improves the relative error by less than this.
    pub tol: f64,
    /// Seed for random factor columns the SVD initialization cannot supply.
    pub seed: u64,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-7, seed: 0 }
    }
}

/// Sum of `R` weighted rank-one tensors, columns normalized to unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct CpModel {
    pub weights: Vec<f64>,
    pub factors: Vec<Matrix>,
}

impl CpModel {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    /// Rows of the mode-0 factor scaled by the component weights.
    pub fn sample_features(&self) -> Matrix {
        let mut f = self.factors[0].clone();
        for i in 0..f.rows() {
            for (x, w) in f.row_mut(i).iter_mut().zip(&self.weights) {
                *x *= w;
            }
        }
        f
    }

    pub fn reconstruct(&self) -> DenseTensor {
        let dims = self.dims();
        let kr = khatri_rao_excluding(&self.factors, 0);
        let lead = self.sample_features();
        let unfolded = lead.matmul_t(&kr).expect("factor shapes");
        DenseTensor::fold(&unfolded, 0, &dims).expect("factor shapes")
    }
}

/// Core tensor contracted with orthonormal per-mode factors.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    pub core: DenseTensor,
    pub factors: Vec<Matrix>,
}

impl TuckerModel {
    pub fn ranks(&self) -> &[usize] {
        self.core.dims()
    }

    /// `U⁽⁰⁾ · G₍₀₎`: each sample's coordinates in the basis spanned by the other factors.
    pub fn sample_features(&self) -> Matrix {
        let g0 = self.core.unfold(0).expect("core has axes");
        self.factors[0].matmul(&g0).expect("factor shapes")
    }

    pub fn reconstruct(&self) -> DenseTensor {
        let mut t = self.core.clone();
        for (mode, u) in self.factors.iter().enumerate() {
            t = t.nmode_product(u, mode).expect("factor shapes");
        }
        t
    }
}

/// Reconstruction quality of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompDiagnostics {
    /// `‖X − X̂‖_F / ‖X‖_F`.
    pub relative_error: f64,
    /// `1 − ε²`.
    pub explained_variance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative error after each sweep.
    #[serde(default)]
    pub history: Vec<f64>,
    /// Set when the requested rank exceeds the rank of some unfolding.
    #[serde(default)]
    pub rank_exceeds_unfolding: bool,
}

/// Relative reconstruction error and explained variance.
///
/// A zero reference tensor counts as perfectly reconstructed (`ε = 0`, `σ² = 1`).
pub fn diagnostics(t: &DenseTensor, t_hat: &DenseTensor) -> Result<DecompDiagnostics> {
    if t.dims() != t_hat.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", t.dims(), t_hat.dims())));
    }
    let eps = relative_error(t.data(), t_hat.data());
    Ok(from_error(eps))
}

pub(crate) fn relative_error(reference: &[f64], approx: &[f64]) -> f64 {
    let norm2: f64 = reference.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return 0.0;
    }
    let resid2: f64 = reference.iter().zip(approx).map(|(a, b)| (a - b) * (a - b)).sum();
    (resid2 / norm2).sqrt()
}

/// Diagnostics record for a known relative error.
pub fn from_error(eps: f64) -> DecompDiagnostics {
    DecompDiagnostics {
        relative_error: eps,
        explained_variance: 1.0 - eps * eps,
        iterations: 0,
        converged: true,
        history: Vec::new(),
        rank_exceeds_unfolding: false,
    }
}

/// Khatri-Rao product of every factor except `skip`, with rows ordered like the
/// columns of the mode-`skip` unfolding (lowest remaining mode fastest).
fn khatri_rao_excluding(factors: &[Matrix], skip: usize) -> Matrix {
    let r = factors[0].cols();
    let mut acc = Matrix::from_raw(1, r, vec![1.0; r]);
    for (mode, f) in factors.iter().enumerate() {
        if mode == skip {
            continue;
        }
        let inner = acc.rows();
        let mut out = Matrix::zeros(inner * f.rows(), r);
        for i in 0..f.rows() {
            let frow = f.row(i);
            for j in 0..inner {
                let dst = out.row_mut(i * inner + j);
                for ((d, a), b) in dst.iter_mut().zip(acc.row(j)).zip(frow) {
                    *d = a * b;
                }
            }
        }
        acc = out;
    }
    acc
}

fn unfolding_rank_bound(dims: &[usize], mode: usize) -> usize {
    let total: usize = dims.iter().product();
    dims[mode].min(total / dims[mode])
}

/// Moves column norms of `f` into weights; zero columns become `e₀` with weight 0.
fn normalize_columns(f: &mut Matrix) -> Vec<f64> {
    let (rows, cols) = f.shape();
    let mut weights = vec![0.0; cols];
    for (j, w) in weights.iter_mut().enumerate() {
        let norm = (0..rows).map(|i| f.get(i, j).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..rows {
                f.set(i, j, f.get(i, j) / norm);
            }
            *w = norm;
        } else {
            for i in 0..rows {
                f.set(i, j, if i == 0 { 1.0 } else { 0.0 });
            }
        }
    }
    weights
}

/// CP decomposition by alternating least squares.
///
/// Factors for modes `1..` start from the leading left singular vectors of
/// each unfolding; columns beyond an unfolding's rank are seeded uniform in
/// `[-1, 1]`. Mode 0 is solved first, so it needs no initialization.
pub fn cp_als(t: &DenseTensor, rank: usize, opts: &AlsOptions) -> Result<(CpModel, DecompDiagnostics)> {
    if rank == 0 {
        return Err(Error::InvalidArgument("CP rank must be at least 1".into()));
    }
    if t.ndims() < 2 {
        return Err(Error::InvalidArgument("CP needs a tensor with at least two modes".into()));
    }
    let dims = t.dims().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let rank_flag = (0..dims.len()).any(|m| rank > unfolding_rank_bound(&dims, m));

    let mut factors = Vec::with_capacity(dims.len());
    factors.push(Matrix::from_fn(dims[0], rank, |_, _| rng.random_range(-1.0..1.0)));
    for mode in 1..dims.len() {
        let unfolded = t.unfold(mode)?;
        let available = rank.min(unfolding_rank_bound(&dims, mode));
        let lead = truncated_svd(&unfolded, available)?.u;
        let f = Matrix::from_fn(dims[mode], rank, |i, j| {
            if j < available {
                lead.get(i, j)
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        factors.push(f);
    }
    let mut weights = vec![1.0; rank];
    let unfoldings_t: Vec<Matrix> =
        (0..dims.len()).map(|m| t.unfold(m).map(|u| u.transpose())).collect::<Result<_>>()?;

    let mut history = Vec::new();
    let mut converged = false;
    let mut prev = f64::INFINITY;
    for _ in 0..opts.max_iters {
        for mode in 0..dims.len() {
            let kr = khatri_rao_excluding(&factors, mode);
            let solved = match least_squares(&kr, &unfoldings_t[mode], 0.0) {
                Ok(x) => x,
                Err(Error::Singular(_)) => least_squares(&kr, &unfoldings_t[mode], ALS_FALLBACK_RIDGE)?,
                Err(e) => return Err(e),
            };
            let mut f = solved.transpose();
            weights = normalize_columns(&mut f);
            factors[mode] = f;
        }
        let model = CpModel { weights: weights.clone(), factors: factors.clone() };
        let err = relative_error(t.data(), model.reconstruct().data());
        history.push(err);
        if err == 0.0 || prev - err < opts.tol {
            converged = true;
            break;
        }
        prev = err;
    }
    let model = CpModel { weights, factors };
    let mut diag = from_error(*history.last().unwrap_or(&relative_error(t.data(), model.reconstruct().data())));
    diag.iterations = history.len();
    diag.converged = converged;
    diag.history = history;
    diag.rank_exceeds_unfolding = rank_flag;
    Ok((model, diag))
}

/// Leading `k` left singular vectors, completed to an orthonormal basis when
/// `k` exceeds the short side.
fn leading_left_vectors(m: &Matrix, k: usize) -> Result<Matrix> {
    let short = m.rows().min(m.cols());
    if k <= short {
        return Ok(truncated_svd(m, k)?.u);
    }
    let u = truncated_svd(m, short)?.u;
    let padded = Matrix::from_fn(m.rows(), k, |i, j| if j < short { u.get(i, j) } else { 0.0 });
    Ok(complete_orthonormal(padded, short))
}

/// Projects `t` onto every factor except `skip`.
fn project_except(t: &DenseTensor, factors: &[Matrix], skip: usize) -> Result<DenseTensor> {
    let mut y = t.clone();
    for (mode, u) in factors.iter().enumerate() {
        if mode != skip {
            y = y.nmode_product(&u.transpose(), mode)?;
        }
    }
    Ok(y)
}

/// Tucker decomposition by higher-order orthogonal iteration, initialized by HOSVD.
pub fn tucker_hooi(
    t: &DenseTensor,
    ranks: &[usize],
    opts: &AlsOptions,
) -> Result<(TuckerModel, DecompDiagnostics)> {
    let dims = t.dims().to_vec();
    if ranks.len() != dims.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ranks given for a {}-way tensor",
            ranks.len(),
            dims.len()
        )));
    }
    for (mode, (&r, &d)) in ranks.iter().zip(&dims).enumerate() {
        if r == 0 || r > d {
            return Err(Error::InvalidArgument(format!(
                "Tucker rank {r} for mode {mode} must be in 1..={d}"
            )));
        }
    }
    let rank_flag = (0..dims.len()).any(|m| ranks[m] > unfolding_rank_bound(&dims, m));
    let mut factors = (0..dims.len())
        .map(|mode| leading_left_vectors(&t.unfold(mode)?, ranks[mode]))
        .collect::<Result<Vec<_>>>()?;

    let build = |factors: &[Matrix]| -> Result<TuckerModel> {
        let core = project_except(t, factors, usize::MAX)?;
        Ok(TuckerModel { core, factors: factors.to_vec() })
    };

    let mut history = Vec::new();
    let mut converged = false;
    let mut prev = f64::INFINITY;
    for _ in 0..opts.max_iters {
        for mode in 0..dims.len() {
            if ranks[mode] == dims[mode] {
                continue;
            }
            let y = project_except(t, &factors, mode)?.unfold(mode)?;
            let gram = y.matmul_t(&y)?;
            factors[mode] = dominant_subspace(&gram, &factors[mode], 50, 1e-14);
        }
        let model = build(&factors)?;
        let err = relative_error(t.data(), model.reconstruct().data());
        history.push(err);
        if err == 0.0 || prev - err < opts.tol {
            converged = true;
            break;
        }
        prev = err;
    }
    let model = build(&factors)?;
    let eps = history.last().copied().unwrap_or_else(|| relative_error(t.data(), model.reconstruct().data()));
    let mut diag = from_error(eps);
    diag.iterations = history.len();
    diag.converged = converged;
    diag.history = history;
    diag.rank_exceeds_unfolding = rank_flag;
    Ok((model, diag))
}

#[derive(Serialize, Deserialize)]
struct CpSidecar {
    kind: String,
    rank: usize,
    dims: Vec<usize>,
    weights: Vec<f64>,
    diagnostics: DecompDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct TuckerSidecar {
    kind: String,
    ranks: Vec<usize>,
    dims: Vec<usize>,
    diagnostics: DecompDiagnostics,
}

/// Writes `factor_<n>.dtn` per mode plus `cp.json`.
pub fn save_cp(dir: &Path, model: &CpModel, diag: &DecompDiagnostics) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (n, f) in model.factors.iter().enumerate() {
        save_matrix(dir.join(format!("factor_{n}.dtn")), f)?;
    }
    let side = CpSidecar {
        kind: "cp".into(),
        rank: model.rank(),
        dims: model.dims(),
        weights: model.weights.clone(),
        diagnostics: diag.clone(),
    };
    write_json(&dir.join("cp.json"), &side)
}

pub fn load_cp(dir: &Path) -> Result<(CpModel, DecompDiagnostics)> {
    let side: CpSidecar = read_json(&dir.join("cp.json"))?;
    let factors = (0..side.dims.len())
        .map(|n| load_matrix(dir.join(format!("factor_{n}.dtn"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((CpModel { weights: side.weights, factors }, side.diagnostics))
}

/// Writes `core.dtn`, `factor_<n>.dtn` per mode and `tucker.json`.
pub fn save_tucker(dir: &Path, model: &TuckerModel, diag: &DecompDiagnostics) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_tensor(dir.join("core.dtn"), &model.core)?;
    for (n, f) in model.factors.iter().enumerate() {
        save_matrix(dir.join(format!("factor_{n}.dtn")), f)?;
    }
    let side = TuckerSidecar {
        kind: "tucker".into(),
        ranks: model.ranks().to_vec(),
        dims: model.factors.iter().map(Matrix::rows).collect(),
        diagnostics: diag.clone(),
    };
    write_json(&dir.join("tucker.json"), &side)
}

pub fn load_tucker(dir: &Path) -> Result<(TuckerModel, DecompDiagnostics)> {
    let side: TuckerSidecar = read_json(&dir.join("tucker.json"))?;
    let core = load_tensor(dir.join("core.dtn"))?;
    let factors = (0..side.dims.len())
        .map(|n| load_matrix(dir.join(format!("factor_{n}.dtn"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((TuckerModel { core, factors }, side.diagnostics))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
