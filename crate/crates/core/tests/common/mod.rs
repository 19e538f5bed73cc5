//! Independent reference implementations shared by the integration tests.
//!
//! Everything here is written from the textbook definitions with plain loops
//! and no calls into the library's metric code.

#![allow(dead_code)]

use norank_core::{DenseTensor, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Labels in `0..groups` where every group is non-empty.
pub fn random_partition(n: usize, groups: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < groups { i } else { r.random_range(0..groups) }).collect();
    for i in (1..n).rev() {
        labels.swap(i, r.random_range(0..=i));
    }
    labels
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn groups_of(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.iter().map(|&g| (0..labels.len()).filter(|&i| labels[i] == g).collect()).collect()
}

fn mean_row(x: &Matrix, idx: &[usize]) -> Vec<f64> {
    (0..x.cols()).map(|k| idx.iter().map(|&i| x.get(i, k)).sum::<f64>() / idx.len() as f64).collect()
}

pub fn silhouette(x: &Matrix, labels: &[usize]) -> f64 {
    let n = x.rows();
    let groups = groups_of(labels);
    let mut total = 0.0;
    for i in 0..n {
        let own = groups.iter().find(|g| g.contains(&i)).unwrap();
        if own.len() < 2 {
            continue;
        }
        let mean_to = |g: &Vec<usize>| {
            let others: Vec<usize> = g.iter().copied().filter(|&j| j != i).collect();
            others.iter().map(|&j| dist(x.row(i), x.row(j))).sum::<f64>() / others.len() as f64
        };
        let a = mean_to(own);
        let b = groups.iter().filter(|g| !g.contains(&i)).map(mean_to).fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

pub fn davies_bouldin(x: &Matrix, labels: &[usize]) -> f64 {
    let groups = groups_of(labels);
    let cents: Vec<Vec<f64>> = groups.iter().map(|g| mean_row(x, g)).collect();
    let s: Vec<f64> =
        groups.iter().zip(&cents).map(|(g, c)| g.iter().map(|&i| dist(x.row(i), c)).sum::<f64>() / g.len() as f64).collect();
    let m = groups.len();
    let mut acc = 0.0;
    for i in 0..m {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..m {
            if i != j {
                worst = worst.max((s[i] + s[j]) / dist(&cents[i], &cents[j]));
            }
        }
        acc += worst;
    }
    acc / m as f64
}

pub fn calinski_harabasz(x: &Matrix, labels: &[usize]) -> f64 {
    let n = x.rows();
    let groups = groups_of(labels);
    let all: Vec<usize> = (0..n).collect();
    let mu = mean_row(x, &all);
    let (mut b, mut w) = (0.0, 0.0);
    for g in &groups {
        let c = mean_row(x, g);
        b += g.len() as f64 * dist(&c, &mu).powi(2);
        for &i in g {
            w += dist(x.row(i), &c).powi(2);
        }
    }
    let k = groups.len() as f64;
    (b / (k - 1.0)) / (w / (n as f64 - k))
}

/// ARI from the four pair counts.
pub fn ari(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len();
    let (mut a, mut b, mut c, mut d) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        for j in (i + 1)..n {
            match (truth[i] == truth[j], pred[i] == pred[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let denom = (a + b) * (b + d) + (a + c) * (c + d);
    if denom == 0.0 {
        return 1.0;
    }
    2.0 * (a * d - b * c) / denom
}

/// Mutual information over the arithmetic mean of the entropies.
pub fn nmi(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len() as f64;
    let prob = |f: &dyn Fn(usize) -> bool| (0..truth.len()).filter(|&i| f(i)).count() as f64 / n;
    let mut ts: Vec<usize> = truth.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let mut ps: Vec<usize> = pred.to_vec();
    ps.sort_unstable();
    ps.dedup();
    let h = |vals: &[usize], lab: &[usize]| -> f64 {
        vals.iter().map(|&v| prob(&|i| lab[i] == v)).map(|p| -p * p.ln()).sum()
    };
    let (ht, hp) = (h(&ts, truth), h(&ps, pred));
    let mut mi = 0.0;
    for &u in &ts {
        for &v in &ps {
            let pj = prob(&|i| truth[i] == u && pred[i] == v);
            if pj > 0.0 {
                mi += pj * (pj / (prob(&|i| truth[i] == u) * prob(&|i| pred[i] == v))).ln();
            }
        }
    }
    if ht + hp == 0.0 {
        1.0
    } else {
        2.0 * mi / (ht + hp)
    }
}

pub fn separation_ratio(x: &Matrix, labels: &[usize]) -> f64 {
    let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..x.rows() {
        for j in 0..x.rows() {
            if i == j {
                continue;
            }
            let d = dist(x.row(i), x.row(j));
            if labels[i] == labels[j] {
                intra += d;
                ni += 1.0;
            } else {
                inter += d;
                ne += 1.0;
            }
        }
    }
    (inter / ne) / (intra / ni)
}

/// Rank of `j` among the neighbours of `i` (1 = nearest), ties broken by index.
fn rank(x: &Matrix, i: usize, j: usize) -> usize {
    let dj = dist(x.row(i), x.row(j));
    1 + (0..x.rows())
        .filter(|&l| l != i && l != j)
        .filter(|&l| {
            let dl = dist(x.row(i), x.row(l));
            dl < dj || (dl == dj && l < j)
        })
        .count()
}

/// Trustworthiness and continuity computed from pairwise ranks.
pub fn trust_cont(orig: &Matrix, emb: &Matrix, k: usize) -> (f64, f64) {
    let n = orig.rows();
    let (mut t, mut c) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (ro, re) = (rank(orig, i, j), rank(emb, i, j));
            if re <= k && ro > k {
                t += (ro - k) as f64;
            }
            if ro <= k && re > k {
                c += (re - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    let norm = 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0));
    (1.0 - norm * t, 1.0 - norm * c)
}

/// Random rotation (via Gram-Schmidt), scale and shift of `x`.
pub fn isometry(x: &Matrix, seed: u64) -> Matrix {
    let d = x.cols();
    let mut r = rng(seed);
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let scale = r.random_range(0.5..3.0);
    let shift: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..5.0)).collect();
    Matrix::from_fn(x.rows(), d, |i, k| scale * (0..d).map(|l| q[k][l] * x.get(i, l)).sum::<f64>() + shift[k])
}

/// Central differences of a scalar function of a matrix.
pub fn fd_gradient(z: &Matrix, h: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(z.rows(), z.cols());
    let mut zz = z.clone();
    for i in 0..z.rows() {
        for k in 0..z.cols() {
            let orig = z.get(i, k);
            zz.set(i, k, orig + h);
            let up = f(&zz);
            zz.set(i, k, orig - h);
            let down = f(&zz);
            zz.set(i, k, orig);
            out.set(i, k, (up - down) / (2.0 * h));
        }
    }
    out
}

/// Largest entrywise relative error with a small absolute floor.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6)).fold(0.0, f64::max)
}

/// `Σ_r λ_r a_r ∘ b_r ∘ c_r` with random unit-scale factors.
pub fn planted_cp(dims: [usize; 3], rank: usize, seed: u64) -> DenseTensor {
    let mut r = rng(seed);
    let factors: Vec<Vec<f64>> = dims.iter().map(|&d| (0..d * rank).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let mut data = vec![0.0; dims[0] * dims[1] * dims[2]];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                data[(i * dims[1] + j) * dims[2] + k] = (0..rank)
                    .map(|q| factors[0][i * rank + q] * factors[1][j * rank + q] * factors[2][k * rank + q])
                    .sum();
            }
        }
    }
    DenseTensor::new(dims.to_vec(), data).unwrap()
}

pub fn random_tensor(dims: &[usize], seed: u64) -> DenseTensor {
    let mut r = rng(seed);
    let len = dims.iter().product();
    DenseTensor::new(dims.to_vec(), (0..len).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}
