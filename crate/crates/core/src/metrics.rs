//! Embedding quality measures, K-Means, and pair-distance histograms.
//!
//! All distances are Euclidean and evaluated coordinate by coordinate, so the
//! results are exact up to summation order.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_NEIGHBORHOOD_K: usize = 10;
pub const KMEANS_MAX_ITERS: usize = 300;
pub const DEFAULT_KMEANS_RESTARTS: usize = 10;

/// Symmetric matrix of pairwise Euclidean distances.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(x: &Matrix) -> Self {
        let n = x.rows();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclidean(x.row(i), x.row(j));
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Other points ordered by distance from `i`, ties broken by index.
    pub fn neighbor_order(&self, i: usize) -> Vec<usize> {
        let row = self.row(i);
        let mut idx: Vec<usize> = (0..self.n).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        idx
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    sq_euclidean(a, b).sqrt()
}

fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest other points of every row, nearest first, ties by index.
pub fn knn_indices(x: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    if k >= x.rows() {
        return Err(Error::InvalidArgument(format!("k = {k} neighbours with only {} samples", x.rows())));
    }
    let dist = DistanceMatrix::new(x);
    Ok((0..x.rows())
        .map(|i| {
            let mut order = dist.neighbor_order(i);
            order.truncate(k);
            order
        })
        .collect())
}

/// Maps arbitrary ids to `0..m` in order of first appearance.
pub fn dense_ids(ids: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let dense = ids
        .iter()
        .map(|id| {
            let next = map.len();
            *map.entry(*id).or_insert(next)
        })
        .collect();
    (dense, map.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub ids: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
}

/// K-Means with k-means++ seeding, keeping the restart with the lowest inertia.
pub fn kmeans(x: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k-means with k = {k} on {n} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<ClusterAssignment> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(x, plus_plus_init(x, k, &mut rng), k);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_euclidean(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // Every point coincides with a centre; take the first unused index.
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_euclidean(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

fn assign(x: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    (0..x.rows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for c in 0..centroids.rows() {
                let d = sq_euclidean(x.row(i), centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

fn lloyd(x: &Matrix, mut centroids: Matrix, k: usize) -> ClusterAssignment {
    let (n, d) = x.shape();
    let (mut ids, mut dists) = assign(x, &centroids);
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[ids[i]] += 1;
            for (s, v) in sums.row_mut(ids[i]).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its centre.
                let far = (0..n).fold(0, |b, i| if dists[i] > dists[b] { i } else { b });
                sums.row_mut(c).copy_from_slice(x.row(far));
                dists[far] = 0.0;
            } else {
                sums.row_mut(c).iter_mut().for_each(|v| *v /= counts[c] as f64);
            }
        }
        centroids = sums;
        let (new_ids, new_dists) = assign(x, &centroids);
        let stable = new_ids == ids;
        ids = new_ids;
        dists = new_dists;
        if stable {
            break;
        }
    }
    let inertia = dists.iter().sum();
    ClusterAssignment { ids, centroids, inertia }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalMetrics {
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub calinski_harabasz: f64,
}

fn group_members(groups: &[usize]) -> Vec<Vec<usize>> {
    let (dense, m) = dense_ids(groups);
    let mut members = vec![Vec::new(); m];
    for (i, g) in dense.into_iter().enumerate() {
        members[g].push(i);
    }
    members
}

fn centroid(x: &Matrix, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; x.cols()];
    for &i in members {
        for (a, b) in c.iter_mut().zip(x.row(i)) {
            *a += b;
        }
    }
    c.iter_mut().for_each(|v| *v /= members.len() as f64);
    c
}

/// Silhouette, Davies-Bouldin and Calinski-Harabasz for a partition of `x`.
pub fn internal_metrics(x: &Matrix, groups: &[usize]) -> Result<InternalMetrics> {
    internal_metrics_with(x, &DistanceMatrix::new(x), groups)
}

pub fn internal_metrics_with(x: &Matrix, dist: &DistanceMatrix, groups: &[usize]) -> Result<InternalMetrics> {
    let n = x.rows();
    if groups.len() != n || dist.len() != n {
        return Err(Error::DimensionMismatch(format!("{} groups for {n} samples", groups.len())));
    }
    let members = group_members(groups);
    let m = members.len();
    if m < 2 {
        return Err(Error::Undefined("internal metrics need at least two groups".into()));
    }
    let (dense, _) = dense_ids(groups);

    let mut sil_sum = 0.0;
    for i in 0..n {
        let own = &members[dense[i]];
        if own.len() == 1 {
            continue;
        }
        let row = dist.row(i);
        let a = own.iter().map(|&j| row[j]).sum::<f64>() / (own.len() - 1) as f64;
        let b = members
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != dense[i])
            .map(|(_, mem)| mem.iter().map(|&j| row[j]).sum::<f64>() / mem.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            sil_sum += (b - a) / denom;
        }
    }

    let centroids: Vec<Vec<f64>> = members.iter().map(|mem| centroid(x, mem)).collect();
    let scatter: Vec<f64> = members
        .iter()
        .zip(&centroids)
        .map(|(mem, c)| mem.iter().map(|&i| euclidean(x.row(i), c)).sum::<f64>() / mem.len() as f64)
        .collect();
    let mut db = 0.0;
    for i in 0..m {
        let worst = (0..m)
            .filter(|&j| j != i)
            .map(|j| (scatter[i] + scatter[j]) / euclidean(&centroids[i], &centroids[j]))
            .fold(f64::NEG_INFINITY, f64::max);
        db += worst;
    }

    let all: Vec<usize> = (0..n).collect();
    let overall = centroid(x, &all);
    let between: f64 = members.iter().zip(&centroids).map(|(mem, c)| mem.len() as f64 * sq_euclidean(c, &overall)).sum();
    let within: f64 = members
        .iter()
        .zip(&centroids)
        .map(|(mem, c)| mem.iter().map(|&i| sq_euclidean(x.row(i), c)).sum::<f64>())
        .sum();
    let ch = if within > 0.0 {
        between / within * (n - m) as f64 / (m - 1) as f64
    } else {
        f64::INFINITY
    };
    Ok(InternalMetrics { silhouette: sil_sum / n as f64, davies_bouldin: db / m as f64, calinski_harabasz: ch })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetrics {
    pub ari: f64,
    pub nmi: f64,
}

fn choose2(v: usize) -> f64 {
    let v = v as f64;
    v * (v - 1.0) / 2.0
}

/// Adjusted Rand index and arithmetic-mean normalized mutual information.
pub fn external_metrics(truth: &[usize], predicted: &[usize]) -> Result<ExternalMetrics> {
    let n = truth.len();
    if predicted.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} labels vs {} predictions", predicted.len())));
    }
    if n < 2 {
        return Err(Error::Undefined("external metrics need at least two samples".into()));
    }
    let (t, rt) = dense_ids(truth);
    let (p, rp) = dense_ids(predicted);
    let mut table = vec![0usize; rt * rp];
    for (a, b) in t.iter().zip(&p) {
        table[a * rp + b] += 1;
    }
    let row: Vec<usize> = (0..rt).map(|i| table[i * rp..(i + 1) * rp].iter().sum()).collect();
    let col: Vec<usize> = (0..rp).map(|j| (0..rt).map(|i| table[i * rp + j]).sum()).collect();

    let index: f64 = table.iter().map(|&v| choose2(v)).sum();
    let sum_a: f64 = row.iter().map(|&v| choose2(v)).sum();
    let sum_b: f64 = col.iter().map(|&v| choose2(v)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max_index = 0.5 * (sum_a + sum_b);
    let ari = if max_index == expected { 1.0 } else { (index - expected) / (max_index - expected) };

    let nf = n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / nf).map(|q| -q * q.ln()).sum()
    };
    let (ht, hp) = (entropy(&row), entropy(&col));
    let mut mi = 0.0;
    for i in 0..rt {
        for j in 0..rp {
            let c = table[i * rp + j];
            if c > 0 {
                let pij = c as f64 / nf;
                mi += pij * (pij / ((row[i] as f64 / nf) * (col[j] as f64 / nf))).ln();
            }
        }
    }
    let nmi = if ht + hp == 0.0 { 1.0 } else { (2.0 * mi / (ht + hp)).clamp(0.0, 1.0) };
    Ok(ExternalMetrics { ari, nmi })
}

/// Mean inter-class over mean intra-class pairwise distance.
/// Collapsed classes (zero intra-class mean) give `+∞`.
pub fn separation_ratio(z: &Matrix, labels: &[usize]) -> Result<f64> {
    separation_ratio_with(&DistanceMatrix::new(z), labels)
}

pub fn separation_ratio_with(dist: &DistanceMatrix, labels: &[usize]) -> Result<f64> {
    let n = dist.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} samples", labels.len())));
    }
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                intra += dist.get(i, j);
                n_intra += 1;
            } else {
                inter += dist.get(i, j);
                n_inter += 1;
            }
        }
    }
    if n_inter == 0 {
        return Err(Error::Undefined("separation ratio needs at least two classes".into()));
    }
    if n_intra == 0 {
        return Err(Error::Undefined("separation ratio needs a same-class pair".into()));
    }
    let intra_mean = intra / n_intra as f64;
    if intra_mean == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((inter / n_inter as f64) / intra_mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodMetrics {
    pub trustworthiness: f64,
    pub continuity: f64,
}

/// Trustworthiness and continuity with 1-based ranks that exclude the point itself.
pub fn neighborhood_metrics(original: &Matrix, embedded: &Matrix, k: usize) -> Result<NeighborhoodMetrics> {
    if original.rows() != embedded.rows() {
        return Err(Error::DimensionMismatch(format!("{} vs {} points", original.rows(), embedded.rows())));
    }
    neighborhood_metrics_with(&DistanceMatrix::new(original), &DistanceMatrix::new(embedded), k)
}

pub fn neighborhood_metrics_with(
    original: &DistanceMatrix,
    embedded: &DistanceMatrix,
    k: usize,
) -> Result<NeighborhoodMetrics> {
    let n = original.len();
    if embedded.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} vs {} points", embedded.len())));
    }
    if k == 0 || 2 * k >= n {
        return Err(Error::InvalidArgument(format!("neighbourhood size k = {k} needs 2k < n = {n}")));
    }
    let mut rank_o = vec![0usize; n];
    let mut rank_e = vec![0usize; n];
    let (mut t_sum, mut c_sum) = (0.0, 0.0);
    for i in 0..n {
        for (r, j) in original.neighbor_order(i).into_iter().enumerate() {
            rank_o[j] = r + 1;
        }
        for (r, j) in embedded.neighbor_order(i).into_iter().enumerate() {
            rank_e[j] = r + 1;
        }
        for j in (0..n).filter(|&j| j != i) {
            let (in_o, in_e) = (rank_o[j] <= k, rank_e[j] <= k);
            if in_e && !in_o {
                t_sum += (rank_o[j] - k) as f64;
            }
            if in_o && !in_e {
                c_sum += (rank_e[j] - k) as f64;
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let norm = 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0));
    Ok(NeighborhoodMetrics { trustworthiness: 1.0 - norm * t_sum, continuity: 1.0 - norm * c_sum })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistograms {
    /// `bins + 1` shared edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub intra: Vec<u64>,
    pub inter: Vec<u64>,
}

pub fn distance_histograms(z: &Matrix, labels: &[usize], bins: usize) -> Result<DistanceHistograms> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histograms need at least one bin".into()));
    }
    let n = z.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} samples", labels.len())));
    }
    let dist = DistanceMatrix::new(z);
    let mut hi: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            hi = hi.max(dist.get(i, j));
        }
    }
    if hi == 0.0 {
        hi = 1.0;
    }
    let edges = (0..=bins).map(|b| hi * b as f64 / bins as f64).collect();
    let mut intra = vec![0u64; bins];
    let mut inter = vec![0u64; bins];
    for i in 0..n {
        for j in (i + 1)..n {
            let b = ((dist.get(i, j) / hi * bins as f64) as usize).min(bins - 1);
            if labels[i] == labels[j] {
                intra[b] += 1;
            } else {
                inter[b] += 1;
            }
        }
    }
    Ok(DistanceHistograms { edges, intra, inter })
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub calinski_harabasz: f64,
    pub separation_ratio: f64,
    pub continuity: f64,
    pub trustworthiness: f64,
    pub ari: f64,
    pub nmi: f64,
    pub k_neighbors: usize,
}

/// Clusters `embedded` with K-Means (k = number of classes) and scores it.
///
/// Internal indices use the K-Means partition, ARI/NMI compare it with the
/// labels, and the separation ratio uses the labels directly. Quantities that
/// are undefined for the given partition are reported as NaN.
pub fn evaluate(
    original: &DistanceMatrix,
    embedded: &Matrix,
    labels: &[usize],
    k_neighbors: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let (dense, classes) = dense_ids(labels);
    let clusters = kmeans(embedded, classes, seed, DEFAULT_KMEANS_RESTARTS)?;
    let emb_dist = DistanceMatrix::new(embedded);
    let internal = internal_metrics_with(embedded, &emb_dist, &clusters.ids).unwrap_or(InternalMetrics {
        silhouette: f64::NAN,
        davies_bouldin: f64::NAN,
        calinski_harabasz: f64::NAN,
    });
    let external = external_metrics(&dense, &clusters.ids)?;
    let sr = separation_ratio_with(&emb_dist, &dense).unwrap_or(f64::NAN);
    let nb = neighborhood_metrics_with(original, &emb_dist, k_neighbors)?;
    Ok(MetricsReport {
        silhouette: internal.silhouette,
        davies_bouldin: internal.davies_bouldin,
        calinski_harabasz: internal.calinski_harabasz,
        separation_ratio: sr,
        continuity: nb.continuity,
        trustworthiness: nb.trustworthiness,
        ari: external.ari,
        nmi: external.nmi,
        k_neighbors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn kmeans_two_blobs() {
        let x = pts(&[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [9.0, 9.0], [9.1, 9.0], [9.0, 9.1]]);
        let c = kmeans(&x, 2, 3, 4).unwrap();
        assert_eq!(c.ids[0], c.ids[1]);
        assert_eq!(c.ids[0], c.ids[2]);
        assert_eq!(c.ids[3], c.ids[4]);
        assert_ne!(c.ids[0], c.ids[3]);
    }

    #[test]
    fn kmeans_k_equals_n_has_zero_inertia() {
        let x = pts(&[[0.0, 0.0], [1.0, 2.0], [3.0, -1.0], [5.0, 5.0]]);
        assert_eq!(kmeans(&x, 4, 0, 3).unwrap().inertia, 0.0);
    }

    #[test]
    fn kmeans_line_example() {
        let x = Matrix::new(4, 1, vec![0.0, 1.0, 9.0, 10.0]).unwrap();
        let c = kmeans(&x, 2, 11, 10).unwrap();
        assert_eq!(c.inertia, 1.0);
        assert_eq!(c.ids[0], c.ids[1]);
        assert_eq!(c.ids[2], c.ids[3]);
        assert_ne!(c.ids[0], c.ids[2]);
        assert!(kmeans(&x, 5, 0, 1).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::from_fn(40, 3, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(kmeans(&x, 4, 9, 5).unwrap(), kmeans(&x, 4, 9, 5).unwrap());
    }

    #[test]
    fn silhouette_example() {
        let x = pts(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]);
        let m = internal_metrics(&x, &[0, 0, 1, 1]).unwrap();
        let b = (10.0 + 101f64.sqrt()) / 2.0;
        assert!((m.silhouette - (b - 1.0) / b).abs() < 1e-14);
        assert!((m.silhouette - 0.9002).abs() < 1e-4);
    }

    #[test]
    fn db_and_ch_example() {
        let x = pts(&[[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0]]);
        let m = internal_metrics(&x, &[0, 0, 1, 1]).unwrap();
        assert!((m.davies_bouldin - 0.2).abs() < 1e-14);
        assert!((m.calinski_harabasz - 50.0).abs() < 1e-12);
    }

    #[test]
    fn duplication_keeps_silhouette_and_db() {
        let x = pts(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.5], [10.0, 0.0], [10.0, 1.0], [8.0, 3.0]]);
        let g = [0, 0, 0, 1, 1, 1];
        let doubled = Matrix::from_fn(12, 2, |i, j| x.get(i % 6, j));
        let g2: Vec<usize> = (0..12).map(|i| g[i % 6]).collect();
        let a = internal_metrics(&x, &g).unwrap();
        let b = internal_metrics(&doubled, &g2).unwrap();
        assert!((a.davies_bouldin - b.davies_bouldin).abs() < 1e-12);
        // A twin at distance 0 lowers every a(i) from S/(m−1) to 2S/(2m−1), so s(i) can only grow.
        assert!(b.silhouette >= a.silhouette - 1e-12);
    }

    #[test]
    fn singleton_silhouette_is_zero() {
        let x = pts(&[[0.0, 0.0], [5.0, 5.0], [5.0, 6.0]]);
        let m = internal_metrics(&x, &[7, 3, 3]).unwrap();
        let s1 = (50f64.sqrt() - 1.0) / 50f64.sqrt();
        let s2 = (61f64.sqrt() - 1.0) / 61f64.sqrt();
        assert!((m.silhouette - (s1 + s2) / 3.0).abs() < 1e-14);
    }

    #[test]
    fn single_group_is_an_error() {
        let x = pts(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(internal_metrics(&x, &[1, 1]), Err(Error::Undefined(_))));
    }

    #[test]
    fn external_examples() {
        let id = external_metrics(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 9]).unwrap();
        assert!((id.ari - 1.0).abs() < 1e-15 && (id.nmi - 1.0).abs() < 1e-15);
        let crossed = external_metrics(&[0, 0, 1, 1], &[1, 2, 1, 2]).unwrap();
        assert!((crossed.ari + 0.5).abs() < 1e-15);
        let one = external_metrics(&[0, 0, 1, 1, 2, 2], &[4; 6]).unwrap();
        assert_eq!(one.ari, 0.0);
        assert_eq!(one.nmi, 0.0);
        assert!(external_metrics(&[0], &[0]).is_err());
    }

    #[test]
    fn separation_ratio_examples() {
        let z = pts(&[[0.0, 0.0], [0.0, 0.1], [1.0, 0.0], [1.0, 0.1]]);
        let sr = separation_ratio(&z, &[0, 0, 1, 1]).unwrap();
        let expected = (2.0 + 2.0 * 1.01f64.sqrt()) / 4.0 / 0.1;
        assert!((sr - expected).abs() < 1e-12);
        assert!((sr - 10.025).abs() < 1e-3);
        assert!(separation_ratio(&z, &[0, 1, 2, 3]).is_err());
        let collapsed = pts(&[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(separation_ratio(&collapsed, &[0, 0, 1, 1]).unwrap(), f64::INFINITY);
        let mut scaled = z.clone();
        scaled.scale(7.3);
        assert!((separation_ratio(&scaled, &[0, 0, 1, 1]).unwrap() - sr).abs() <= 1e-12);
    }

    #[test]
    fn neighborhood_identity_and_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(20, 2, |_, _| rng.random_range(-1.0..1.0));
        let m = neighborhood_metrics(&x, &x, 4).unwrap();
        assert_eq!((m.trustworthiness, m.continuity), (1.0, 1.0));
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rotated = Matrix::from_fn(20, 2, |i, j| {
            let (a, b) = (x.get(i, 0), x.get(i, 1));
            if j == 0 { c * a - s * b + 4.0 } else { s * a + c * b - 1.0 }
        });
        let m = neighborhood_metrics(&x, &rotated, 4).unwrap();
        assert_eq!((m.trustworthiness, m.continuity), (1.0, 1.0));
        assert!(neighborhood_metrics(&x, &x, 10).is_err());
    }

    #[test]
    fn neighborhood_swapped_pair_hand_table() {
        // Points on a line at 0..6; the embedding swaps the positions of samples 0 and 5.
        let orig = Matrix::new(6, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let emb = Matrix::new(6, 1, vec![5.0, 1.0, 2.0, 3.0, 4.0, 0.0]).unwrap();
        let m = neighborhood_metrics(&orig, &emb, 1).unwrap();
        // k = 1. Original NN: 0→1, 1→0, 2→1, 3→2, 4→3, 5→4.
        // Embedded NN:        0→4, 1→2, 2→1, 3→2, 4→0, 5→1.
        // Intruders with original ranks: (0,4) r=4, (1,2) r=2, (4,0) r=5, (5,1) r=4 → Σ(r−k) = 3+1+4+3 = 11.
        // Missing with embedded ranks: (0,1) r=4, (1,0) r=5, (4,3) r=2, (5,4) r=4 → Σ(r−k) = 3+4+1+3 = 11.
        let norm = 2.0 / (6.0 * 1.0 * (12.0 - 3.0 - 1.0));
        assert!((m.trustworthiness - (1.0 - norm * 11.0)).abs() < 1e-15);
        assert!((m.continuity - (1.0 - norm * 11.0)).abs() < 1e-15);
    }

    #[test]
    fn histograms_examples() {
        let z = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let h = distance_histograms(&z, &[0, 0, 1, 1], 2).unwrap();
        // Distances: sides 1 (four pairs), diagonals √2 (two pairs); hi = √2, split at √2/2.
        // Intra pairs: (0,1)=1, (2,3)=1. Inter: (0,2)=1, (0,3)=√2, (1,2)=√2, (1,3)=1.
        assert_eq!(h.intra, vec![0, 2]);
        assert_eq!(h.inter, vec![0, 4]);
        let h = distance_histograms(&z, &[0, 0, 1, 1], 10).unwrap();
        assert_eq!(h.intra.iter().sum::<u64>() + h.inter.iter().sum::<u64>(), 6);
        assert_eq!(h.intra[7], 2);
        assert_eq!(h.inter[7] + h.inter[9], 4);
        let single = distance_histograms(&z, &[3, 3, 3, 3], 5).unwrap();
        assert!(single.inter.iter().all(|&c| c == 0));
    }

    #[test]
    fn knn_respects_tie_rule() {
        let x = Matrix::new(4, 1, vec![0.0, 1.0, -1.0, 3.0]).unwrap();
        let nb = knn_indices(&x, 2).unwrap();
        assert_eq!(nb[0], vec![1, 2]);
        assert_eq!(nb[3], vec![1, 0]);
        assert!(knn_indices(&x, 4).is_err());
    }
}
