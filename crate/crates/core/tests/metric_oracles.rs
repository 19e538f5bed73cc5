mod common;

use norank_core::metrics::{
    external_metrics, internal_metrics, neighborhood_metrics, separation_ratio, DistanceMatrix,
};
use norank_core::Matrix;
use proptest::prelude::*;
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

struct Instance {
    x: Matrix,
    emb: Matrix,
    labels: Vec<usize>,
    pred: Vec<usize>,
    k: usize,
}

fn instance(seed: u64) -> Instance {
    let mut r = common::rng(seed);
    let n = r.random_range(6..=30);
    let d = r.random_range(2..=5);
    let groups = r.random_range(2..=4.min(n / 2));
    let k = r.random_range(1..=(n - 1) / 2);
    Instance {
        x: common::random_matrix(n, d, seed * 3 + 1),
        emb: common::random_matrix(n, 2, seed * 3 + 2),
        labels: common::random_partition(n, groups, seed * 3 + 3),
        pred: common::random_partition(n, r.random_range(2..=4.min(n / 2)), seed * 7 + 5),
        k,
    }
}

#[test]
fn metrics_agree_with_brute_force_on_random_instances() {
    for seed in 0..100 {
        let inst = instance(seed);
        let im = internal_metrics(&inst.x, &inst.labels).unwrap();
        assert!(close(im.silhouette, common::silhouette(&inst.x, &inst.labels), 1e-10), "silhouette seed {seed}");
        assert!(close(im.davies_bouldin, common::davies_bouldin(&inst.x, &inst.labels), 1e-10), "db seed {seed}");
        assert!(close(im.calinski_harabasz, common::calinski_harabasz(&inst.x, &inst.labels), 1e-10), "ch seed {seed}");

        let ex = external_metrics(&inst.labels, &inst.pred).unwrap();
        assert!(close(ex.ari, common::ari(&inst.labels, &inst.pred), 1e-10), "ari seed {seed}");
        assert!(close(ex.nmi, common::nmi(&inst.labels, &inst.pred), 1e-10), "nmi seed {seed}");

        let sr = separation_ratio(&inst.x, &inst.labels).unwrap();
        assert!(close(sr, common::separation_ratio(&inst.x, &inst.labels), 1e-10), "sr seed {seed}");

        let nb = neighborhood_metrics(&inst.x, &inst.emb, inst.k).unwrap();
        let (t, c) = common::trust_cont(&inst.x, &inst.emb, inst.k);
        assert!(close(nb.trustworthiness, t, 1e-10), "trust seed {seed}");
        assert!(close(nb.continuity, c, 1e-10), "cont seed {seed}");
    }
}

#[test]
fn isometries_preserve_every_neighbourhood() {
    for seed in 0..20 {
        let x = common::random_matrix(25, 3, seed);
        let y = common::isometry(&x, seed + 1000);
        for k in [1, 3, 7, 12] {
            let nb = neighborhood_metrics(&x, &y, k).unwrap();
            assert_eq!((nb.trustworthiness, nb.continuity), (1.0, 1.0), "seed {seed} k {k}");
        }
    }
}

#[test]
fn distance_matrix_matches_direct_distances() {
    let x = common::random_matrix(12, 4, 3);
    let d = DistanceMatrix::new(&x);
    for i in 0..12 {
        for j in 0..12 {
            assert!((d.get(i, j) - common::dist(x.row(i), x.row(j))).abs() <= 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn external_metrics_ignore_label_names(seed in 0u64..10_000, offset in 1usize..50) {
        let truth = common::random_partition(20, 3, seed);
        let pred = common::random_partition(20, 4, seed + 1);
        let renamed: Vec<usize> = pred.iter().map(|&p| (3 - p) * 7 + offset).collect();
        let a = external_metrics(&truth, &pred).unwrap();
        let b = external_metrics(&truth, &renamed).unwrap();
        prop_assert!((a.ari - b.ari).abs() <= 1e-12);
        prop_assert!((a.nmi - b.nmi).abs() <= 1e-12);
    }

    #[test]
    fn external_metrics_are_symmetric(seed in 0u64..10_000) {
        let a = common::random_partition(18, 3, seed);
        let b = common::random_partition(18, 2, seed + 9);
        let ab = external_metrics(&a, &b).unwrap();
        let ba = external_metrics(&b, &a).unwrap();
        prop_assert!((ab.ari - ba.ari).abs() <= 1e-12);
        prop_assert!((ab.nmi - ba.nmi).abs() <= 1e-12);
        prop_assert!(ab.ari <= 1.0 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.nmi));
    }

    #[test]
    fn identical_partitions_score_one(seed in 0u64..10_000) {
        let a = common::random_partition(15, 3, seed);
        let ex = external_metrics(&a, &a).unwrap();
        prop_assert!((ex.ari - 1.0).abs() <= 1e-12);
        prop_assert!((ex.nmi - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn internal_metrics_are_bounded(seed in 0u64..10_000) {
        let x = common::random_matrix(16, 3, seed);
        let labels = common::random_partition(16, 3, seed + 1);
        let im = internal_metrics(&x, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&im.silhouette));
        prop_assert!(im.davies_bouldin >= 0.0);
        prop_assert!(im.calinski_harabasz >= 0.0);
    }

    #[test]
    fn separation_ratio_is_scale_invariant(seed in 0u64..10_000, scale in 0.1f64..10.0) {
        let x = common::random_matrix(14, 3, seed);
        let labels = common::random_partition(14, 2, seed + 1);
        let mut y = x.clone();
        y.scale(scale);
        let a = separation_ratio(&x, &labels).unwrap();
        let b = separation_ratio(&y, &labels).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }
}
