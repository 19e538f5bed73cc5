use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use norank_cli::report::{parse_metrics_csv, parse_metrics_json, sha256_file, Manifest, METRICS_HEADER};
use tempfile::TempDir;

fn norank(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_norank"));
    cmd.args(args).env_remove("NORANK_SEED");
    if let Some(s) = seed_env {
        cmd.env("NORANK_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = norank(args, None);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn small_benchmark(out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec![
        "benchmark",
        "--generator",
        "crystal",
        "--n",
        "32",
        "--methods",
        "metric-learning,pca,tsne,cp:3",
        "--epochs",
        "2",
        "--hidden",
        "16",
        "--embedding-dim",
        "4",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    norank(&args, None)
}

#[test]
fn pca_only_crystal_gives_one_row() {
    let dir = TempDir::new().unwrap();
    ok(&["benchmark", "--generator", "crystal", "--n", "64", "--methods", "pca", "--out", dir.path().to_str().unwrap()]);
    let csv = read(&dir.path().join("metrics.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], METRICS_HEADER);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 10);
    assert_eq!(&fields[..2], &["crystal", "pca"]);
    for f in &fields[2..] {
        f.parse::<f64>().unwrap();
    }
}

#[test]
fn decomposition_rows_satisfy_explained_variance_identity() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "benchmark",
        "--generator",
        "random",
        "--n",
        "8",
        "--sample-dims",
        "8,8",
        "--classes",
        "2",
        "--methods",
        "cp:5,tucker:5",
        "--formats",
        "csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let csv = read(&dir.path().join("reconstruction.csv"));
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let eps: f64 = f[2].parse().unwrap();
        let var: f64 = f[3].parse().unwrap();
        assert!((var - (1.0 - eps * eps)).abs() <= 1e-12, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 2);
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(small_benchmark(a.path(), &[]).status.success());
    assert!(small_benchmark(b.path(), &[]).status.success());
    for name in ["metrics.csv", "metrics.json", "reconstruction.csv", "histograms.csv", "scatter_metric-learning.svg"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn manifest_hashes_every_output() {
    let dir = TempDir::new().unwrap();
    assert!(small_benchmark(dir.path(), &[]).status.success());
    let manifest: Manifest = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    let listed: Vec<&str> = manifest.files.iter().map(|e| e.path.as_str()).collect();
    for entry in &manifest.files {
        assert_eq!(sha256_file(&dir.path().join(&entry.path)).unwrap(), entry.sha256, "{}", entry.path);
    }
    for entry in fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name != "manifest.json" {
            assert!(listed.contains(&name.as_str()), "{name} missing from manifest");
        }
    }
    assert_eq!(manifest.seeds["run"], 0);
}

#[test]
fn csv_and_json_reports_agree() {
    let dir = TempDir::new().unwrap();
    assert!(small_benchmark(dir.path(), &[]).status.success());
    let from_csv = parse_metrics_csv(&read(&dir.path().join("metrics.csv"))).unwrap();
    let from_json = parse_metrics_json(&read(&dir.path().join("metrics.json"))).unwrap();
    assert_eq!(from_csv, from_json);
    assert_eq!(from_csv.len(), 4);

    let again = TempDir::new().unwrap();
    ok(&[
        "report",
        "--input",
        dir.path().join("metrics.json").to_str().unwrap(),
        "--formats",
        "csv",
        "--out",
        again.path().to_str().unwrap(),
    ]);
    assert_eq!(read(&again.path().join("metrics.csv")), read(&dir.path().join("metrics.csv")));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    for args in [
        vec!["benchmark", "--methods", "umap", "--out", out_dir],
        vec!["benchmark", "--methods", "cp:0", "--out", out_dir],
        vec!["benchmark", "--methods", "pca", "--formats", "pdf", "--out", out_dir],
        vec!["benchmark", "--config", "/nonexistent/run.json"],
    ] {
        let out = norank(&args, None);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let out = norank(&["benchmark", "--methods", "pca", "--out", out_dir], Some("not-a-number"));
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("metrics.csv").exists());
}

#[test]
fn stage_failures_exit_with_three_and_name_the_stage() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.dtn");
    let out = norank(
        &[
            "benchmark",
            "--tensor",
            missing.to_str().unwrap(),
            "--labels",
            missing.to_str().unwrap(),
            "--methods",
            "pca",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));
}

#[test]
fn seed_env_overrides_every_seed() {
    let env_dir = TempDir::new().unwrap();
    let flag_dir = TempDir::new().unwrap();
    let base_dir = TempDir::new().unwrap();
    let args = |d: &TempDir| {
        vec![
            "benchmark".to_string(),
            "--generator".into(),
            "blobs".into(),
            "--n".into(),
            "24".into(),
            "--classes".into(),
            "2".into(),
            "--methods".into(),
            "tsne,cp:2".into(),
            "--formats".into(),
            "csv".into(),
            "--out".into(),
            d.path().to_str().unwrap().into(),
        ]
    };
    assert!(norank(&refs(&args(&env_dir)), Some("17")).status.success());
    let mut flag_args = args(&flag_dir);
    flag_args.extend(["--seed".to_string(), "17".to_string()]);
    ok(&refs(&flag_args));
    ok(&refs(&args(&base_dir)));

    let metrics = |d: &TempDir| read(&d.path().join("metrics.csv"));
    assert_eq!(metrics(&env_dir), metrics(&flag_dir));
    assert_ne!(metrics(&env_dir), metrics(&base_dir));
    let manifest: Manifest = serde_json::from_str(&read(&env_dir.path().join("manifest.json"))).unwrap();
    for key in ["run", "train", "encoder", "tsne"] {
        assert_eq!(manifest.seeds[key], 17, "{key}");
    }
}

#[test]
fn generate_train_embed_evaluate_pipeline() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    ok(&["generate", "--generator", "blobs", "--n", "40", "--classes", "2", "--out", &p("data")]);
    let data = dir.path().join("data");
    for name in ["data.dtn", "labels.csv", "dataset.json", "manifest.json"] {
        assert!(data.join(name).exists(), "{name}");
    }
    let tensor = p("data/data.dtn");
    let labels = p("data/labels.csv");
    ok(&[
        "train",
        "--tensor",
        &tensor,
        "--labels",
        &labels,
        "--epochs",
        "3",
        "--hidden",
        "16",
        "--embedding-dim",
        "4",
        "--out",
        &p("model"),
    ]);
    let log = read(&dir.path().join("model/train_log.csv"));
    assert_eq!(log.lines().count(), 4);
    ok(&["embed", "--model", &p("model"), "--tensor", &tensor, "--out", &p("z.dtn")]);
    ok(&["evaluate", "--tensor", &tensor, "--labels", &labels, "--embedding", &p("z.dtn"), "--out", &p("eval")]);
    let rows = parse_metrics_csv(&read(&dir.path().join("eval/metrics.csv"))).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].silhouette.is_finite());
}

#[test]
fn decompose_reports_diagnostics() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    ok(&["generate", "--generator", "random", "--n", "6", "--sample-dims", "5,4", "--classes", "2", "--out", &p("data")]);
    for method in ["cp", "tucker"] {
        let out = ok(&["decompose", "--tensor", &p("data/data.dtn"), "--method", method, "--rank", "3", "--out", &p(method)]);
        let text = String::from_utf8_lossy(&out.stdout).to_string();
        let value = |key: &str| -> f64 {
            text.split_whitespace().find_map(|t| t.strip_prefix(key)).unwrap().parse().unwrap()
        };
        let eps = value("relative_error=");
        assert!((value("explained_variance=") - (1.0 - eps * eps)).abs() <= 1e-12);
    }
}
