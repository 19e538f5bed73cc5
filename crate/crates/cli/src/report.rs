//! Table, plot and manifest writers.
//!
//! CSV numbers use Rust's shortest round-trip formatting, so a CSV → JSON →
//! CSV cycle is lossless. Non-finite values are written as `NaN`, `inf` and
//! `-inf` in both formats (as strings in JSON).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use norank_core::decomp::DecompDiagnostics;
use norank_core::metrics::{DistanceHistograms, MetricsReport};
use norank_core::Matrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ReportFormat;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "dataset,method,Sil.,DB,CH,SR,Cont.,Trust.,ARI,NMI";

/// Ten-colour categorical palette; class `c` uses entry `c % 10`.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

mod lossless_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One metrics-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub method: String,
    #[serde(with = "lossless_f64")]
    pub silhouette: f64,
    #[serde(with = "lossless_f64")]
    pub davies_bouldin: f64,
    #[serde(with = "lossless_f64")]
    pub calinski_harabasz: f64,
    #[serde(with = "lossless_f64")]
    pub separation_ratio: f64,
    #[serde(with = "lossless_f64")]
    pub continuity: f64,
    #[serde(with = "lossless_f64")]
    pub trustworthiness: f64,
    #[serde(with = "lossless_f64")]
    pub ari: f64,
    #[serde(with = "lossless_f64")]
    pub nmi: f64,
}

impl MetricsRow {
    pub fn new(dataset: &str, method: &str, r: &MetricsReport) -> Self {
        Self {
            dataset: dataset.into(),
            method: method.into(),
            silhouette: r.silhouette,
            davies_bouldin: r.davies_bouldin,
            calinski_harabasz: r.calinski_harabasz,
            separation_ratio: r.separation_ratio,
            continuity: r.continuity,
            trustworthiness: r.trustworthiness,
            ari: r.ari,
            nmi: r.nmi,
        }
    }

    fn values(&self) -> [f64; 8] {
        [
            self.silhouette,
            self.davies_bouldin,
            self.calinski_harabasz,
            self.separation_ratio,
            self.continuity,
            self.trustworthiness,
            self.ari,
            self.nmi,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub schema_version: u32,
    pub rows: Vec<MetricsRow>,
}

fn check_field(s: &str) -> CliResult<&str> {
    if s.contains([',', '\n', '"']) {
        return Err(CliError::Config(format!("'{s}' cannot be written to CSV")));
    }
    Ok(s)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> CliResult<String> {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = write!(out, "{},{}", check_field(&r.dataset)?, check_field(&r.method)?);
        for v in r.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_metrics_csv(text: &str) -> CliResult<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(CliError::Config("metrics CSV header does not match".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(CliError::Config(format!("metrics CSV row has {} fields: '{line}'", f.len())));
            }
            let num = |i: usize| {
                f[i].parse::<f64>().map_err(|_| CliError::Config(format!("bad number '{}' in metrics CSV", f[i])))
            };
            Ok(MetricsRow {
                dataset: f[0].into(),
                method: f[1].into(),
                silhouette: num(2)?,
                davies_bouldin: num(3)?,
                calinski_harabasz: num(4)?,
                separation_ratio: num(5)?,
                continuity: num(6)?,
                trustworthiness: num(7)?,
                ari: num(8)?,
                nmi: num(9)?,
            })
        })
        .collect()
}

pub fn metrics_json(rows: &[MetricsRow]) -> String {
    let table = MetricsTable { schema_version: SCHEMA_VERSION, rows: rows.to_vec() };
    serde_json::to_string_pretty(&table).expect("plain data serializes") + "\n"
}

pub fn parse_metrics_json(text: &str) -> CliResult<Vec<MetricsRow>> {
    let table: MetricsTable = serde_json::from_str(text).map_err(|e| CliError::Config(format!("metrics JSON: {e}")))?;
    if table.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!("unsupported metrics schema version {}", table.schema_version)));
    }
    Ok(table.rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionRow {
    pub dataset: String,
    pub method: String,
    pub diagnostics: DecompDiagnostics,
}

pub fn reconstruction_csv(rows: &[ReconstructionRow]) -> String {
    let mut out = String::from("dataset,method,relative_error,explained_variance\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.dataset, r.method, r.diagnostics.relative_error, r.diagnostics.explained_variance
        );
    }
    out
}

pub fn histograms_csv(dataset: &str, hists: &[(String, DistanceHistograms)]) -> String {
    let mut out = String::from("dataset,method,bin_start,bin_end,intra,inter\n");
    for (method, h) in hists {
        for b in 0..h.intra.len() {
            let _ = writeln!(out, "{dataset},{method},{},{},{},{}", h.edges[b], h.edges[b + 1], h.intra[b], h.inter[b]);
        }
    }
    out
}

/// Axis-aligned scatter plot of the first two columns, coloured by class.
pub fn scatter_svg(points: &Matrix, labels: &[usize], title: &str) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 24.0;
    let (n, d) = points.shape();
    let coord = |i: usize, c: usize| if c < d { points.get(i, c) } else { 0.0 };
    let range = |c: usize| {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = coord(i, c);
            if v.is_finite() {
                (lo.min(v), hi.max(v))
            } else {
                (lo, hi)
            }
        });
        if lo.is_finite() && hi > lo {
            (lo, hi - lo)
        } else {
            (lo.min(0.0).max(-1.0) - 0.5, 1.0)
        }
    };
    let ((x0, xs), (y0, ys)) = (range(0), range(1));
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
        title.replace('&', "&amp;").replace('<', "&lt;")
    );
    let span = SIZE - 2.0 * PAD;
    for (i, &label) in labels.iter().enumerate().take(n) {
        let (x, y) = (coord(i, 0), coord(i, 1));
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let px = PAD + (x - x0) / xs * span;
        let py = SIZE - PAD - (y - y0) / ys * span;
        let _ = writeln!(svg, "<circle cx=\"{px:.3}\" cy=\"{py:.3}\" r=\"3\" fill=\"{}\"/>", PALETTE[label % PALETTE.len()]);
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(CliError::io(&path))?;
    Ok(path)
}

/// Writes the metrics table in `formats` (SVG is ignored here: plots need embeddings).
///
/// Every output is rendered before anything touches the disk, so a failure
/// leaves no partial files behind.
pub fn emit_report(rows: &[MetricsRow], formats: &[ReportFormat], dir: &Path) -> CliResult<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(CliError::Config("no metric rows to report".into()));
    }
    let mut rendered = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Csv => rendered.push(("metrics.csv", metrics_csv(rows)?)),
            ReportFormat::Json => rendered.push(("metrics.json", metrics_json(rows))),
            ReportFormat::Svg => {}
        }
    }
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    rendered.iter().map(|(name, text)| write_file(dir, name, text)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub seeds: serde_json::Value,
    pub config: serde_json::Value,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes `files` (relative to `dir`) and writes `manifest.json`.
pub fn write_manifest(
    dir: &Path,
    files: &[PathBuf],
    seeds: serde_json::Value,
    config: serde_json::Value,
) -> CliResult<PathBuf> {
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
        entries.push(ManifestEntry { path: rel, sha256: sha256_file(f)? });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seeds,
        config,
        files: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("plain data serializes") + "\n";
    write_file(dir, "manifest.json", &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, base: f64) -> MetricsRow {
        MetricsRow {
            dataset: "crystal".into(),
            method: method.into(),
            silhouette: base,
            davies_bouldin: 0.1 + base / 3.0,
            calinski_harabasz: 1.0e9 * base,
            separation_ratio: f64::INFINITY,
            continuity: f64::NAN,
            trustworthiness: 1.0 / 3.0,
            ari: -0.5,
            nmi: 0.999_999_999_999_999_9,
        }
    }

    fn same(a: &MetricsRow, b: &MetricsRow) -> bool {
        a.dataset == b.dataset
            && a.method == b.method
            && a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits())
    }

    #[test]
    fn csv_json_csv_round_trip_is_lossless() {
        let rows = vec![row("pca", 0.123_456_789_012_345_67), row("cp:5", std::f64::consts::PI)];
        let csv = metrics_csv(&rows).unwrap();
        let from_csv = parse_metrics_csv(&csv).unwrap();
        let from_json = parse_metrics_json(&metrics_json(&from_csv)).unwrap();
        assert!(rows.iter().zip(&from_json).all(|(a, b)| same(a, b)));
        assert_eq!(metrics_csv(&from_json).unwrap(), csv);
    }

    #[test]
    fn single_row_matches_table_header() {
        let csv = metrics_csv(&[row("pca", 0.5)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "dataset,method,Sil.,DB,CH,SR,Cont.,Trust.,ARI,NMI");
        assert_eq!(lines[1].split(',').count() - 2, 8);
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(emit_report(&[], &[ReportFormat::Csv, ReportFormat::Json], &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn scatter_uses_palette_and_is_stable() {
        let pts = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let a = scatter_svg(&pts, &[0, 1, 12], "t");
        assert_eq!(a, scatter_svg(&pts, &[0, 1, 12], "t"));
        assert_eq!(a.matches("<circle").count(), 3);
        assert!(a.contains(PALETTE[0]) && a.contains(PALETTE[1]) && a.contains(PALETTE[2]));
    }

    #[test]
    fn manifest_lists_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let f = write_file(dir.path(), "a.txt", "abc").unwrap();
        let m = write_manifest(dir.path(), &[f], serde_json::json!({}), serde_json::json!({})).unwrap();
        let parsed: Manifest = serde_json::from_str(&fs::read_to_string(m).unwrap()).unwrap();
        assert_eq!(parsed.files[0].path, "a.txt");
        assert_eq!(parsed.files[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
