//! Datasets: synthetic image generators, connectivity preprocessing, and
//! DTN1 + CSV file I/O.
//!
//! Samples always sit on the first tensor axis. Generators derive one RNG per
//! sample from `seed ^ index`, so any sample can be regenerated on its own.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor};
use crate::tensor::{DenseTensor, Matrix};

pub const IMAGE_SIDE: usize = 64;
/// Additive pixel noise of both image generators.
pub const PIXEL_NOISE: f64 = 0.03;

pub const GALAXY_CLASSES: [&str; 4] = ["elliptical", "spiral", "lenticular", "irregular"];
pub const CRYSTAL_CLASSES: [&str; 4] = ["cubic", "hexagonal", "tetragonal", "orthorhombic"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    SyntheticGalaxy,
    SyntheticCrystal,
    Connectivity,
    Generic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// One flattened sample per row.
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub kind: DatasetKind,
    /// Shape of one sample before flattening.
    pub sample_dims: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        x: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
        kind: DatasetKind,
        sample_dims: Vec<usize>,
    ) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!("{} samples but {} labels", x.rows(), labels.len())));
        }
        if x.cols() == 0 {
            return Err(Error::Shape("samples have no features".into()));
        }
        if sample_dims.iter().product::<usize>() != x.cols() {
            return Err(Error::Shape(format!("sample dims {sample_dims:?} do not flatten to {}", x.cols())));
        }
        let classes = class_names.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} with only {classes} class names")));
        }
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&l| seen[l] = true);
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("class ids must be dense (every class needs a sample)".into()));
        }
        Ok(Self { x, labels, class_names, kind, sample_dims })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// The samples stacked along a leading axis.
    pub fn to_tensor(&self) -> DenseTensor {
        let mut dims = vec![self.len()];
        dims.extend_from_slice(&self.sample_dims);
        DenseTensor::from_raw(dims, self.x.data().to_vec())
    }
}

/// Row `i` is slice `i` of the first axis in row-major order.
pub fn vectorize_samples(t: &DenseTensor) -> Result<Matrix> {
    if t.ndims() < 2 {
        return Err(Error::Shape(format!("cannot vectorize a {}-way tensor", t.ndims())));
    }
    let n = t.dims()[0];
    let d = t.dims()[1..].iter().product();
    Matrix::new(n, d, t.data().to_vec())
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index as u64)
}

/// Adds pixel noise, then clamps to `[0, 1]`.
fn finish_image(mut img: Vec<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let peak = img.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        img.iter_mut().for_each(|v| *v /= peak);
    }
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("positive std");
    img.iter_mut().for_each(|v| *v = (*v + noise.sample(rng)).clamp(0.0, 1.0));
    img
}

fn render(mut f: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
    let mut img = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE);
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            img.push(f(c as f64, r as f64));
        }
    }
    img
}

fn balanced_labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % classes).collect()
}

fn image_dataset(n: usize, kind: DatasetKind, names: &[&str], images: Vec<Vec<f64>>) -> Result<LabeledDataset> {
    let data = images.into_iter().flatten().collect();
    LabeledDataset::new(
        Matrix::new(n, IMAGE_SIDE * IMAGE_SIDE, data)?,
        balanced_labels(n, names.len()),
        names.iter().map(|s| s.to_string()).collect(),
        kind,
        vec![IMAGE_SIDE, IMAGE_SIDE],
    )
}

/// Galaxy morphologies, class `i % 4` for sample `i`.
///
/// Elliptical: rotated anisotropic Gaussian, widths 6-10 px, axis ratio 0.5-0.9.
/// Spiral: compact bulge plus an exponential disk (scale 6-9 px) modulated by a
/// two-armed logarithmic spiral with pitch 15-25 degrees.
/// Lenticular: compact bulge plus an inclined exponential disk with axis ratio 0.2-0.35.
/// Irregular: 3-6 Gaussian clumps (2-4 px) scattered within 15 px of the centre.
pub fn generate_galaxies(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n < GALAXY_CLASSES.len() {
        return Err(Error::InvalidArgument(format!("need at least 4 galaxies, got {n}")));
    }
    let images = (0..n).map(|i| galaxy(i % 4, &mut sample_rng(seed, i))).collect();
    image_dataset(n, DatasetKind::SyntheticGalaxy, &GALAXY_CLASSES, images)
}

fn galaxy(class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let half = IMAGE_SIDE as f64 / 2.0;
    let cx = half + rng.random_range(-2.0..2.0);
    let cy = half + rng.random_range(-2.0..2.0);
    let theta: f64 = rng.random_range(0.0..PI);
    let (ct, st) = (theta.cos(), theta.sin());
    let rotate = move |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        (ct * dx + st * dy, -st * dx + ct * dy)
    };
    let img = match class {
        0 => {
            let sa = rng.random_range(6.0..10.0);
            let sb = sa * rng.random_range(0.5..0.9);
            render(|x, y| {
                let (u, v) = rotate(x, y);
                (-(u * u / (2.0 * sa * sa) + v * v / (2.0 * sb * sb))).exp()
            })
        }
        1 => {
            let h = rng.random_range(6.0..9.0);
            let pitch = rng.random_range(15.0f64..25.0).to_radians();
            let phase = rng.random_range(0.0..2.0 * PI);
            render(|x, y| {
                let (u, v) = rotate(x, y);
                let r = (u * u + v * v).sqrt().max(0.5);
                let phi = v.atan2(u);
                let arm = (0.5 * (1.0 + (2.0 * (phi - r.ln() / pitch.tan() - phase)).cos())).powi(4);
                let bulge = (-(r * r) / (2.0 * 2.0 * 2.0)).exp();
                0.8 * bulge + (-r / h).exp() * (0.15 + 0.85 * arm)
            })
        }
        2 => {
            let h = rng.random_range(6.0..9.0);
            let q = rng.random_range(0.2..0.35);
            render(|x, y| {
                let (u, v) = rotate(x, y);
                let r_disk = (u * u + (v / q) * (v / q)).sqrt();
                let r2 = u * u + v * v;
                (-(r2) / (2.0 * 1.5 * 1.5)).exp() + 0.6 * (-r_disk / h).exp()
            })
        }
        _ => {
            let clumps: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(3..=6))
                .map(|_| {
                    let rad = rng.random_range(0.0..15.0);
                    let ang = rng.random_range(0.0..2.0 * PI);
                    (cx + rad * f64::cos(ang), cy + rad * f64::sin(ang), rng.random_range(2.0..4.0), rng.random_range(0.4..1.0))
                })
                .collect();
            render(|x, y| {
                clumps
                    .iter()
                    .map(|&(px, py, s, a)| a * (-((x - px).powi(2) + (y - py).powi(2)) / (2.0 * s * s)).exp())
                    .sum()
            })
        }
    };
    finish_image(img, rng)
}

/// Gaussian spot width of the crystal lattices, in pixels.
pub const SPOT_SIGMA: f64 = 1.2;

/// Projected lattices, class `i % 4` for sample `i`, fixed orientation.
///
/// Cubic: square lattice, spacing 8 px. Hexagonal: triangular lattice, spacing 9 px.
/// Tetragonal: rectangular 8 x 12 px. Orthorhombic: rectangular 6 x 10 px with
/// 0.6 px positional jitter per spot. Every image draws a random lattice phase
/// and a spacing scale within 2 %.
pub fn generate_crystals(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n < CRYSTAL_CLASSES.len() {
        return Err(Error::InvalidArgument(format!("need at least 4 crystals, got {n}")));
    }
    let images = (0..n).map(|i| crystal(i % 4, &mut sample_rng(seed, i))).collect();
    image_dataset(n, DatasetKind::SyntheticCrystal, &CRYSTAL_CLASSES, images)
}

fn crystal(class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = rng.random_range(0.98..1.02);
    // Lattice basis vectors and per-spot jitter.
    let (a, b, jitter): ((f64, f64), (f64, f64), f64) = match class {
        0 => ((8.0, 0.0), (0.0, 8.0), 0.0),
        1 => ((9.0, 0.0), (4.5, 9.0 * 3f64.sqrt() / 2.0), 0.0),
        2 => ((8.0, 0.0), (0.0, 12.0), 0.0),
        _ => ((6.0, 0.0), (0.0, 10.0), 0.6),
    };
    let (a, b) = ((a.0 * scale, a.1 * scale), (b.0 * scale, b.1 * scale));
    let (fa, fb): (f64, f64) = (rng.random(), rng.random());
    let origin = (fa * a.0 + fb * b.0, fa * a.1 + fb * b.1);
    let jit = Normal::new(0.0, jitter.max(f64::MIN_POSITIVE)).expect("positive std");
    let extent = IMAGE_SIDE as f64 + 4.0 * SPOT_SIGMA;
    let reach = (2.0 * extent / a.0.min(b.1)).ceil() as i64 + 2;
    let mut spots = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            let mut x = origin.0 + i as f64 * a.0 + j as f64 * b.0;
            let mut y = origin.1 + i as f64 * a.1 + j as f64 * b.1;
            if x < -4.0 * SPOT_SIGMA || y < -4.0 * SPOT_SIGMA || x > extent || y > extent {
                continue;
            }
            if jitter > 0.0 {
                x += jit.sample(rng);
                y += jit.sample(rng);
            }
            spots.push((x, y));
        }
    }
    let mut img = vec![0.0; IMAGE_SIDE * IMAGE_SIDE];
    let radius = (4.0 * SPOT_SIGMA).ceil() as i64;
    for &(sx, sy) in &spots {
        let (cx, cy) = (sx.round() as i64, sy.round() as i64);
        for r in (cy - radius).max(0)..=(cy + radius).min(IMAGE_SIDE as i64 - 1) {
            for c in (cx - radius).max(0)..=(cx + radius).min(IMAGE_SIDE as i64 - 1) {
                let d2 = (c as f64 - sx).powi(2) + (r as f64 - sy).powi(2);
                img[r as usize * IMAGE_SIDE + c as usize] += (-d2 / (2.0 * SPOT_SIGMA * SPOT_SIGMA)).exp();
            }
        }
    }
    finish_image(img, rng)
}

/// Isotropic Gaussian classes; class `c` is centred at `separation · e_c`.
pub fn generate_blobs(n: usize, dim: usize, classes: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    if classes < 2 || classes > dim || n < classes {
        return Err(Error::InvalidArgument(format!("blobs need 2 <= classes <= dim and n >= classes (n={n}, dim={dim}, classes={classes})")));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit std");
    let labels = balanced_labels(n, classes);
    let mut data = Vec::with_capacity(n * dim);
    for (i, &l) in labels.iter().enumerate() {
        let mut rng = sample_rng(seed, i);
        data.extend((0..dim).map(|j| normal.sample(&mut rng) + if j == l { separation } else { 0.0 }));
    }
    LabeledDataset::new(
        Matrix::new(n, dim, data)?,
        labels,
        (0..classes).map(|c| format!("blob-{c}")).collect(),
        DatasetKind::Generic,
        vec![dim],
    )
}

/// Uniform `[0, 1)` samples of shape `sample_dims`, labelled `i % classes`.
pub fn generate_random(n: usize, sample_dims: &[usize], classes: usize, seed: u64) -> Result<LabeledDataset> {
    if classes < 1 || n < classes || sample_dims.is_empty() {
        return Err(Error::InvalidArgument("random dataset needs n >= classes >= 1 and a sample shape".into()));
    }
    let d: usize = sample_dims.iter().product();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut rng = sample_rng(seed, i);
        data.extend((0..d).map(|_| rng.random::<f64>()));
    }
    LabeledDataset::new(
        Matrix::new(n, d, data)?,
        balanced_labels(n, classes),
        (0..classes).map(|c| format!("class-{c}")).collect(),
        DatasetKind::Generic,
        sample_dims.to_vec(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub sigma: f64,
    pub bound: f64,
    pub probability: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { sigma: 0.02, bound: 3.0, probability: 0.5, seed: 0 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.bound > 0.0 && (0.0..=1.0).contains(&self.probability)) {
            return Err(Error::InvalidArgument(format!("invalid augmentation config {self:?}")));
        }
        Ok(())
    }
}

fn require_square(c: &Matrix) -> Result<()> {
    if c.rows() != c.cols() {
        return Err(Error::Shape(format!("connectivity matrix must be square, got {:?}", c.shape())));
    }
    Ok(())
}

/// Z-scores the entries of one matrix with its own mean and population std.
pub fn normalize_connectivity(c: &Matrix) -> Result<Matrix> {
    require_square(c)?;
    let n = c.data().len() as f64;
    let mean = c.data().iter().sum::<f64>() / n;
    let var = c.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(Error::Undefined("constant connectivity matrix has zero variance".into()));
    }
    let mut out = c.clone();
    out.data_mut().iter_mut().for_each(|v| *v = (*v - mean) / std);
    Ok(out)
}

/// Applies noise, symmetrization, a unit diagonal and clipping, in that order.
pub fn augment_connectivity(c: &Matrix, cfg: &AugmentConfig) -> Result<Matrix> {
    require_square(c)?;
    cfg.validate()?;
    let n = c.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noisy = c.clone();
    if cfg.sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.sigma).expect("positive std");
        noisy.data_mut().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0f64.clamp(-cfg.bound, cfg.bound)
        } else {
            (0.5 * (noisy.get(i, j) + noisy.get(j, i))).clamp(-cfg.bound, cfg.bound)
        }
    }))
}

/// Reads `index,label` rows (optional header) and maps label strings to ids
/// in order of first appearance.
pub fn read_labels_csv(text: &str, n: usize) -> Result<(Vec<usize>, Vec<String>)> {
    let mut rows: Vec<(usize, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("labels line {}: expected 'index,label'", lineno + 1)))?;
        let idx = idx.trim();
        let label = label.trim();
        match idx.parse::<usize>() {
            Ok(i) => rows.push((i, label.to_string())),
            Err(_) if lineno == 0 && rows.is_empty() => continue,
            Err(_) => return Err(Error::Format(format!("labels line {}: bad index '{idx}'", lineno + 1))),
        }
    }
    if rows.len() != n {
        return Err(Error::DimensionMismatch(format!("{} label rows for {n} samples", rows.len())));
    }
    let mut by_index: Vec<Option<&str>> = vec![None; n];
    for (i, label) in &rows {
        match by_index.get_mut(*i) {
            Some(slot @ None) => *slot = Some(label),
            Some(Some(_)) => return Err(Error::Format(format!("sample {i} labelled twice"))),
            None => return Err(Error::Format(format!("sample index {i} out of range for {n} samples"))),
        }
    }
    let mut ids = HashMap::new();
    let mut names = Vec::new();
    let mut labels = Vec::with_capacity(n);
    for (_, label) in &rows {
        if !ids.contains_key(label.as_str()) {
            ids.insert(label.as_str(), names.len());
            names.push(label.clone());
        }
    }
    for slot in by_index {
        labels.push(ids[slot.expect("every index filled")]);
    }
    Ok((labels, names))
}

pub fn write_labels_csv(ds: &LabeledDataset) -> String {
    let mut out = String::from("index,label\n");
    for (i, &l) in ds.labels.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", ds.class_names[l]));
    }
    out
}

/// Loads a sample-first DTN1 tensor and its labels CSV.
pub fn load_dataset(tensor_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let t = load_tensor(tensor_path)?;
    let x = vectorize_samples(&t)?;
    let text = fs::read_to_string(labels_path)?;
    let (labels, names) = read_labels_csv(&text, x.rows())?;
    LabeledDataset::new(x, labels, names, DatasetKind::Generic, t.dims()[1..].to_vec())
}

pub fn save_dataset(tensor_path: &Path, labels_path: &Path, ds: &LabeledDataset) -> Result<()> {
    save_tensor(tensor_path, &ds.to_tensor())?;
    fs::write(labels_path, write_labels_csv(ds))?;
    Ok(())
}
