//! Triplet selection: semi-hard band mining, hardest-pair mining and a
//! uniform random sampler for cold starts.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    pub fn new(anchor: usize, positive: usize, negative: usize) -> Self {
        Self { anchor, positive, negative }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningStrategy {
    SemiHard,
    Hard,
    Random,
}

impl std::str::FromStr for MiningStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi-hard" => Ok(Self::SemiHard),
            "hard" => Ok(Self::Hard),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidArgument(format!("unknown mining strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for MiningStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SemiHard => "semi-hard",
            Self::Hard => "hard",
            Self::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub triplets: Vec<Triplet>,
    pub strategy: MiningStrategy,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Checks `label(a) == label(p) != label(n)` and `a != p` for every triple.
    pub fn validate(&self, labels: &[usize]) -> Result<()> {
        for t in &self.triplets {
            let n = labels.len();
            if t.anchor >= n || t.positive >= n || t.negative >= n {
                return Err(Error::InvalidArgument(format!("triplet {t:?} out of range for {n} samples")));
            }
            if t.anchor == t.positive
                || labels[t.anchor] != labels[t.positive]
                || labels[t.anchor] == labels[t.negative]
            {
                return Err(Error::InvalidArgument(format!("triplet {t:?} violates label constraints")));
            }
        }
        Ok(())
    }
}

fn check_inputs(z: &Matrix, labels: &[usize]) -> Result<()> {
    if z.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} embeddings for {} labels", z.rows(), labels.len())));
    }
    Ok(())
}

fn require_two_classes(labels: &[usize]) -> Result<()> {
    match labels.first() {
        Some(&first) if labels.iter().any(|&l| l != first) => Ok(()),
        _ => Err(Error::InvalidArgument("triplet mining needs at least two classes".into())),
    }
}

fn distance(z: &Matrix, i: usize, j: usize) -> f64 {
    z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// One random positive per anchor, then a random negative with `d_p < d_n < d_p + α`.
/// Anchors without a positive or with an empty band emit nothing.
pub fn semi_hard_mine(z: &Matrix, labels: &[usize], margin: f64, seed: u64) -> Result<TripletBatch> {
    check_inputs(z, labels)?;
    require_two_classes(labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let mut triplets = Vec::new();
    let mut band = Vec::new();
    for a in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
        let Some(&p) = positives.choose(&mut rng) else { continue };
        let d_p = distance(z, a, p);
        band.clear();
        band.extend((0..n).filter(|&j| {
            if labels[j] == labels[a] {
                return false;
            }
            let d_n = distance(z, a, j);
            d_p < d_n && d_n < d_p + margin
        }));
        if let Some(&neg) = band.choose(&mut rng) {
            triplets.push(Triplet::new(a, p, neg));
        }
    }
    Ok(TripletBatch { triplets, strategy: MiningStrategy::SemiHard })
}

/// Farthest positive and nearest negative per anchor; ties go to the smallest index.
pub fn hard_mine(z: &Matrix, labels: &[usize]) -> Result<TripletBatch> {
    check_inputs(z, labels)?;
    require_two_classes(labels)?;
    let n = labels.len();
    let mut triplets = Vec::new();
    for a in 0..n {
        let mut best_p: Option<(usize, f64)> = None;
        let mut best_n: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| j != a) {
            let d = distance(z, a, j);
            if labels[j] == labels[a] {
                if best_p.is_none_or(|(_, bd)| d > bd) {
                    best_p = Some((j, d));
                }
            } else if best_n.is_none_or(|(_, bd)| d < bd) {
                best_n = Some((j, d));
            }
        }
        if let (Some((p, _)), Some((neg, _))) = (best_p, best_n) {
            triplets.push(Triplet::new(a, p, neg));
        }
    }
    Ok(TripletBatch { triplets, strategy: MiningStrategy::Hard })
}

/// `count` label-valid triples drawn uniformly from anchors that have a positive.
pub fn random_triplets(labels: &[usize], count: usize, seed: u64) -> Result<TripletBatch> {
    require_two_classes(labels)?;
    let n = labels.len();
    let anchors: Vec<usize> = (0..n).filter(|&a| (0..n).any(|j| j != a && labels[j] == labels[a])).collect();
    if count > 0 && anchors.is_empty() {
        return Err(Error::InvalidArgument("no class has two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(count);
    for _ in 0..count {
        let a = anchors[rng.random_range(0..anchors.len())];
        let p = loop {
            let j = rng.random_range(0..n);
            if j != a && labels[j] == labels[a] {
                break j;
            }
        };
        let neg = loop {
            let j = rng.random_range(0..n);
            if labels[j] != labels[a] {
                break j;
            }
        };
        triplets.push(Triplet::new(a, p, neg));
    }
    Ok(TripletBatch { triplets, strategy: MiningStrategy::Random })
}
