//! Feed-forward encoder onto the unit sphere, with manual backpropagation.
//!
//! Hidden layers are `ReLU(W·h + b)`; the last affine output `v` is divided by
//! its ℓ2 norm. An optional two-layer projection head `W₂·ReLU(W₁·z)` can sit
//! on top during training.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::decomp::{self, read_json, write_json, DecompDiagnostics};
use crate::error::{Error, Result};
use crate::io::{load_matrix, save_matrix};
use crate::linalg::least_squares;
use crate::tensor::{dot, Matrix};

/// Pre-normalization norms below this are rejected instead of regularized.
pub const NORM_EPSILON: f64 = 1e-12;
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 256];
pub const DEFAULT_EMBEDDING_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_out x fan_in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros_like(&self) -> Self {
        Self { weight: Matrix::zeros(self.weight.rows(), self.weight.cols()), bias: vec![0.0; self.bias.len()] }
    }
}

/// `p = W₂ · ReLU(W₁ · z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub w1: Matrix,
    pub w2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<DenseLayer>,
    pub head: Option<ProjectionHead>,
    pub seed: u64,
}

/// Gradients share the parameter layout.
pub type EncoderGrads = EncoderParams;

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let normal = Normal::new(0.0, std).expect("positive std");
    Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// He initialization for ReLU layers, `N(0, 1/fan_in)` for the output layer, zero biases.
pub fn init_params(input_dim: usize, hidden: &[usize], embedding_dim: usize, head: bool, seed: u64) -> Result<EncoderParams> {
    if input_dim == 0 || embedding_dim == 0 || hidden.contains(&0) {
        return Err(Error::InvalidArgument("encoder widths must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widths = vec![input_dim];
    widths.extend_from_slice(hidden);
    widths.push(embedding_dim);
    let last = widths.len() - 2;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l == last { 1.0 } else { 2.0 };
            DenseLayer {
                weight: gaussian_matrix(fan_out, fan_in, (gain / fan_in as f64).sqrt(), &mut rng),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    let head = head.then(|| {
        let d = embedding_dim;
        ProjectionHead {
            w1: gaussian_matrix(d, d, (2.0 / d as f64).sqrt(), &mut rng),
            w2: gaussian_matrix(d, d, (1.0 / d as f64).sqrt(), &mut rng),
        }
    });
    Ok(EncoderParams { layers, head, seed })
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").weight.rows()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.weight.rows()).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(DenseLayer::zeros_like).collect(),
            head: self.head.as_ref().map(|h| ProjectionHead {
                w1: Matrix::zeros(h.w1.rows(), h.w1.cols()),
                w2: Matrix::zeros(h.w2.rows(), h.w2.cols()),
            }),
            seed: self.seed,
        }
    }

    /// Every parameter block in a fixed order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(l.weight.data());
            out.push(&l.bias);
        }
        if let Some(h) = &self.head {
            out.push(h.w1.data());
            out.push(h.w2.data());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.data_mut());
            out.push(&mut l.bias);
        }
        if let Some(h) = &mut self.head {
            out.push(h.w1.data_mut());
            out.push(h.w2.data_mut());
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.blocks().iter().map(|b| dot(b, b)).sum::<f64>().sqrt()
    }

    /// `self -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &EncoderGrads, lr: f64) {
        for (p, g) in self.blocks_mut().into_iter().zip(grads.blocks()) {
            for (a, b) in p.iter_mut().zip(g) {
                *a -= lr * b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values of a single-sample forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Affine outputs of every layer, the last one being `v`.
    pub pre_activations: Vec<Vec<f64>>,
    /// ReLU outputs of the hidden layers.
    pub activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    pub output_norm: f64,
    pub z: Vec<f64>,
}

pub fn forward(params: &EncoderParams, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input of length {} for an encoder expecting {}",
            x.len(),
            params.input_dim()
        )));
    }
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut activations = Vec::with_capacity(params.layers.len() - 1);
    let mut h = x.to_vec();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut a = layer.weight.matvec(&h)?;
        for (ai, bi) in a.iter_mut().zip(&layer.bias) {
            *ai += bi;
        }
        if l + 1 < params.layers.len() {
            h = a.iter().map(|v| v.max(0.0)).collect();
            activations.push(h.clone());
        } else {
            h = a.clone();
        }
        pre_activations.push(a);
    }
    let norm = dot(&h, &h).sqrt();
    if !(norm >= NORM_EPSILON) {
        return Err(Error::NormalizationSingularity(norm));
    }
    let z = h.iter().map(|v| v / norm).collect();
    Ok(ForwardTrace { pre_activations, activations, output: h, output_norm: norm, z })
}

/// Intermediate values of a batched forward pass (one sample per row).
#[derive(Debug, Clone)]
pub struct BatchTrace {
    pub input: Matrix,
    pub pre_activations: Vec<Matrix>,
    pub activations: Vec<Matrix>,
    pub norms: Vec<f64>,
    /// Unit-norm embeddings.
    pub z: Matrix,
    pub head: Option<HeadTrace>,
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub pre: Matrix,
    pub hidden: Matrix,
    pub p: Matrix,
}

impl BatchTrace {
    /// The representation the training losses see: `p` with a head, `z` otherwise.
    pub fn loss_space(&self) -> &Matrix {
        self.head.as_ref().map_or(&self.z, |h| &h.p)
    }
}

fn affine(h: &Matrix, layer: &DenseLayer) -> Result<Matrix> {
    let mut a = h.matmul_t(&layer.weight)?;
    for i in 0..a.rows() {
        for (v, b) in a.row_mut(i).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(a)
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn forward_batch(params: &EncoderParams, x: &Matrix) -> Result<BatchTrace> {
    if x.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "inputs of width {} for an encoder expecting {}",
            x.cols(),
            params.input_dim()
        )));
    }
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut activations = Vec::with_capacity(params.layers.len() - 1);
    for (l, layer) in params.layers.iter().enumerate() {
        let input = if l == 0 { x } else { &activations[l - 1] };
        let a = affine(input, layer)?;
        if l + 1 < params.layers.len() {
            activations.push(relu(&a));
        }
        pre_activations.push(a);
    }
    let v = pre_activations.last().expect("at least one layer");
    let mut z = v.clone();
    let mut norms = Vec::with_capacity(v.rows());
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        let norm = dot(row, row).sqrt();
        if !(norm >= NORM_EPSILON) {
            return Err(Error::NormalizationSingularity(norm));
        }
        row.iter_mut().for_each(|e| *e /= norm);
        norms.push(norm);
    }
    let head = match &params.head {
        Some(h) => {
            let pre = z.matmul_t(&h.w1)?;
            let hidden = relu(&pre);
            let p = hidden.matmul_t(&h.w2)?;
            Some(HeadTrace { pre, hidden, p })
        }
        None => None,
    };
    Ok(BatchTrace { input: x.clone(), pre_activations, activations, norms, z, head })
}

/// Unit-norm embeddings of every row of `x`.
pub fn embed(params: &EncoderParams, x: &Matrix) -> Result<Matrix> {
    // Chunked so the first-layer activations of large datasets stay small.
    const CHUNK: usize = 256;
    let mut data = Vec::with_capacity(x.rows() * params.embedding_dim());
    let idx: Vec<usize> = (0..x.rows()).collect();
    for chunk in idx.chunks(CHUNK) {
        let trace = forward_batch(params, &x.select_rows(chunk))?;
        data.extend_from_slice(trace.z.data());
    }
    Matrix::new(x.rows(), params.embedding_dim(), data)
}

fn mask_relu(grad: &mut Matrix, pre: &Matrix) {
    for (g, a) in grad.data_mut().iter_mut().zip(pre.data()) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut s = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (a, b) in s.iter_mut().zip(m.row(i)) {
            *a += b;
        }
    }
    s
}

/// Parameter gradients given `∂L/∂(loss space)` for every row of the batch.
pub fn backward(params: &EncoderParams, trace: &BatchTrace, upstream: &Matrix) -> Result<EncoderGrads> {
    let out = trace.loss_space();
    if upstream.shape() != out.shape() {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient {:?} for outputs {:?}",
            upstream.shape(),
            out.shape()
        )));
    }
    let mut grads = params.zeros_like();
    let grad_z = match (&params.head, &trace.head) {
        (Some(h), Some(t)) => {
            let g = grads.head.as_mut().expect("head layout");
            g.w2 = upstream.t_matmul(&t.hidden)?;
            let mut g_pre = upstream.matmul(&h.w2)?;
            mask_relu(&mut g_pre, &t.pre);
            g.w1 = g_pre.t_matmul(&trace.z)?;
            g_pre.matmul(&h.w1)?
        }
        (None, None) => upstream.clone(),
        _ => return Err(Error::InvalidArgument("trace does not match encoder head".into())),
    };
    // Normalization Jacobian (I − zzᵀ)/‖v‖.
    let mut delta = grad_z;
    for i in 0..delta.rows() {
        let z = trace.z.row(i);
        let radial = dot(z, delta.row(i));
        let inv = 1.0 / trace.norms[i];
        for (g, zj) in delta.row_mut(i).iter_mut().zip(z) {
            *g = (*g - radial * zj) * inv;
        }
    }
    for l in (0..params.layers.len()).rev() {
        let input = if l == 0 { &trace.input } else { &trace.activations[l - 1] };
        grads.layers[l].weight = delta.t_matmul(input)?;
        grads.layers[l].bias = column_sums(&delta);
        if l > 0 {
            let mut next = delta.matmul(&params.layers[l].weight)?;
            mask_relu(&mut next, &trace.pre_activations[l - 1]);
            delta = next;
        }
    }
    Ok(grads)
}

/// Affine map from embeddings back to flattened inputs, `x̂ = W·z + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder {
    /// `D x d`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let n = m.rows() as f64;
    column_sums(m).into_iter().map(|s| s / n).collect()
}

fn centered(m: &Matrix, means: &[f64]) -> Matrix {
    let mut c = m.clone();
    for i in 0..c.rows() {
        for (v, mu) in c.row_mut(i).iter_mut().zip(means) {
            *v -= mu;
        }
    }
    c
}

/// Least-squares decoder; the intercept is left unregularized.
pub fn fit_linear_decoder(z: &Matrix, x: &Matrix, ridge: f64) -> Result<LinearDecoder> {
    if z.rows() != x.rows() {
        return Err(Error::DimensionMismatch(format!("{} embeddings for {} samples", z.rows(), x.rows())));
    }
    let mz = column_means(z);
    let mx = column_means(x);
    let coef = least_squares(&centered(z, &mz), &centered(x, &mx), ridge)?;
    let weight = coef.transpose();
    let shift = weight.matvec(&mz)?;
    let bias = mx.iter().zip(&shift).map(|(a, b)| a - b).collect();
    Ok(LinearDecoder { weight, bias })
}

impl LinearDecoder {
    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        let mut out = z.matmul_t(&self.weight)?;
        for i in 0..out.rows() {
            for (v, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Reconstruction error of `x` from its embeddings `z`.
    pub fn diagnostics(&self, z: &Matrix, x: &Matrix) -> Result<DecompDiagnostics> {
        let x_hat = self.decode(z)?;
        if x_hat.shape() != x.shape() {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", x_hat.shape(), x.shape())));
        }
        Ok(decomp::from_error(decomp::relative_error(x.data(), x_hat.data())))
    }
}

#[derive(Serialize, Deserialize)]
struct EncoderManifest {
    input_dim: usize,
    hidden: Vec<usize>,
    embedding_dim: usize,
    seed: u64,
    head: bool,
}

/// Writes one DTN1 file per weight and bias plus `encoder.json`.
pub fn save_params(dir: &Path, params: &EncoderParams) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (l, layer) in params.layers.iter().enumerate() {
        save_matrix(dir.join(format!("layer_{l}_weight.dtn")), &layer.weight)?;
        let bias = Matrix::new(1, layer.bias.len(), layer.bias.clone())?;
        save_matrix(dir.join(format!("layer_{l}_bias.dtn")), &bias)?;
    }
    if let Some(h) = &params.head {
        save_matrix(dir.join("head_w1.dtn"), &h.w1)?;
        save_matrix(dir.join("head_w2.dtn"), &h.w2)?;
    }
    let manifest = EncoderManifest {
        input_dim: params.input_dim(),
        hidden: params.hidden_widths(),
        embedding_dim: params.embedding_dim(),
        seed: params.seed,
        head: params.head.is_some(),
    };
    write_json(&dir.join("encoder.json"), &manifest)
}

pub fn load_params(dir: &Path) -> Result<EncoderParams> {
    let manifest: EncoderManifest = read_json(&dir.join("encoder.json"))?;
    let n_layers = manifest.hidden.len() + 1;
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let weight = load_matrix(dir.join(format!("layer_{l}_weight.dtn")))?;
        let bias = load_matrix(dir.join(format!("layer_{l}_bias.dtn")))?.into_data();
        if bias.len() != weight.rows() {
            return Err(Error::Format(format!("layer {l}: bias length {} vs {} outputs", bias.len(), weight.rows())));
        }
        layers.push(DenseLayer { weight, bias });
    }
    let head = if manifest.head {
        Some(ProjectionHead { w1: load_matrix(dir.join("head_w1.dtn"))?, w2: load_matrix(dir.join("head_w2.dtn"))? })
    } else {
        None
    };
    let params = EncoderParams { layers, head, seed: manifest.seed };
    if params.input_dim() != manifest.input_dim || params.embedding_dim() != manifest.embedding_dim {
        return Err(Error::Format("encoder manifest disagrees with stored weights".into()));
    }
    Ok(params)
}
