//! Dense row-major matrices and N-way tensors.
//!
//! Mode-n unfolding places `dims[mode]` along the rows. Columns enumerate the
//! remaining modes in increasing axis order with the lowest remaining axis
//! varying fastest, so for a 3-way tensor unfolded at mode 1 the element
//! `(i, j, k)` lands at row `j`, column `i + I0 * k`.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, checking shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix extents must be positive, got {rows}x{cols}")));
        }
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    /// Stacks equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.set(i, j, *v);
        }
    }

    /// Copies the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(idx.len(), self.cols, data)
    }

    /// Copies the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        Matrix::from_fn(self.rows, k, |i, j| self.get(i, j))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul {:?} x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(gemm(self, false, other, false))
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "t_matmul {:?}ᵀ x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(gemm(self, true, other, false))
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "matmul_t {:?} x {:?}ᵀ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(gemm(self, false, other, true))
    }

    /// Matrix-vector product `self · x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matvec {:?} x {}",
                self.shape(),
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Largest singular value, by power iteration on `AᵀA`.
    pub fn spectral_norm(&self) -> f64 {
        let mut v = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut sigma = 0.0;
        for _ in 0..500 {
            let av = self.matvec(&v).expect("shape");
            let mut w = vec![0.0; self.cols];
            for (i, a) in av.iter().enumerate() {
                for (wj, mij) in w.iter_mut().zip(self.row(i)) {
                    *wj += a * mij;
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm.sqrt();
            w.iter_mut().for_each(|x| *x /= norm);
            v = w;
            if (next - sigma).abs() <= 1e-13 * next {
                sigma = next;
                break;
            }
            sigma = next;
        }
        sigma
    }
}

fn gemm(a: &Matrix, ta: bool, b: &Matrix, tb: bool) -> Matrix {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if tb { b.rows } else { b.cols };
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    let mut out = vec![0.0; m * n];
    // SAFETY: strides and extents describe exactly the buffers owned by `a`, `b` and `out`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Matrix::from_raw(m, n, out)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// N-way dense tensor, row-major (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("tensor extents must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {len} values, got {}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor"));
        }
        Ok(Self { dims, data })
    }

    pub(crate) fn from_raw(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), vec![0.0; dims.iter().product()])
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Self::from_raw(vec![m.rows, m.cols], m.data.clone())
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.dims).fold(0, |acc, (i, d)| acc * d + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Reinterprets the same row-major buffer with new extents.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        if dims.iter().product::<usize>() != self.data.len() || dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("cannot reshape {:?} into {dims:?}", self.dims)));
        }
        Ok(Self { dims, data: self.data })
    }

    /// Mode-n unfolding: `dims[mode]` rows, product of the other extents as columns.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        let n = self.ndims();
        if mode >= n {
            return Err(Error::ModeOutOfRange { mode, ndims: n });
        }
        let rows = self.dims[mode];
        let cols = self.data.len() / rows;
        let col_strides = unfolding_column_strides(&self.dims, mode);
        let mut out = vec![0.0; self.data.len()];
        for_each_index(&self.dims, |flat, idx| {
            let col: usize = idx.iter().zip(&col_strides).map(|(i, s)| i * s).sum();
            out[idx[mode] * cols + col] = self.data[flat];
        });
        Ok(Matrix::from_raw(rows, cols, out))
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &Matrix, mode: usize, dims: &[usize]) -> Result<Self> {
        if mode >= dims.len() {
            return Err(Error::ModeOutOfRange { mode, ndims: dims.len() });
        }
        let total: usize = dims.iter().product();
        if m.rows != dims[mode] || m.rows * m.cols != total {
            return Err(Error::DimensionMismatch(format!(
                "cannot fold {:?} into {dims:?} at mode {mode}",
                m.shape()
            )));
        }
        let col_strides = unfolding_column_strides(dims, mode);
        let mut out = vec![0.0; total];
        for_each_index(dims, |flat, idx| {
            let col: usize = idx.iter().zip(&col_strides).map(|(i, s)| i * s).sum();
            out[flat] = m.data[idx[mode] * m.cols + col];
        });
        Ok(Self::from_raw(dims.to_vec(), out))
    }

    /// n-mode product `self ×_mode m`, i.e. `fold(m · unfold(self, mode))`.
    pub fn nmode_product(&self, m: &Matrix, mode: usize) -> Result<Self> {
        if mode >= self.ndims() {
            return Err(Error::ModeOutOfRange { mode, ndims: self.ndims() });
        }
        if m.cols != self.dims[mode] {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix against mode {mode} of extent {}",
                m.rows, m.cols, self.dims[mode]
            )));
        }
        let product = m.matmul(&self.unfold(mode)?)?;
        let mut dims = self.dims.clone();
        dims[mode] = m.rows;
        Self::fold(&product, mode, &dims)
    }
}

/// Column stride of each axis in the mode-`mode` unfolding (zero for `mode` itself).
pub(crate) fn unfolding_column_strides(dims: &[usize], mode: usize) -> Vec<usize> {
    let mut strides = vec![0; dims.len()];
    let mut acc = 1;
    for (k, d) in dims.iter().enumerate() {
        if k != mode {
            strides[k] = acc;
            acc *= d;
        }
    }
    strides
}

/// Visits every multi-index in row-major order together with its flat offset.
pub(crate) fn for_each_index(dims: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    for flat in 0..total {
        f(flat, &idx);
        for axis in (0..dims.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}
