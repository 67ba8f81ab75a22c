//! Dense d-dimensional tensors.
//!
//! Entries are stored first-index-fastest: entry `(i₁,…,i_d)` lives at
//! offset `(i₁−1) + n₁(i₂−1) + n₁n₂(i₃−1) + …`. With this layout the k-th
//! unfolding is a column-major reshape, so `vec(X)` coincides with the
//! Kronecker ordering `e_{i_d} ⊗ … ⊗ e_{i₁}`.
//!
//! Mode numbers and multi-indices are 1-based in the public API.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(TtError::InvalidShape(format!(
                "need at least 2 modes, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(TtError::InvalidShape(format!("zero-sized mode in {dims:?}")));
        }
        Ok(Shape(dims))
    }

    pub fn uniform(n: usize, d: usize) -> Result<Self> {
        Shape::new(vec![n; d])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// Size of mode `k` (1-based).
    pub fn dim(&self, k: usize) -> usize {
        self.0[k - 1]
    }

    pub fn max_dim(&self) -> usize {
        *self.0.iter().max().expect("non-empty shape")
    }

    /// Total number of entries, or `None` on overflow.
    pub fn checked_numel(&self) -> Option<usize> {
        self.0.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n))
    }

    pub fn numel(&self) -> usize {
        self.checked_numel().expect("tensor size overflows usize")
    }

    /// Product of all dims as a float; never overflows.
    pub fn numel_f64(&self) -> f64 {
        self.0.iter().map(|&n| n as f64).product()
    }

    /// n₁⋯n_k (empty product is 1).
    pub fn head_size(&self, k: usize) -> usize {
        self.0[..k].iter().product()
    }

    /// n_{k+1}⋯n_d.
    pub fn tail_size(&self, k: usize) -> usize {
        self.0[k..].iter().product()
    }

    /// Flat offset of a 0-based multi-index.
    pub fn offset0(&self, idx: &[usize]) -> usize {
        let mut off = 0;
        let mut stride = 1;
        for (&i, &n) in idx.iter().zip(&self.0) {
            off += i * stride;
            stride *= n;
        }
        off
    }

    /// 0-based multi-index of a flat offset.
    pub fn unravel0(&self, mut off: usize) -> Vec<usize> {
        self.0
            .iter()
            .map(|&n| {
                let i = off % n;
                off /= n;
                i
            })
            .collect()
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = TtError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Shape::new(v)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.0
    }
}

/// A 1-based multi-index `(i₁,…,i_d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>) -> Self {
        MultiIndex(indices)
    }

    pub fn check(&self, shape: &Shape) -> Result<()> {
        if self.0.len() != shape.order() {
            return Err(TtError::IndexOutOfRange(format!(
                "index {:?} has {} entries, shape has {} modes",
                self.0,
                self.0.len(),
                shape.order()
            )));
        }
        for (k, (&i, &n)) in self.0.iter().zip(shape.dims()).enumerate() {
            if i == 0 || i > n {
                return Err(TtError::IndexOutOfRange(format!(
                    "index {} in mode {} outside 1..={}",
                    i,
                    k + 1,
                    n
                )));
            }
        }
        Ok(())
    }

    pub fn to_zero_based(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i - 1).collect()
    }

    pub fn from_zero_based(idx: &[usize]) -> Self {
        MultiIndex(idx.iter().map(|&i| i + 1).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        let numel = shape
            .checked_numel()
            .ok_or_else(|| TtError::SizeGuard(format!("shape {:?} overflows", shape.dims())))?;
        if data.len() != numel {
            return Err(TtError::DimensionMismatch(format!(
                "data length {} != product of dims {}",
                data.len(),
                numel
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        DenseTensor { shape, data: vec![0.0; n] }
    }

    /// Build from a function of the 0-based multi-index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n = shape.numel();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.order()];
        for _ in 0..n {
            data.push(f(&idx));
            for (k, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < shape.0[k] {
                    break;
                }
                *i = 0;
            }
        }
        DenseTensor { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &MultiIndex) -> Result<f64> {
        idx.check(&self.shape)?;
        Ok(self.data[self.shape.offset0(&idx.to_zero_based())])
    }

    pub fn get0(&self, idx: &[usize]) -> f64 {
        self.data[self.shape.offset0(idx)]
    }

    fn check_unfold_mode(&self, k: usize) -> Result<()> {
        let d = self.shape.order();
        if k == 0 || k >= d {
            return Err(TtError::IndexOutOfRange(format!(
                "unfolding index {k} outside 1..={}",
                d - 1
            )));
        }
        Ok(())
    }

    /// The k-th unfolding X^⟨k⟩ of size (n₁…n_k) × (n_{k+1}…n_d).
    pub fn unfold(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_unfold_mode(k)?;
        Ok(DMatrix::from_column_slice(
            self.shape.head_size(k),
            self.shape.tail_size(k),
            &self.data,
        ))
    }

    /// Mode-k flattening X_(k) of size n_k × ∏_{j≠k} n_j.
    pub fn flatten(&self, k: usize) -> Result<DMatrix<f64>> {
        let d = self.shape.order();
        if k == 0 || k > d {
            return Err(TtError::IndexOutOfRange(format!("mode {k} outside 1..={d}")));
        }
        let pre = self.shape.head_size(k - 1);
        let nk = self.shape.dim(k);
        let post = self.shape.tail_size(k);
        let mut m = DMatrix::zeros(nk, pre * post);
        for q in 0..post {
            for i in 0..nk {
                let base = pre * (i + nk * q);
                for p in 0..pre {
                    m[(i, p + pre * q)] = self.data[base + p];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn tensorize(m: &DMatrix<f64>, k: usize, shape: &Shape) -> Result<Self> {
        let d = shape.order();
        if k == 0 || k >= d {
            return Err(TtError::IndexOutOfRange(format!(
                "unfolding index {k} outside 1..={}",
                d - 1
            )));
        }
        let (rows, cols) = (shape.head_size(k), shape.tail_size(k));
        if m.shape() != (rows, cols) {
            return Err(TtError::DimensionMismatch(format!(
                "matrix is {}x{}, unfolding {k} of {:?} is {rows}x{cols}",
                m.nrows(),
                m.ncols(),
                shape.dims()
            )));
        }
        Ok(DenseTensor {
            shape: shape.clone(),
            data: m.as_slice().to_vec(),
        })
    }

    /// Mode-k product X ×_k B with B of size m × n_k.
    pub fn mode_product(&self, k: usize, b: &DMatrix<f64>) -> Result<Self> {
        let d = self.shape.order();
        if k == 0 || k > d {
            return Err(TtError::IndexOutOfRange(format!("mode {k} outside 1..={d}")));
        }
        let nk = self.shape.dim(k);
        if b.ncols() != nk {
            return Err(TtError::DimensionMismatch(format!(
                "matrix has {} columns, mode {k} has size {nk}",
                b.ncols()
            )));
        }
        let m = b.nrows();
        let pre = self.shape.head_size(k - 1);
        let post = self.shape.tail_size(k);
        let mut dims = self.shape.dims().to_vec();
        dims[k - 1] = m;
        let shape = Shape::new(dims)?;
        let mut out = vec![0.0; pre * m * post];
        for q in 0..post {
            for i in 0..nk {
                let src = &self.data[pre * (i + nk * q)..pre * (i + nk * q) + pre];
                for j in 0..m {
                    let w = b[(j, i)];
                    if w == 0.0 {
                        continue;
                    }
                    let dst = &mut out[pre * (j + m * q)..pre * (j + m * q) + pre];
                    for (o, s) in dst.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }
        }
        Ok(DenseTensor { shape, data: out })
    }

    /// Canonical basis tensor E_ω.
    pub fn basis(idx: &MultiIndex, shape: &Shape) -> Result<Self> {
        idx.check(shape)?;
        let mut t = DenseTensor::zeros(shape.clone());
        let off = shape.offset0(&idx.to_zero_based());
        t.data[off] = 1.0;
        Ok(t)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(TtError::DimensionMismatch(format!(
                "shapes {:?} and {:?} differ",
                self.shape.dims(),
                other.shape.dims()
            )));
        }
        Ok(())
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// self + a·other
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(x, y)| x + a * y).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, a: f64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }
}

/// Sparse tensor in coordinate form: 0-based multi-indices stored flat
/// (`d` entries per nonzero) with one value each. Indices may repeat;
/// repeated entries add.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor {
    shape: Shape,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseTensor {
    pub fn new(shape: Shape, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let d = shape.order();
        if indices.len() != values.len() * d {
            return Err(TtError::DimensionMismatch(format!(
                "{} index entries for {} values of a {d}-dimensional tensor",
                indices.len(),
                values.len()
            )));
        }
        for idx in indices.chunks(d) {
            for (k, (&i, &n)) in idx.iter().zip(shape.dims()).enumerate() {
                if i >= n {
                    return Err(TtError::IndexOutOfRange(format!(
                        "index {} in mode {} exceeds {n}",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(SparseTensor { shape, indices, values })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// 0-based multi-index of entry `j`.
    pub fn index(&self, j: usize) -> &[usize] {
        let d = self.shape.order();
        &self.indices[j * d..(j + 1) * d]
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        SparseTensor::new(self.shape.clone(), self.indices.clone(), values)
    }

    pub fn to_dense(&self) -> DenseTensor {
        let mut out = DenseTensor::zeros(self.shape.clone());
        for j in 0..self.nnz() {
            let off = self.shape.offset0(self.index(j));
            out.data[off] += self.values[j];
        }
        out
    }
}
