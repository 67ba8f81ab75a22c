//! Tensor trains: cores, TT-SVD, rounding, orthogonalization and
//! interface matrices.
//!
//! A core `G_k` of size `r_{k−1} × n_k × r_k` is stored first-index-fastest,
//! so its left unfolding `G_k^L` (`r_{k−1}n_k × r_k`) and right unfolding
//! `G_k^R` (`r_{k−1} × n_k r_k`) are both column-major reshapes of the same
//! buffer. The i-th subblock `G_k^{(i)} = G_k(:, i, :)` is `r_{k−1} × r_k`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};
use crate::linalg;
use crate::rng::rng_from_seed;
use crate::tensor::{DenseTensor, MultiIndex, Shape};

/// Largest tensor `to_dense` will materialize.
pub const MAX_DENSE_ENTRIES: usize = 1 << 27;

/// Relative threshold below which singular values count as zero when
/// checking minimality.
pub const MINIMALITY_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ortho {
    Left,
    Right,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TtCore {
    rl: usize,
    n: usize,
    rr: usize,
    data: Vec<f64>,
}

impl TtCore {
    pub fn new(rl: usize, n: usize, rr: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rl * n * rr {
            return Err(TtError::DimensionMismatch(format!(
                "core data length {} != {rl}·{n}·{rr}",
                data.len()
            )));
        }
        Ok(TtCore { rl, n, rr, data })
    }

    pub fn zeros(rl: usize, n: usize, rr: usize) -> Self {
        TtCore { rl, n, rr, data: vec![0.0; rl * n * rr] }
    }

    pub fn from_left_unfold(m: &DMatrix<f64>, rl: usize, n: usize) -> Self {
        debug_assert_eq!(m.nrows(), rl * n);
        TtCore { rl, n, rr: m.ncols(), data: m.as_slice().to_vec() }
    }

    pub fn from_right_unfold(m: &DMatrix<f64>, n: usize, rr: usize) -> Self {
        debug_assert_eq!(m.ncols(), n * rr);
        TtCore { rl: m.nrows(), n, rr, data: m.as_slice().to_vec() }
    }

    pub fn left_rank(&self) -> usize {
        self.rl
    }

    pub fn mode_size(&self) -> usize {
        self.n
    }

    pub fn right_rank(&self) -> usize {
        self.rr
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[a + self.rl * (i + self.n * b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, b: usize, v: f64) {
        self.data[a + self.rl * (i + self.n * b)] = v;
    }

    pub fn left_unfold(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rl * self.n, self.rr, &self.data)
    }

    pub fn right_unfold(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rl, self.n * self.rr, &self.data)
    }

    /// Subblock `G(:, i, :)` (0-based `i`).
    pub fn slice(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.rl, self.rr, |a, b| self.get(a, i, b))
    }

    /// `Σ_j w_j G(:, j, :)`.
    pub fn mixed_slice(&self, w: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rl, self.rr);
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            for b in 0..self.rr {
                for a in 0..self.rl {
                    out[(a, b)] += wj * self.get(a, j, b);
                }
            }
        }
        out
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        TtCore { data: self.data.iter().map(|v| a * v).collect(), ..*self }
    }

    /// Mode product on the middle index: `C ×₂ B` with B of size m × n.
    pub fn mode_product(&self, b: &DMatrix<f64>) -> TtCore {
        let m = b.nrows();
        let mut out = TtCore::zeros(self.rl, m, self.rr);
        for bb in 0..self.rr {
            for i in 0..self.n {
                for j in 0..m {
                    let w = b[(j, i)];
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..self.rl {
                        out.data[a + self.rl * (j + m * bb)] += w * self.get(a, i, bb);
                    }
                }
            }
        }
        out
    }
}

/// TT-rank `(r₁,…,r_{d−1})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankTuple(pub Vec<usize>);

impl RankTuple {
    pub fn new(r: Vec<usize>) -> Self {
        RankTuple(r)
    }

    pub fn uniform(r: usize, d: usize) -> Self {
        RankTuple(vec![r; d.saturating_sub(1)])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(1)
    }

    /// `(1, r₁, …, r_{d−1}, 1)`.
    pub fn with_boundary(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.0.len() + 2);
        v.push(1);
        v.extend_from_slice(&self.0);
        v.push(1);
        v
    }

    pub fn check_len(&self, shape: &Shape) -> Result<()> {
        if self.0.len() + 1 != shape.order() {
            return Err(TtError::InvalidRank(format!(
                "rank tuple of length {} for a {}-dimensional shape",
                self.0.len(),
                shape.order()
            )));
        }
        Ok(())
    }

    /// `1 ≤ r_k ≤ min(n₁⋯n_k, n_{k+1}⋯n_d)`.
    pub fn check_representable(&self, shape: &Shape) -> Result<()> {
        self.check_len(shape)?;
        let dims = shape.dims();
        for (k, &r) in self.0.iter().enumerate() {
            let left: f64 = dims[..=k].iter().map(|&n| n as f64).product();
            let right: f64 = dims[k + 1..].iter().map(|&n| n as f64).product();
            if r == 0 || (r as f64) > left.min(right) {
                return Err(TtError::InvalidRank(format!(
                    "r_{} = {r} not representable for shape {:?}",
                    k + 1,
                    dims
                )));
            }
        }
        Ok(())
    }

    /// `Σ r_{k−1}n_k r_k − Σ r_k²`.
    pub fn manifold_dim(&self, shape: &Shape) -> usize {
        let r = self.with_boundary();
        let dims = shape.dims();
        let params: usize = (0..dims.len()).map(|k| r[k] * dims[k] * r[k + 1]).sum();
        let gauge: usize = self.0.iter().map(|&x| x * x).sum();
        params - gauge
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorTrain {
    shape: Shape,
    cores: Vec<TtCore>,
    ortho: Vec<Ortho>,
}

impl TensorTrain {
    pub fn new(cores: Vec<TtCore>) -> Result<Self> {
        if cores.len() < 2 {
            return Err(TtError::InvalidShape("a tensor train needs at least 2 cores".into()));
        }
        if cores[0].rl != 1 || cores[cores.len() - 1].rr != 1 {
            return Err(TtError::InvalidRank("boundary ranks must be 1".into()));
        }
        for k in 1..cores.len() {
            if cores[k - 1].rr != cores[k].rl {
                return Err(TtError::InvalidRank(format!(
                    "core {} has right rank {} but core {} has left rank {}",
                    k,
                    cores[k - 1].rr,
                    k + 1,
                    cores[k].rl
                )));
            }
        }
        if cores.iter().any(|c| c.rl == 0 || c.rr == 0) {
            return Err(TtError::InvalidRank("zero rank".into()));
        }
        let shape = Shape::new(cores.iter().map(|c| c.n).collect())?;
        let ortho = vec![Ortho::None; cores.len()];
        Ok(TensorTrain { shape, cores, ortho })
    }

    pub(crate) fn from_parts(cores: Vec<TtCore>, ortho: Vec<Ortho>) -> Self {
        let shape = Shape::new(cores.iter().map(|c| c.n).collect()).expect("valid core sizes");
        TensorTrain { shape, cores, ortho }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[TtCore] {
        &self.cores
    }

    /// Core `k` (1-based).
    pub fn core(&self, k: usize) -> &TtCore {
        &self.cores[k - 1]
    }

    pub fn ortho(&self) -> &[Ortho] {
        &self.ortho
    }

    pub fn ranks(&self) -> RankTuple {
        RankTuple(self.cores[..self.cores.len() - 1].iter().map(|c| c.rr).collect())
    }

    pub fn num_params(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut cores = self.cores.clone();
        let last = cores.len() - 1;
        cores[last] = cores[last].scaled(a);
        let mut ortho = self.ortho.clone();
        ortho[last] = Ortho::None;
        TensorTrain { shape: self.shape.clone(), cores, ortho }
    }

    /// Entry at a 0-based multi-index; O(d r²).
    pub fn eval0(&self, idx: &[usize]) -> f64 {
        let first = &self.cores[0];
        let mut v: Vec<f64> = (0..first.rr).map(|b| first.get(0, idx[0], b)).collect();
        let mut next = Vec::new();
        for (core, &i) in self.cores.iter().zip(idx).skip(1) {
            next.clear();
            next.resize(core.rr, 0.0);
            for (b, out) in next.iter_mut().enumerate() {
                let base = core.rl * (i + core.n * b);
                *out = v.iter().zip(&core.data[base..base + core.rl]).map(|(x, g)| x * g).sum();
            }
            std::mem::swap(&mut v, &mut next);
        }
        v[0]
    }

    pub fn get(&self, idx: &MultiIndex) -> Result<f64> {
        idx.check(&self.shape)?;
        Ok(self.eval0(&idx.to_zero_based()))
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        let numel = self
            .shape
            .checked_numel()
            .filter(|&n| n <= MAX_DENSE_ENTRIES)
            .ok_or_else(|| {
                TtError::SizeGuard(format!(
                    "dense tensor of shape {:?} exceeds {MAX_DENSE_ENTRIES} entries",
                    self.shape.dims()
                ))
            })?;
        // Left interface of the full train times the trailing unit rank.
        let mut acc = self.cores[0].left_unfold();
        for core in &self.cores[1..] {
            acc = extend_left_interface(&acc, core);
        }
        debug_assert_eq!(acc.nrows(), numel);
        DenseTensor::new(self.shape.clone(), acc.as_slice().to_vec())
    }

    fn check_interface_index(&self, k: usize) -> Result<()> {
        let d = self.order();
        if k == 0 || k >= d {
            return Err(TtError::IndexOutOfRange(format!("interface {k} outside 1..={}", d - 1)));
        }
        Ok(())
    }

    /// Left interface matrix `X_{≤k}` of size (n₁…n_k) × r_k.
    pub fn interface_left(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_interface_index(k)?;
        let mut acc = self.cores[0].left_unfold();
        for core in &self.cores[1..k] {
            acc = extend_left_interface(&acc, core);
        }
        Ok(acc)
    }

    /// Right interface matrix `X_{≥k+1}` of size (n_{k+1}…n_d) × r_k.
    pub fn interface_right(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_interface_index(k)?;
        let d = self.order();
        let mut acc = self.cores[d - 1].right_unfold().transpose();
        for core in self.cores[k..d - 1].iter().rev() {
            acc = extend_right_interface(core, &acc);
        }
        Ok(acc)
    }

    /// k-orthogonal representation (1-based k): cores before k are
    /// left-orthogonal, cores after k right-orthogonal.
    pub fn orthogonalize(&self, k: usize) -> Result<Self> {
        self.orthogonalize_impl(k, true)
    }

    /// Same sweep without the minimality check; used on solver iterates
    /// that may carry near-null directions.
    pub(crate) fn orthogonalize_unchecked(&self, k: usize) -> Self {
        self.orthogonalize_impl(k, false).expect("unchecked sweep cannot fail")
    }

    fn orthogonalize_impl(&self, k: usize, check: bool) -> Result<Self> {
        let d = self.order();
        if k == 0 || k > d {
            return Err(TtError::IndexOutOfRange(format!("orthogonality centre {k} outside 1..={d}")));
        }
        let mut cores = self.cores.clone();
        let mut ortho = self.ortho.clone();
        for j in 0..k - 1 {
            if ortho[j] == Ortho::Left {
                continue;
            }
            let (q, r) = linalg::thin_qr(&cores[j].left_unfold());
            if check {
                check_triangular_factor(&r, cores[j].rr, j + 1)?;
            }
            let rl = cores[j].rl;
            let n = cores[j].n;
            cores[j] = TtCore::from_left_unfold(&q, rl, n);
            let next = &cores[j + 1];
            cores[j + 1] = TtCore::from_right_unfold(&(r * next.right_unfold()), next.n, next.rr);
            ortho[j] = Ortho::Left;
            ortho[j + 1] = Ortho::None;
        }
        for j in (k..d).rev() {
            if ortho[j] == Ortho::Right {
                continue;
            }
            let (q, r) = linalg::thin_qr(&cores[j].right_unfold().transpose());
            if check {
                check_triangular_factor(&r, cores[j].rl, j + 1)?;
            }
            let n = cores[j].n;
            let rr = cores[j].rr;
            cores[j] = TtCore::from_right_unfold(&q.transpose(), n, rr);
            let prev = &cores[j - 1];
            cores[j - 1] =
                TtCore::from_left_unfold(&(prev.left_unfold() * r.transpose()), prev.rl, prev.n);
            ortho[j] = Ortho::Right;
            ortho[j - 1] = Ortho::None;
        }
        Ok(TensorTrain { shape: self.shape.clone(), cores, ortho })
    }

    /// Singular values of every unfolding X^⟨k⟩, k = 1..d−1, computed
    /// from the cores with one orthogonalization sweep.
    pub fn unfolding_singular_values(&self) -> Vec<Vec<f64>> {
        let d = self.order();
        let mut cores = self.orthogonalize_unchecked(d).cores;
        let mut out = vec![Vec::new(); d - 1];
        for k in (1..d).rev() {
            // cores[0..k] left-orthogonal, cores[k+1..] right-orthogonal.
            let m = cores[k].right_unfold();
            out[k - 1] = linalg::singular_values(&m);
            let (q, r) = linalg::thin_qr(&m.transpose());
            let (n, rr) = (cores[k].n, cores[k].rr);
            cores[k] = TtCore::from_right_unfold(&q.transpose(), n, rr);
            let prev = &cores[k - 1];
            cores[k - 1] =
                TtCore::from_left_unfold(&(prev.left_unfold() * r.transpose()), prev.rl, prev.n);
        }
        out
    }

    /// Frobenius norm through orthogonalization (no Gram cancellation).
    pub fn frob_norm(&self) -> f64 {
        let d = self.order();
        self.orthogonalize_unchecked(d).cores[d - 1].frob_norm()
    }

    /// Block-concatenated sum `self + other` (ranks add).
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TtError::DimensionMismatch(format!(
                "shapes {:?} and {:?} differ",
                self.shape.dims(),
                other.shape.dims()
            )));
        }
        let d = self.order();
        let cores = (0..d)
            .map(|k| {
                let (a, b) = (&self.cores[k], &other.cores[k]);
                let rl = if k == 0 { 1 } else { a.rl + b.rl };
                let rr = if k == d - 1 { 1 } else { a.rr + b.rr };
                let mut c = TtCore::zeros(rl, a.n, rr);
                let (boff_l, boff_r) = (if k == 0 { 0 } else { a.rl }, if k == d - 1 { 0 } else { a.rr });
                for i in 0..a.n {
                    for x in 0..a.rr {
                        for y in 0..a.rl {
                            c.set(y, i, x, a.get(y, i, x));
                        }
                    }
                    for x in 0..b.rr {
                        for y in 0..b.rl {
                            c.set(y + boff_l, i, x + boff_r, b.get(y, i, x));
                        }
                    }
                }
                c
            })
            .collect();
        TensorTrain::new(cores)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }
}

/// `(I_{n_k} ⊗ A) G_k^L`: rows `p + N·i` hold `A[p,:] G_k^{(i)}`.
pub(crate) fn extend_left_interface(acc: &DMatrix<f64>, core: &TtCore) -> DMatrix<f64> {
    let rows = acc.nrows();
    let mut out = DMatrix::zeros(rows * core.n, core.rr);
    for i in 0..core.n {
        let block = acc * core.slice(i);
        out.view_mut((rows * i, 0), (rows, core.rr)).copy_from(&block);
    }
    out
}

/// `(B ⊗ I_{n_k}) (G_k^R)ᵀ`: rows `i + n_k·q` hold `G_k^{(i)} B[q,:]ᵀ`.
pub(crate) fn extend_right_interface(core: &TtCore, acc: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = acc.nrows();
    let n = core.n;
    let mut out = DMatrix::zeros(n * rows, core.rl);
    for i in 0..n {
        // (rows × rr) · (rr × rl)
        let block = acc * core.slice(i).transpose();
        for q in 0..rows {
            for a in 0..core.rl {
                out[(i + n * q, a)] = block[(q, a)];
            }
        }
    }
    out
}

fn check_triangular_factor(r: &DMatrix<f64>, rank: usize, core: usize) -> Result<()> {
    if r.nrows() < rank {
        return Err(TtError::NonMinimal(format!(
            "core {core}: unfolding has fewer rows/cols than its rank {rank}"
        )));
    }
    let s = linalg::singular_values(r);
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = s.last().copied().unwrap_or(0.0);
    if smax == 0.0 || smin <= MINIMALITY_TOL * smax {
        return Err(TtError::NonMinimal(format!(
            "core {core}: unfolding is rank deficient (σ_min/σ_max = {:.3e})",
            if smax == 0.0 { 0.0 } else { smin / smax }
        )));
    }
    Ok(())
}

/// Discarded spectral tail per step, reported alongside TT-SVD.
#[derive(Clone, Debug)]
pub struct TtSvdReport {
    /// τ_k² = sum of squared singular values dropped at step k.
    pub discarded_sq: Vec<f64>,
}

impl TtSvdReport {
    pub fn error_bound(&self) -> f64 {
        self.discarded_sq.iter().sum::<f64>().sqrt()
    }
}

/// Truncated TT-SVD. Ranks are capped at `min(r_k, rows, cols)` of the
/// matrix seen at step k; they are never inflated.
pub fn tt_svd(x: &DenseTensor, r: &RankTuple) -> Result<TensorTrain> {
    tt_svd_with_report(x, r).map(|(tt, _)| tt)
}

pub fn tt_svd_with_report(x: &DenseTensor, r: &RankTuple) -> Result<(TensorTrain, TtSvdReport)> {
    let shape = x.shape();
    r.check_len(shape)?;
    let d = shape.order();
    let dims = shape.dims();
    let mut cores = Vec::with_capacity(d);
    let mut discarded = Vec::with_capacity(d - 1);
    let mut rest: Vec<f64> = x.data().to_vec();
    let mut rl = 1usize;
    for k in 0..d - 1 {
        let rows = rl * dims[k];
        let cols = rest.len() / rows;
        let m = DMatrix::from_column_slice(rows, cols, &rest);
        let f = linalg::svd(&m);
        let keep = r.0[k].min(f.s.len());
        discarded.push(f.s[keep..].iter().map(|s| s * s).sum());
        let u = f.u.columns(0, keep).into_owned();
        cores.push(TtCore::from_left_unfold(&u, rl, dims[k]));
        let sv = DMatrix::from_diagonal(&DVector::from_column_slice(&f.s[..keep]))
            * f.vt.rows(0, keep);
        rest = sv.as_slice().to_vec();
        rl = keep;
    }
    cores.push(TtCore::new(rl, dims[d - 1], 1, rest)?);
    let mut ortho = vec![Ortho::Left; d];
    ortho[d - 1] = Ortho::None;
    Ok((TensorTrain::from_parts(cores, ortho), TtSvdReport { discarded_sq: discarded }))
}

/// TT rounding: right-to-left QR sweep, then left-to-right truncated SVD.
/// Produces the same tensor as `tt_svd(to_dense(x), r)` at O(d n R³) cost.
pub fn tt_round(x: &TensorTrain, r: &RankTuple) -> Result<TensorTrain> {
    r.check_len(x.shape())?;
    let d = x.order();
    let mut cores = x.orthogonalize_unchecked(1).cores;
    for k in 0..d - 1 {
        let (rl, n) = (cores[k].rl, cores[k].n);
        let f = linalg::svd(&cores[k].left_unfold());
        let keep = r.0[k].min(f.s.len());
        cores[k] = TtCore::from_left_unfold(&f.u.columns(0, keep).into_owned(), rl, n);
        let sv = DMatrix::from_diagonal(&DVector::from_column_slice(&f.s[..keep]))
            * f.vt.rows(0, keep);
        let next = &cores[k + 1];
        cores[k + 1] = TtCore::from_right_unfold(&(sv * next.right_unfold()), next.n, next.rr);
    }
    let mut ortho = vec![Ortho::Left; d];
    ortho[d - 1] = Ortho::None;
    Ok(TensorTrain::from_parts(cores, ortho))
}

/// Numerical TT-rank of a dense tensor: singular values of each unfolding
/// above `tol·σ_max` of that unfolding.
pub fn tt_rank(x: &DenseTensor, tol: f64) -> Result<RankTuple> {
    if tol < 0.0 {
        return Err(TtError::InvalidArgument(format!("negative tolerance {tol}")));
    }
    let d = x.shape().order();
    let ranks = (1..d)
        .map(|k| {
            let s = linalg::singular_values(&x.unfold(k)?);
            let smax = s.first().copied().unwrap_or(0.0);
            Ok(if smax == 0.0 { 0 } else { s.iter().filter(|&&v| v > tol * smax).count() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankTuple(ranks))
}

/// TT-rank read off a tensor train without densifying.
pub fn tt_rank_of_train(x: &TensorTrain, tol: f64) -> RankTuple {
    RankTuple(
        x.unfolding_singular_values()
            .iter()
            .map(|s| {
                let smax = s.first().copied().unwrap_or(0.0);
                if smax == 0.0 { 0 } else { s.iter().filter(|&&v| v > tol * smax).count() }
            })
            .collect(),
    )
}

fn harmonic_sigma_min(spectra: &[Vec<f64>]) -> Result<f64> {
    let mut acc = 0.0;
    for s in spectra {
        let smax = s.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return Err(TtError::InvalidArgument("σ_min of the zero tensor".into()));
        }
        let smin = s
            .iter()
            .copied()
            .filter(|&v| v > MINIMALITY_TOL * smax)
            .fold(f64::INFINITY, f64::min);
        acc += 1.0 / smin;
    }
    Ok(1.0 / acc)
}

/// `(Σ_k 1/σ_min(X^⟨k⟩))⁻¹`, the harmonic mean of the smallest positive
/// singular values of the unfoldings.
pub fn sigma_min_dense(x: &DenseTensor) -> Result<f64> {
    let d = x.shape().order();
    let spectra = (1..d)
        .map(|k| Ok(linalg::singular_values(&x.unfold(k)?)))
        .collect::<Result<Vec<_>>>()?;
    harmonic_sigma_min(&spectra)
}

pub fn sigma_min_tt(x: &TensorTrain) -> Result<f64> {
    harmonic_sigma_min(&x.unfolding_singular_values())
}

/// Random TT with i.i.d. standard normal core entries (ChaCha8 stream,
/// cores filled in order, each in storage order).
pub fn gaussian_tt(shape: &Shape, r: &RankTuple, seed: u64) -> Result<TensorTrain> {
    r.check_representable(shape)?;
    let mut rng = rng_from_seed(seed);
    let full = r.with_boundary();
    let cores = shape
        .dims()
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let len = full[k] * n * full[k + 1];
            let data: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            TtCore::new(full[k], n, full[k + 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    TensorTrain::new(cores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
        a.sub(b).unwrap().frob_norm() / b.frob_norm().max(1e-300)
    }

    // Literal nested sum over α's.
    fn naive_entry(x: &TensorTrain, idx: &[usize]) -> f64 {
        let r = x.ranks().with_boundary();
        let d = x.order();
        let mut alphas = vec![0usize; d + 1];
        let mut total = 0.0;
        loop {
            let mut p = 1.0;
            for k in 0..d {
                p *= x.cores()[k].get(alphas[k], idx[k], alphas[k + 1]);
            }
            total += p;
            let mut k = 1;
            loop {
                if k == d {
                    return total;
                }
                alphas[k] += 1;
                if alphas[k] < r[k] {
                    break;
                }
                alphas[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn to_dense_matches_naive_sum() {
        let x = gaussian_tt(&shape(&[3, 4, 2, 3]), &RankTuple::new(vec![2, 3, 2]), 11).unwrap();
        let dense = x.to_dense().unwrap();
        let s = x.shape().clone();
        for off in 0..s.numel() {
            let idx = s.unravel0(off);
            let want = naive_entry(&x, &idx);
            assert!((dense.data()[off] - want).abs() < 1e-12 * (1.0 + want.abs()));
            assert!((x.eval0(&idx) - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn all_ones_rank_one() {
        let cores = vec![
            TtCore::new(1, 3, 1, vec![1.0; 3]).unwrap(),
            TtCore::new(1, 2, 1, vec![1.0; 2]).unwrap(),
            TtCore::new(1, 4, 1, vec![1.0; 4]).unwrap(),
        ];
        let x = TensorTrain::new(cores).unwrap();
        assert!(x.to_dense().unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn d2_is_matrix_product() {
        let x = gaussian_tt(&shape(&[4, 5]), &RankTuple::new(vec![2]), 3).unwrap();
        let g1 = x.core(1).left_unfold();
        let g2 = x.core(2).right_unfold();
        let dense = x.to_dense().unwrap().unfold(1).unwrap();
        assert!((dense - &g1 * &g2).norm() < 1e-12);
        assert_eq!(x.interface_left(1).unwrap(), g1);
        assert_eq!(x.interface_right(1).unwrap(), g2.transpose());
    }

    #[test]
    fn interface_factorization() {
        let x = gaussian_tt(&shape(&[3, 4, 3, 2]), &RankTuple::new(vec![2, 3, 2]), 5).unwrap();
        let dense = x.to_dense().unwrap();
        for k in 1..4 {
            let lhs = dense.unfold(k).unwrap();
            let rhs = x.interface_left(k).unwrap() * x.interface_right(k).unwrap().transpose();
            assert!((&lhs - rhs).norm() <= 1e-12 * lhs.norm());
        }
        assert!(x.interface_left(0).is_err());
        assert!(x.interface_right(4).is_err());
    }

    #[test]
    fn left_orthogonal_interfaces_are_orthonormal() {
        let x = gaussian_tt(&shape(&[3, 4, 3, 2]), &RankTuple::new(vec![2, 3, 2]), 6).unwrap();
        let l = x.orthogonalize(4).unwrap();
        for k in 1..4 {
            let u = l.interface_left(k).unwrap();
            assert!(linalg::orthonormality_defect(&u) < 1e-12);
            assert!(linalg::orthonormality_defect(&l.core(k).left_unfold()) < 1e-12);
        }
    }

    #[test]
    fn orthogonalize_preserves_tensor_and_carries_norm() {
        let x = gaussian_tt(&shape(&[4, 5, 3, 4]), &RankTuple::new(vec![3, 3, 2]), 9).unwrap();
        let dense = x.to_dense().unwrap();
        for k in 1..=4 {
            let y = x.orthogonalize(k).unwrap();
            assert!(rel(&y.to_dense().unwrap(), &dense) < 1e-12);
            assert!((y.core(k).frob_norm() - dense.frob_norm()).abs() < 1e-12 * dense.frob_norm());
            for j in 1..k {
                assert!(linalg::orthonormality_defect(&y.core(j).left_unfold()) < 1e-12);
            }
            for j in k + 1..=4 {
                let v = y.core(j).right_unfold().transpose();
                assert!(linalg::orthonormality_defect(&v) < 1e-12);
            }
        }
        let l = x.orthogonalize(4).unwrap();
        let again = l.orthogonalize(4).unwrap();
        assert!(rel(&again.to_dense().unwrap(), &l.to_dense().unwrap()) < 1e-14);
    }

    #[test]
    fn orthogonalize_detects_non_minimal() {
        let mut cores = gaussian_tt(&shape(&[3, 3, 3]), &RankTuple::new(vec![2, 2]), 1)
            .unwrap()
            .cores()
            .to_vec();
        // Duplicate the first rank column so the left unfolding is rank 1.
        for i in 0..3 {
            let v = cores[0].get(0, i, 0);
            cores[0].set(0, i, 1, v);
        }
        let x = TensorTrain::new(cores).unwrap();
        assert!(matches!(x.orthogonalize(3), Err(TtError::NonMinimal(_))));
    }

    #[test]
    fn tt_svd_rank_one_exact() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0];
        let w = [0.5, 0.25, -1.0, 2.0];
        let x = DenseTensor::from_fn(shape(&[3, 2, 4]), |i| u[i[0]] * v[i[1]] * w[i[2]]);
        let tt = tt_svd(&x, &RankTuple::new(vec![1, 1])).unwrap();
        assert!(tt.to_dense().unwrap().sub(&x).unwrap().frob_norm() <= 1e-12 * x.frob_norm());
        assert_eq!(tt_rank(&x, 1e-10).unwrap().0, vec![1, 1]);
        for k in 1..=3 {
            assert_eq!(linalg::svd(&x.flatten(k).unwrap()).rank(1e-10), 1);
        }
    }

    #[test]
    fn tt_svd_error_within_tail_bound() {
        let x = DenseTensor::from_fn(shape(&[4, 5, 3, 4]), |i| {
            ((i[0] * 7 + i[1] * 3 + i[2] * 11 + i[3] * 5) % 13) as f64 - 6.0
        });
        for r in [vec![1, 1, 1], vec![2, 3, 2], vec![3, 4, 3]] {
            let r = RankTuple::new(r);
            let (tt, report) = tt_svd_with_report(&x, &r).unwrap();
            let err = tt.to_dense().unwrap().sub(&x).unwrap().frob_norm();
            assert!(err <= report.error_bound() * (1.0 + 1e-12) + 1e-12);
            // Tails of the true unfoldings bound it as well.
            let tails: f64 = (1..4)
                .map(|k| {
                    let s = linalg::singular_values(&x.unfold(k).unwrap());
                    s[r.0[k - 1].min(s.len())..].iter().map(|v| v * v).sum::<f64>()
                })
                .sum();
            assert!(err * err <= tails * (1.0 + 1e-10) + 1e-20);
            let got = tt.ranks();
            assert!(got.0.iter().zip(&r.0).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn zero_tensor_rank() {
        let z = DenseTensor::zeros(shape(&[3, 4, 2]));
        assert_eq!(tt_rank(&z, 1e-10).unwrap().0, vec![0, 0]);
        assert!(sigma_min_dense(&z).is_err());
    }

    #[test]
    fn round_identity_and_collapse() {
        let x = gaussian_tt(&shape(&[4, 3, 5, 3]), &RankTuple::new(vec![2, 3, 2]), 21).unwrap();
        let y = tt_round(&x, &x.ranks()).unwrap();
        assert!(rel(&y.to_dense().unwrap(), &x.to_dense().unwrap()) < 1e-12);

        // a∘b∘c + a∘(2b)∘c has rank 1
        let a = TtCore::new(1, 3, 1, vec![1.0, 2.0, -1.0]).unwrap();
        let b = TtCore::new(1, 4, 1, vec![0.5, -0.5, 1.0, 3.0]).unwrap();
        let c = TtCore::new(1, 2, 1, vec![2.0, 1.0]).unwrap();
        let t1 = TensorTrain::new(vec![a.clone(), b.clone(), c.clone()]).unwrap();
        let t2 = TensorTrain::new(vec![a, b.scaled(2.0), c]).unwrap();
        let s = t1.add(&t2).unwrap();
        assert_eq!(s.ranks().0, vec![2, 2]);
        let rounded = tt_round(&s, &RankTuple::new(vec![1, 1])).unwrap();
        let want = t1.scaled(3.0).to_dense().unwrap();
        assert!(rel(&rounded.to_dense().unwrap(), &want) < 1e-13);
    }

    #[test]
    fn round_matches_dense_tt_svd() {
        let a = gaussian_tt(&shape(&[4, 5, 3, 4]), &RankTuple::new(vec![3, 4, 3]), 8).unwrap();
        let r = RankTuple::new(vec![2, 2, 2]);
        let rounded = tt_round(&a, &r).unwrap().to_dense().unwrap();
        let dense = tt_svd(&a.to_dense().unwrap(), &r).unwrap().to_dense().unwrap();
        assert!(rel(&rounded, &dense) < 1e-10);
    }

    #[test]
    fn sigma_min_cases() {
        let x = gaussian_tt(&shape(&[5, 4]), &RankTuple::new(vec![3]), 4).unwrap();
        let dense = x.to_dense().unwrap();
        let s = linalg::singular_values(&dense.unfold(1).unwrap());
        assert!((sigma_min_tt(&x).unwrap() - s[2]).abs() < 1e-10 * s[2]);

        let y = gaussian_tt(&shape(&[3, 4, 3, 2]), &RankTuple::new(vec![2, 3, 2]), 2).unwrap();
        let dense = y.to_dense().unwrap();
        let a = sigma_min_tt(&y).unwrap();
        let b = sigma_min_dense(&dense).unwrap();
        assert!((a - b).abs() < 1e-10 * b);

        // Identity-like tensor with all unfolding σ_min = 1: s/(d−1).
        let e = DenseTensor::from_fn(shape(&[2, 2, 2]), |i| {
            if i[0] == i[1] && i[1] == i[2] { 1.0 } else { 0.0 }
        });
        assert!((sigma_min_dense(&e).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gaussian_is_deterministic() {
        let s = shape(&[5, 5, 5]);
        let r = RankTuple::new(vec![2, 2]);
        assert_eq!(gaussian_tt(&s, &r, 42).unwrap(), gaussian_tt(&s, &r, 42).unwrap());
        assert_ne!(gaussian_tt(&s, &r, 42).unwrap(), gaussian_tt(&s, &r, 43).unwrap());
        assert!(gaussian_tt(&s, &RankTuple::new(vec![6, 2]), 1).is_err());
    }

    #[test]
    fn manifold_dim_matrix_case() {
        let r = RankTuple::new(vec![3]);
        assert_eq!(r.manifold_dim(&shape(&[10, 10])), 3 * (20 - 3));
    }
}
