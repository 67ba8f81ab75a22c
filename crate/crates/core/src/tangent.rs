//! Tangent spaces of the fixed-rank TT manifold.
//!
//! A tangent vector at `X` is stored through its gauge cores `Υ₁,…,Υ_d`:
//!
//! ```text
//! Y = Σ_k [U₁, …, U_{k−1}, Υ_k, V_{k+1}, …, V_d],   (U_k^L)ᵀ Υ_k^L = 0 for k < d
//! ```
//!
//! where `U_k` are the cores of the left-orthogonal representation of `X`
//! and `V_k` those of the right-orthogonal one. The terms are mutually
//! orthogonal, so `‖Y‖² = Σ_k ‖Υ_k‖²`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};
use crate::kernel::{self, Frame, SliceTable};
use crate::linalg;
use crate::rng::rng_from_seed;
use crate::tensor::{DenseTensor, Shape, SparseTensor};
use crate::tt::{tt_round, sigma_min_tt, RankTuple, TensorTrain, TtCore};

/// Gauge residual above which a projected core is projected once more.
pub const GAUGE_DRIFT_TOL: f64 = 1e-10;

/// Largest ambient size for which dense projector computations are used.
pub const EXACT_PROJECTOR_MAX: usize = 20_000;

/// Largest tangent dimension for which explicit bases are built.
pub const TANGENT_BASIS_MAX: usize = 5_000;

pub const POWER_ITERS: usize = 200;
pub const POWER_TOL: f64 = 1e-8;

#[derive(Debug)]
struct BasePoint {
    left: TensorTrain,
    right: TensorTrain,
}

/// Precomputed orthogonal forms of a base point; cheap to clone.
#[derive(Clone, Debug)]
pub struct ProjectorHandle {
    base: Arc<BasePoint>,
}

#[derive(Clone, Debug)]
pub struct TangentVector {
    base: Arc<BasePoint>,
    gauges: Vec<TtCore>,
}

impl ProjectorHandle {
    /// Fails with `NonMinimal` if the representation is rank deficient.
    pub fn new(x: &TensorTrain) -> Result<Self> {
        let d = x.order();
        let left = x.orthogonalize(d)?;
        let right = left.orthogonalize(1)?;
        Ok(Self::from_forms(left, right))
    }

    /// No minimality check; near-null directions are kept as they come
    /// out of the QR sweeps.
    pub fn new_unchecked(x: &TensorTrain) -> Self {
        let d = x.order();
        let left = x.orthogonalize_unchecked(d);
        let right = left.orthogonalize_unchecked(1);
        Self::from_forms(left, right)
    }

    fn from_forms(left: TensorTrain, right: TensorTrain) -> Self {
        ProjectorHandle { base: Arc::new(BasePoint { left, right }) }
    }

    pub fn shape(&self) -> &Shape {
        self.base.left.shape()
    }

    pub fn order(&self) -> usize {
        self.base.left.order()
    }

    pub fn ranks(&self) -> RankTuple {
        self.base.left.ranks()
    }

    /// Base point in left-orthogonal form `[U₁,…,U_{d−1},G_d]`.
    pub fn left(&self) -> &TensorTrain {
        &self.base.left
    }

    /// Base point in right-orthogonal form `[G₁,V₂,…,V_d]`.
    pub fn right(&self) -> &TensorTrain {
        &self.base.right
    }

    /// Orthonormal basis `U_{≤k}` of the left interface (k = 0 gives `[1]`).
    pub fn u_leq(&self, k: usize) -> Result<DMatrix<f64>> {
        if k == 0 {
            return Ok(DMatrix::from_element(1, 1, 1.0));
        }
        self.base.left.interface_left(k)
    }

    /// Orthonormal basis `V_{≥k+1}` of the right interface (k = d gives `[1]`).
    pub fn v_geq(&self, k: usize) -> Result<DMatrix<f64>> {
        if k == self.order() {
            return Ok(DMatrix::from_element(1, 1, 1.0));
        }
        self.base.right.interface_right(k)
    }

    pub fn zero(&self) -> TangentVector {
        let gauges = self
            .base
            .left
            .cores()
            .iter()
            .map(|c| TtCore::zeros(c.left_rank(), c.mode_size(), c.right_rank()))
            .collect();
        TangentVector { base: self.base.clone(), gauges }
    }

    fn check_shape(&self, s: &Shape) -> Result<()> {
        if s != self.shape() {
            return Err(TtError::DimensionMismatch(format!(
                "tensor of shape {:?} projected at a base of shape {:?}",
                s.dims(),
                self.shape().dims()
            )));
        }
        Ok(())
    }

    /// Apply the gauge projector `I − U_k^L (U_k^L)ᵀ` to raw cores k < d.
    pub(crate) fn gauge(&self, raw: Vec<TtCore>) -> TangentVector {
        let d = self.order();
        let gauges = raw
            .into_iter()
            .enumerate()
            .map(|(c, g)| if c + 1 < d { self.gauge_core(c, g) } else { g })
            .collect();
        TangentVector { base: self.base.clone(), gauges }
    }

    fn gauge_core(&self, c: usize, g: TtCore) -> TtCore {
        let u = self.base.left.cores()[c].left_unfold();
        let (rl, n) = (g.left_rank(), g.mode_size());
        let mut m = g.left_unfold();
        m -= &u * (u.transpose() * &m);
        let drift = (u.transpose() * &m).amax();
        if drift > GAUGE_DRIFT_TOL * m.norm().max(f64::MIN_POSITIVE) {
            m -= &u * (u.transpose() * &m);
        }
        TtCore::from_left_unfold(&m, rl, n)
    }

    /// Project a dense tensor.
    pub fn project_dense(&self, z: &DenseTensor) -> Result<TangentVector> {
        self.check_shape(z.shape())?;
        let d = self.order();
        let dims = self.shape().dims();
        let mut raw = Vec::with_capacity(d);
        for c in 0..d {
            let k = c + 1;
            let a = if k < d {
                z.unfold(k)? * self.v_geq(k)?
            } else {
                DMatrix::from_column_slice(z.data().len(), 1, z.data())
            };
            let u = self.u_leq(c)?;
            let rr = a.ncols();
            let reshaped = DMatrix::from_column_slice(u.nrows(), dims[c] * rr, a.as_slice());
            raw.push(TtCore::from_right_unfold(&(u.transpose() * reshaped), dims[c], rr));
        }
        Ok(self.gauge(raw))
    }

    /// Project a sparse tensor; O(nnz · d r²), never densifies.
    pub fn project_sparse(&self, z: &SparseTensor) -> Result<TangentVector> {
        self.check_shape(z.shape())?;
        let raw = self.frame(None).accumulate(z.indices(), z.values(), None);
        Ok(self.gauge(raw))
    }

    /// Projection of `Q* Z` for a sparse `Z` indexed in the large shape;
    /// `q = None` is the plain case.
    pub(crate) fn project_samples(
        &self,
        idx: &[usize],
        weights: &[f64],
        q: Option<&[DMatrix<f64>]>,
    ) -> TangentVector {
        let raw = self.frame(q).accumulate(idx, weights, q);
        self.gauge(raw)
    }

    /// Project a tensor train without densifying it.
    pub fn project_tt(&self, z: &TensorTrain) -> Result<TangentVector> {
        self.check_shape(z.shape())?;
        let d = self.order();
        let ucores = self.base.left.cores();
        let vcores = self.base.right.cores();
        let zc = z.cores();
        // left[c] = U_{≤c}ᵀ Z_{≤c}
        let mut left = vec![DMatrix::from_element(1, 1, 1.0)];
        for c in 0..d - 1 {
            let mut next = DMatrix::zeros(ucores[c].right_rank(), zc[c].right_rank());
            for i in 0..zc[c].mode_size() {
                next += ucores[c].slice(i).transpose() * &left[c] * zc[c].slice(i);
            }
            left.push(next);
        }
        // right[c] = V_{≥c+2}ᵀ Z_{≥c+2} (0-based core c+1 onward)
        let mut right = vec![DMatrix::from_element(1, 1, 1.0); d];
        for c in (0..d - 1).rev() {
            let core = c + 1;
            let mut next = DMatrix::zeros(vcores[core].left_rank(), zc[core].left_rank());
            for i in 0..zc[core].mode_size() {
                next += vcores[core].slice(i) * &right[core] * zc[core].slice(i).transpose();
            }
            right[c] = next;
        }
        let raw = (0..d)
            .map(|c| {
                let n = zc[c].mode_size();
                let (rl, rr) = (left[c].nrows(), right[c].nrows());
                let mut g = TtCore::zeros(rl, n, rr);
                for i in 0..n {
                    let s = &left[c] * zc[c].slice(i) * right[c].transpose();
                    for b in 0..rr {
                        for a in 0..rl {
                            g.set(a, i, b, s[(a, b)]);
                        }
                    }
                }
                g
            })
            .collect();
        Ok(self.gauge(raw))
    }

    /// `P_{≤k} Z`, k ∈ 0..=d−1 (k = 0 is the identity).
    pub fn proj_leq(&self, k: usize, z: &DenseTensor) -> Result<DenseTensor> {
        self.check_shape(z.shape())?;
        let d = self.order();
        if k >= d {
            return Err(TtError::IndexOutOfRange(format!("P_<= index {k} outside 0..={}", d - 1)));
        }
        if k == 0 {
            return Ok(z.clone());
        }
        let u = self.u_leq(k)?;
        let zk = z.unfold(k)?;
        DenseTensor::tensorize(&(&u * (u.transpose() * zk)), k, z.shape())
    }

    /// `P_{≥k+1} Z`, k ∈ 1..=d (k = d is the identity).
    pub fn proj_geq(&self, k: usize, z: &DenseTensor) -> Result<DenseTensor> {
        self.check_shape(z.shape())?;
        let d = self.order();
        if k == 0 || k > d {
            return Err(TtError::IndexOutOfRange(format!("P_>= index {} outside 2..={}", k + 1, d + 1)));
        }
        if k == d {
            return Ok(z.clone());
        }
        let v = self.v_geq(k)?;
        let zk = z.unfold(k)?;
        DenseTensor::tensorize(&((zk * &v) * v.transpose()), k, z.shape())
    }

    pub(crate) fn frame(&self, q: Option<&[DMatrix<f64>]>) -> Frame {
        Frame::new(
            kernel::tables(self.base.left.cores(), q),
            kernel::tables(self.base.right.cores(), q),
        )
    }

    /// Dimension `Σ r_{k−1}n_k r_k − Σ r_k²` of the tangent space.
    pub fn dim(&self) -> usize {
        self.ranks().manifold_dim(self.shape())
    }

    /// Map from gauge coordinates to raw core entries (cores concatenated
    /// in storage order). Columns are orthonormal and, through `embed`,
    /// orthonormal in the ambient space.
    pub fn gauge_basis(&self) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        if dim > TANGENT_BASIS_MAX {
            return Err(TtError::SizeGuard(format!(
                "tangent dimension {dim} exceeds {TANGENT_BASIS_MAX}"
            )));
        }
        let cores = self.base.left.cores();
        let params: usize = cores.iter().map(|c| c.data().len()).sum();
        let mut t = DMatrix::zeros(params, dim);
        let (mut row0, mut col) = (0usize, 0usize);
        let d = cores.len();
        for (c, core) in cores.iter().enumerate() {
            let rows = core.left_rank() * core.mode_size();
            let rr = core.right_rank();
            if c + 1 < d {
                let comp = linalg::orth_complement(&core.left_unfold());
                for b in 0..rr {
                    for j in 0..comp.ncols() {
                        for a in 0..rows {
                            t[(row0 + a + rows * b, col)] = comp[(a, j)];
                        }
                        col += 1;
                    }
                }
            } else {
                for e in 0..rows * rr {
                    t[(row0 + e, col)] = 1.0;
                    col += 1;
                }
            }
            row0 += rows * rr;
        }
        if col != dim {
            return Err(TtError::NonMinimal(format!(
                "gauge basis has {col} directions, expected {dim}"
            )));
        }
        Ok(t)
    }

    /// Tangent vector with raw core entries `coords` (concatenated cores);
    /// no gauge projection is applied.
    pub(crate) fn from_raw(&self, coords: &[f64]) -> TangentVector {
        let mut off = 0;
        let gauges = self
            .base
            .left
            .cores()
            .iter()
            .map(|c| {
                let len = c.data().len();
                let g = TtCore::new(c.left_rank(), c.mode_size(), c.right_rank(), coords[off..off + len].to_vec())
                    .expect("sizes match");
                off += len;
                g
            })
            .collect();
        TangentVector { base: self.base.clone(), gauges }
    }

    /// Orthonormal basis of the tangent space as an `∏n × dim` matrix.
    pub fn dense_basis(&self) -> Result<DMatrix<f64>> {
        let n = self.shape().numel_f64();
        if n > EXACT_PROJECTOR_MAX as f64 {
            return Err(TtError::SizeGuard(format!(
                "ambient size {n} exceeds {EXACT_PROJECTOR_MAX} for a dense tangent basis"
            )));
        }
        let t = self.gauge_basis()?;
        let mut b = DMatrix::zeros(self.shape().numel(), t.ncols());
        for j in 0..t.ncols() {
            let y = self.from_raw(t.column(j).as_slice());
            let dense = y.to_dense()?;
            b.set_column(j, &DVector::from_column_slice(dense.data()));
        }
        Ok(b)
    }

    /// Random tangent vector: Gaussian raw cores, gauge-projected.
    pub fn random_tangent(&self, seed: u64) -> TangentVector {
        let mut rng = rng_from_seed(seed);
        let raw: Vec<TtCore> = self
            .base
            .left
            .cores()
            .iter()
            .map(|c| {
                let data = (0..c.data().len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                TtCore::new(c.left_rank(), c.mode_size(), c.right_rank(), data).expect("sizes match")
            })
            .collect();
        self.gauge(raw)
    }
}

impl TangentVector {
    /// Build from explicit gauge cores; checks sizes and the gauge condition.
    pub fn from_gauges(p: &ProjectorHandle, gauges: Vec<TtCore>) -> Result<Self> {
        let base = p.left().cores();
        if gauges.len() != base.len() {
            return Err(TtError::DimensionMismatch(format!(
                "{} gauge cores for an order-{} base",
                gauges.len(),
                base.len()
            )));
        }
        for (k, (g, u)) in gauges.iter().zip(base).enumerate() {
            if (g.left_rank(), g.mode_size(), g.right_rank())
                != (u.left_rank(), u.mode_size(), u.right_rank())
            {
                return Err(TtError::DimensionMismatch(format!("gauge core {} has wrong size", k + 1)));
            }
        }
        let y = TangentVector { base: p.base.clone(), gauges };
        let defect = y.gauge_defect();
        if defect > 1e-12 * y.norm().max(1.0) {
            return Err(TtError::InvalidArgument(format!("gauge condition violated by {defect:.3e}")));
        }
        Ok(y)
    }

    pub fn gauges(&self) -> &[TtCore] {
        &self.gauges
    }

    pub fn handle(&self) -> ProjectorHandle {
        ProjectorHandle { base: self.base.clone() }
    }

    pub fn shape(&self) -> &Shape {
        self.base.left.shape()
    }

    /// `max_k max |(U_k^L)ᵀ Υ_k^L|` over k < d.
    pub fn gauge_defect(&self) -> f64 {
        let d = self.gauges.len();
        self.gauges[..d - 1]
            .iter()
            .zip(self.base.left.cores())
            .map(|(g, u)| (u.left_unfold().transpose() * g.left_unfold()).amax())
            .fold(0.0, f64::max)
    }

    fn same_base(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.base, &other.base)
            || (self.base.left == other.base.left && self.base.right == other.base.right)
        {
            Ok(())
        } else {
            Err(TtError::MismatchedBase)
        }
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_base(other)?;
        Ok(self
            .gauges
            .iter()
            .zip(&other.gauges)
            .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.gauges.iter().map(|g| g.frob_norm().powi(2)).sum::<f64>().sqrt()
    }

    /// `a·self + other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.same_base(other)?;
        let gauges = self
            .gauges
            .iter()
            .zip(&other.gauges)
            .map(|(x, y)| {
                let data = x.data().iter().zip(y.data()).map(|(p, q)| a * p + q).collect();
                TtCore::new(x.left_rank(), x.mode_size(), x.right_rank(), data).expect("same sizes")
            })
            .collect();
        Ok(TangentVector { base: self.base.clone(), gauges })
    }

    pub fn scaled(&self, a: f64) -> Self {
        TangentVector {
            base: self.base.clone(),
            gauges: self.gauges.iter().map(|g| g.scaled(a)).collect(),
        }
    }

    /// Rank-2r TT representation of the tangent vector.
    pub fn embed(&self) -> TensorTrain {
        embed_gauges(&self.base, &self.gauges)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        self.embed().to_dense()
    }

    /// `X + a·Y` as a TT of rank ≤ 2r: the base point is absorbed into the
    /// last gauge, `Υ_d ← G_d + aΥ_d`.
    pub fn base_plus(&self, a: f64) -> TensorTrain {
        let d = self.gauges.len();
        let mut g: Vec<TtCore> = self.gauges.iter().map(|c| c.scaled(a)).collect();
        let last = &self.base.left.cores()[d - 1];
        let data = last.data().iter().zip(g[d - 1].data()).map(|(x, y)| x + y).collect();
        g[d - 1] = TtCore::new(last.left_rank(), last.mode_size(), last.right_rank(), data)
            .expect("same sizes");
        embed_gauges(&self.base, &g)
    }

    /// `tt_round(X + a·Y, r)`.
    pub fn retract(&self, a: f64, r: &RankTuple) -> Result<TensorTrain> {
        tt_round(&self.base_plus(a), r)
    }

    pub(crate) fn gauge_tables(&self, q: Option<&[DMatrix<f64>]>) -> Vec<SliceTable> {
        kernel::tables(&self.gauges, q)
    }
}

fn embed_gauges(base: &BasePoint, gauges: &[TtCore]) -> TensorTrain {
    let d = gauges.len();
    let u = base.left.cores();
    let v = base.right.cores();
    let mut cores = Vec::with_capacity(d);
    for c in 0..d {
        let g = &gauges[c];
        let n = g.mode_size();
        let (rl, rr) = (g.left_rank(), g.right_rank());
        let core = if c == 0 {
            // [Υ₁ U₁]
            let mut out = TtCore::zeros(1, n, 2 * rr);
            for i in 0..n {
                for b in 0..rr {
                    out.set(0, i, b, g.get(0, i, b));
                    out.set(0, i, rr + b, u[0].get(0, i, b));
                }
            }
            out
        } else if c == d - 1 {
            // [V_d; Υ_d]
            let mut out = TtCore::zeros(2 * rl, n, 1);
            for i in 0..n {
                for a in 0..rl {
                    out.set(a, i, 0, v[c].get(a, i, 0));
                    out.set(rl + a, i, 0, g.get(a, i, 0));
                }
            }
            out
        } else {
            // [[V_k, 0], [Υ_k, U_k]]
            let mut out = TtCore::zeros(2 * rl, n, 2 * rr);
            for i in 0..n {
                for b in 0..rr {
                    for a in 0..rl {
                        out.set(a, i, b, v[c].get(a, i, b));
                        out.set(rl + a, i, b, g.get(a, i, b));
                        out.set(rl + a, i, rr + b, u[c].get(a, i, b));
                    }
                }
            }
            out
        };
        cores.push(core);
    }
    TensorTrain::new(cores).expect("block ranks are consistent")
}

fn check_same_ranks(x: &TensorTrain, y: &TensorTrain) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(TtError::DimensionMismatch("tensors have different shapes".into()));
    }
    if x.ranks() != y.ranks() {
        return Err(TtError::InvalidRank(format!(
            "TT-ranks {:?} and {:?} differ",
            x.ranks().0,
            y.ranks().0
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Exact,
    PowerIteration,
    Factored,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CurvatureGap {
    pub gap: f64,
    pub bound: f64,
    pub mode: EvalMode,
}

/// `‖(Id − P_{T_X̃})X‖_F` and the bound `‖X − X̃‖²_F / σ_min(X)`.
pub fn curvature_gap(x: &TensorTrain, xt: &TensorTrain) -> Result<CurvatureGap> {
    check_same_ranks(x, xt)?;
    let p = ProjectorHandle::new(xt)?;
    let diff = x.sub(xt)?.frob_norm();
    let bound = diff * diff / sigma_min_tt(x)?;
    let exact = x.shape().numel_f64() <= EXACT_PROJECTOR_MAX as f64;
    let gap = if exact {
        let dense = x.to_dense()?;
        dense.sub(&p.project_dense(&dense)?.to_dense()?)?.frob_norm()
    } else {
        x.sub(&p.project_tt(x)?.embed())?.frob_norm()
    };
    Ok(CurvatureGap {
        gap,
        bound,
        mode: if exact { EvalMode::Exact } else { EvalMode::Factored },
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProjectorDistance {
    pub dist: f64,
    pub bound: f64,
    pub mode: EvalMode,
}

/// `‖P_{T_X} − P_{T_X̃}‖` and the bound `2‖X − X̃‖_F / σ_min(X)`.
///
/// Exact mode (∏n ≤ 20000): both tangent spaces have the same dimension,
/// so the norm equals the sine of the largest principal angle,
/// `σ_max(B − B̃B̃ᵀB)` for orthonormal bases `B`, `B̃`.
/// Otherwise: power iteration on the dense difference operator,
/// at most 200 iterations, 1e-8 relative tolerance.
pub fn projector_distance(x: &TensorTrain, xt: &TensorTrain) -> Result<ProjectorDistance> {
    check_same_ranks(x, xt)?;
    let p = ProjectorHandle::new(x)?;
    let pt = ProjectorHandle::new(xt)?;
    let bound = 2.0 * x.sub(xt)?.frob_norm() / sigma_min_tt(x)?;
    let exact = x.shape().numel_f64() <= EXACT_PROJECTOR_MAX as f64
        && p.dim() <= TANGENT_BASIS_MAX;
    if exact {
        let b = p.dense_basis()?;
        let bt = pt.dense_basis()?;
        let resid = &b - &bt * (bt.transpose() * &b);
        let dist = linalg::spectral_norm(&resid).min(1.0);
        return Ok(ProjectorDistance { dist, bound, mode: EvalMode::Exact });
    }
    let shape = x.shape().clone();
    let mut rng = rng_from_seed(0x5eed);
    let data: Vec<f64> = (0..shape.numel()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut v = DenseTensor::new(shape, data)?;
    v = v.scale(1.0 / v.frob_norm());
    let mut est = 0.0;
    for _ in 0..POWER_ITERS {
        let w = p.project_dense(&v)?.to_dense()?.sub(&pt.project_dense(&v)?.to_dense()?)?;
        let nw = w.frob_norm();
        if nw == 0.0 {
            est = 0.0;
            break;
        }
        let done = (nw - est).abs() <= POWER_TOL * nw;
        est = nw;
        v = w.scale(1.0 / nw);
        if done {
            break;
        }
    }
    Ok(ProjectorDistance { dist: est, bound, mode: EvalMode::PowerIteration })
}
