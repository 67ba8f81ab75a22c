//! Coherence of subspaces, interface matrices and TT-cores; the projection
//! bounds built from them; empirical RIP constants on tangent spaces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};
use crate::kernel::Frame;
use crate::linalg;
use crate::sampling::SampleSet;
use crate::tangent::{EvalMode, ProjectorHandle, TangentVector, POWER_ITERS, POWER_TOL};
use crate::tensor::Shape;
use crate::tt::{RankTuple, TensorTrain};

/// Interface matrices with more rows than this are not enumerated.
pub const INTERFACE_ROWS_MAX: usize = 1_000_000;

/// Largest grid scanned by `projection_coherence`.
pub const PROJECTION_SCAN_MAX: usize = 10_000_000;

/// `μ(U) = (n/r) max_i ‖row_i(U)‖²` for `U` with orthonormal columns.
pub fn subspace_coherence(u: &DMatrix<f64>) -> Result<f64> {
    let (n, r) = u.shape();
    if r == 0 || n < r {
        return Err(TtError::InvalidArgument(format!("{n}×{r} basis has no valid column span")));
    }
    let defect = linalg::orthonormality_defect(u);
    if defect > 1e-10 {
        return Err(TtError::InvalidArgument(format!(
            "columns are not orthonormal (defect {defect:.3e})"
        )));
    }
    Ok(row_coherence(u))
}

fn row_coherence(u: &DMatrix<f64>) -> f64 {
    let (n, r) = u.shape();
    let max = u.row_iter().map(|row| row.norm_squared()).fold(0.0, f64::max);
    n as f64 / r as f64 * max
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InterfaceCoherence {
    /// `μ(A_{≤k})`, k = 1..d−1; `None` past the enumeration guard.
    pub left: Vec<Option<f64>>,
    /// `μ(A_{≥k+1})`, k = 1..d−1.
    pub right: Vec<Option<f64>>,
    /// Maximum over all interfaces, when every one was enumerated.
    pub mu_i: Option<f64>,
}

/// Coherences of all interface matrices, enumerated row by row.
pub fn interface_coherence(x: &TensorTrain) -> Result<InterfaceCoherence> {
    let p = ProjectorHandle::new(x)?;
    interface_coherence_at(&p)
}

pub(crate) fn interface_coherence_at(p: &ProjectorHandle) -> Result<InterfaceCoherence> {
    let d = p.order();
    let shape = p.shape();
    let mut left = Vec::with_capacity(d - 1);
    let mut right = Vec::with_capacity(d - 1);
    for k in 1..d {
        let rows_l = shape.dims()[..k].iter().map(|&n| n as f64).product::<f64>();
        let rows_r = shape.dims()[k..].iter().map(|&n| n as f64).product::<f64>();
        left.push(if rows_l <= INTERFACE_ROWS_MAX as f64 {
            Some(row_coherence(&p.u_leq(k)?))
        } else {
            None
        });
        right.push(if rows_r <= INTERFACE_ROWS_MAX as f64 {
            Some(row_coherence(&p.v_geq(k)?))
        } else {
            None
        });
    }
    let mu_i = left
        .iter()
        .chain(&right)
        .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)));
    Ok(InterfaceCoherence { left, right, mu_i })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoreCoherence {
    /// `μ_L^{(k)}`, k = 1..d−1.
    pub left: Vec<f64>,
    /// `μ_R^{(k)}`, k = 2..d.
    pub right: Vec<f64>,
    pub mu_c: f64,
}

/// Left coherence `(r n / s) max_i ‖U^{(i)}‖₂²` of a left-orthogonal core.
pub fn left_core_coherence(core: &crate::tt::TtCore) -> f64 {
    let (r, n, s) = (core.left_rank(), core.mode_size(), core.right_rank());
    let max = (0..n).map(|i| linalg::spectral_norm(&core.slice(i)).powi(2)).fold(0.0, f64::max);
    (r * n) as f64 / s as f64 * max
}

/// Right coherence `(s n / r) max_i ‖V^{(i)}‖₂²` of a right-orthogonal core.
pub fn right_core_coherence(core: &crate::tt::TtCore) -> f64 {
    let (r, n, s) = (core.left_rank(), core.mode_size(), core.right_rank());
    let max = (0..n).map(|i| linalg::spectral_norm(&core.slice(i)).powi(2)).fold(0.0, f64::max);
    (s * n) as f64 / r as f64 * max
}

pub fn core_coherence(x: &TensorTrain) -> Result<CoreCoherence> {
    let p = ProjectorHandle::new(x)?;
    Ok(core_coherence_at(&p))
}

pub(crate) fn core_coherence_at(p: &ProjectorHandle) -> CoreCoherence {
    let d = p.order();
    let left: Vec<f64> = p.left().cores()[..d - 1].iter().map(left_core_coherence).collect();
    let right: Vec<f64> = p.right().cores()[1..].iter().map(right_core_coherence).collect();
    let mu_c = left.iter().chain(&right).copied().fold(0.0, f64::max);
    CoreCoherence { left, right, mu_c }
}

fn check_bound_inputs(shape: &Shape, r: &RankTuple, mus: &[f64]) -> Result<()> {
    r.check_len(shape)?;
    if mus.iter().any(|&m| !(m > 0.0)) {
        return Err(TtError::InvalidArgument("coherence bounds must be positive".into()));
    }
    Ok(())
}

/// `C₀ = μ₀/∏n · (n₁r₁ + μ₀ Σ_{k=2}^{d−1} r_{k−1}n_k r_k + r_{d−1}n_d)`.
pub fn bound_c0(mu0: f64, shape: &Shape, r: &RankTuple) -> Result<f64> {
    check_bound_inputs(shape, r, &[mu0])?;
    let n = shape.dims();
    let rb = r.with_boundary();
    let d = n.len();
    let inner: f64 = (1..d - 1).map(|k| (rb[k] * n[k] * rb[k + 1]) as f64).sum();
    let edges = (n[0] * rb[1]) as f64 + (rb[d - 1] * n[d - 1]) as f64;
    Ok(mu0 / shape.numel_f64() * (edges + mu0 * inner))
}

/// `C₁ = μ₁^{d−1}/∏n · Σ_k r_{k−1}n_k r_k`.
pub fn bound_c1(mu1: f64, shape: &Shape, r: &RankTuple) -> Result<f64> {
    check_bound_inputs(shape, r, &[mu1])?;
    let n = shape.dims();
    let rb = r.with_boundary();
    let sum: f64 = (0..n.len()).map(|k| (rb[k] * n[k] * rb[k + 1]) as f64).sum();
    Ok(mu1.powi(n.len() as i32 - 1) / shape.numel_f64() * sum)
}

/// `C₂ = μ₁^{d−1} μ₂/∏n · Σ_k r_{k−1}m_k r_k` for a large shape `n` and
/// side-information dimensions `m`.
pub fn bound_c2(mu1: f64, mu2: f64, shape_n: &Shape, shape_m: &Shape, r: &RankTuple) -> Result<f64> {
    check_bound_inputs(shape_n, r, &[mu1, mu2])?;
    if shape_m.order() != shape_n.order() {
        return Err(TtError::DimensionMismatch("n and m shapes differ in order".into()));
    }
    let m = shape_m.dims();
    let rb = r.with_boundary();
    let sum: f64 = (0..m.len()).map(|k| (rb[k] * m[k] * rb[k + 1]) as f64).sum();
    Ok(mu1.powi(m.len() as i32 - 1) * mu2 / shape_n.numel_f64() * sum)
}

/// `max_ω ‖P_{T_X} E_ω‖²_F` over the whole grid.
pub fn projection_coherence(x: &TensorTrain) -> Result<f64> {
    let p = ProjectorHandle::new(x)?;
    projection_scan(&p, None, x.shape())
}

/// Exhaustive `max_ω ‖P Q* E_ω‖²` using the closed form
/// `Σ_{k<d} (‖l_{k−1}‖²‖q_k‖² − ‖l_k‖²)‖v_{k+1}‖² + ‖l_{d−1}‖²‖q_d‖²`,
/// with `l`, `v` the sampled rows of the orthonormal interface bases and
/// `q_k` the rows of `Q_k` (all ones without side information).
pub(crate) fn projection_scan(
    p: &ProjectorHandle,
    q: Option<&[DMatrix<f64>]>,
    grid: &Shape,
) -> Result<f64> {
    let total = grid
        .checked_numel()
        .filter(|&n| n <= PROJECTION_SCAN_MAX)
        .ok_or_else(|| TtError::SizeGuard(format!("grid {:?} too large to scan", grid.dims())))?;
    let frame = p.frame(q);
    let d = grid.order();
    let qnorm: Vec<Vec<f64>> = match q {
        Some(q) => q.iter().map(|m| m.row_iter().map(|r| r.norm_squared()).collect()).collect(),
        None => grid.dims().iter().map(|&n| vec![1.0; n]).collect(),
    };
    let mut s = frame.sweep_buffers();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let mut best = 0.0f64;
    for off in 0..total {
        let w = grid.unravel0(off);
        frame.sweep(&w, &mut s);
        let mut val = 0.0;
        for c in 0..d - 1 {
            let l_prev = sq(&s.left[c]) * qnorm[c][w[c]];
            let l_here = sq(&s.left[c + 1]);
            val += (l_prev - l_here) * sq(&s.right[c]);
        }
        val += sq(&s.left[d - 1]) * qnorm[d - 1][w[d - 1]];
        best = best.max(val);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RipEstimate {
    pub eps: f64,
    pub rho: f64,
    pub mode: EvalMode,
}

/// `ε̂ = ‖P − ρ⁻¹ P R_Ω P‖` restricted to `T_X M_r`.
pub fn rip_estimate(x: &TensorTrain, omega: &SampleSet) -> Result<RipEstimate> {
    if x.shape() != omega.shape() {
        return Err(TtError::DimensionMismatch("sample and tensor shapes differ".into()));
    }
    let p = ProjectorHandle::new(x)?;
    rip_estimate_at(&p, omega, None)
}

/// Exact mode: with `T` the gauge basis and `F` the rows of derivatives of
/// `Y ↦ (QY)(ω)` over unique samples, `ε̂ = max|eig(ρ⁻¹ TᵀFᵀWF T − I)|`,
/// `W` the multiplicities. Above the basis guard: power iteration on the
/// tangent operator, at most 200 iterations, 1e-8 relative tolerance.
pub(crate) fn rip_estimate_at(
    p: &ProjectorHandle,
    omega: &SampleSet,
    q: Option<&[DMatrix<f64>]>,
) -> Result<RipEstimate> {
    let rho = omega.rho();
    let frame = p.frame(q);
    match p.gauge_basis() {
        Ok(t) => {
            let f = derivative_rows(p, &frame, omega, q);
            let w = DVector::from_iterator(
                omega.unique_len(),
                omega.multiplicities().iter().map(|&m| m as f64),
            );
            let ft = &f * &t;
            let mut wf = ft.clone();
            for (mut row, &wi) in wf.row_iter_mut().zip(w.iter()) {
                row *= wi;
            }
            let mut g = ft.transpose() * wf / rho;
            for i in 0..g.nrows() {
                g[(i, i)] -= 1.0;
            }
            Ok(RipEstimate { eps: linalg::sym_abs_max_eig(&g), rho, mode: EvalMode::Exact })
        }
        Err(TtError::SizeGuard(_)) => {
            let eps = power_rip(p, &frame, omega, q, rho);
            Ok(RipEstimate { eps, rho, mode: EvalMode::PowerIteration })
        }
        Err(e) => Err(e),
    }
}

fn derivative_rows(
    p: &ProjectorHandle,
    frame: &Frame,
    omega: &SampleSet,
    q: Option<&[DMatrix<f64>]>,
) -> DMatrix<f64> {
    let cores = p.left().cores();
    let d = cores.len();
    let offsets: Vec<usize> = cores
        .iter()
        .scan(0, |acc, c| {
            let o = *acc;
            *acc += c.data().len();
            Some(o)
        })
        .collect();
    let params: usize = cores.iter().map(|c| c.data().len()).sum();
    let mut f = DMatrix::zeros(omega.unique_len(), params);
    let mut s = frame.sweep_buffers();
    for (row, w) in omega.unique_flat().chunks(d).enumerate() {
        frame.sweep(w, &mut s);
        for c in 0..d {
            let (rl, m, rr) = (cores[c].left_rank(), cores[c].mode_size(), cores[c].right_rank());
            for b in 0..rr {
                for a in 0..rl {
                    let lv = s.left[c][a] * s.right[c][b];
                    match q {
                        None => {
                            f[(row, offsets[c] + a + rl * (w[c] + m * b))] = lv;
                        }
                        Some(q) => {
                            for j in 0..m {
                                f[(row, offsets[c] + a + rl * (j + m * b))] = q[c][(w[c], j)] * lv;
                            }
                        }
                    }
                }
            }
        }
    }
    f
}

fn power_rip(
    p: &ProjectorHandle,
    frame: &Frame,
    omega: &SampleSet,
    q: Option<&[DMatrix<f64>]>,
    rho: f64,
) -> f64 {
    let apply = |y: &TangentVector| -> TangentVector {
        let vals = frame.eval_tangent(&y.gauge_tables(q), omega.unique_flat());
        let weights: Vec<f64> = vals
            .iter()
            .zip(omega.multiplicities())
            .map(|(v, &m)| m as f64 * v / rho)
            .collect();
        let py = p.project_samples(omega.unique_flat(), &weights, q);
        y.axpy(-1.0, &py).expect("same base")
    };
    let mut y = p.random_tangent(0x5eed);
    y = y.scaled(1.0 / y.norm());
    let mut est = 0.0;
    for _ in 0..POWER_ITERS {
        let z = apply(&y);
        let nz = z.norm();
        if nz == 0.0 {
            return 0.0;
        }
        let done = (nz - est).abs() <= POWER_TOL * nz;
        est = nz;
        y = z.scaled(1.0 / nz);
        if done {
            break;
        }
    }
    est
}

/// Density `ρ ≥ (8/3)(C/ε²) dβ log n` sufficient for RIP with constant ε.
pub fn predicted_rip_density(c: f64, eps: f64, beta: f64, d: usize, n: usize) -> f64 {
    8.0 / 3.0 * c / (eps * eps) * d as f64 * beta * (n as f64).ln()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub shape: Vec<usize>,
    pub ranks: Vec<usize>,
    pub mu_interface_left: Vec<Option<f64>>,
    pub mu_interface_right: Vec<Option<f64>>,
    pub mu_i: Option<f64>,
    /// "exhaustive" when every interface was enumerated, otherwise "bound"
    /// (then only `μ_C^k` is available for the skipped interfaces).
    pub interface_mode: String,
    pub mu_l: Vec<f64>,
    pub mu_r: Vec<f64>,
    pub mu_c: f64,
    pub c0: Option<f64>,
    pub c1: f64,
    pub c2: Option<f64>,
    pub mu_side: Option<Vec<f64>>,
    pub projection_coherence: Option<f64>,
}

impl CoherenceReport {
    pub fn new(x: &TensorTrain) -> Result<Self> {
        let p = ProjectorHandle::new(x)?;
        let ic = interface_coherence_at(&p)?;
        let cc = core_coherence_at(&p);
        let shape = x.shape();
        let r = x.ranks();
        let c0 = ic.mu_i.map(|m| bound_c0(m, shape, &r)).transpose()?;
        let c1 = bound_c1(cc.mu_c, shape, &r)?;
        let proj = match projection_scan(&p, None, shape) {
            Ok(v) => Some(v),
            Err(TtError::SizeGuard(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(CoherenceReport {
            shape: shape.dims().to_vec(),
            ranks: r.0.clone(),
            interface_mode: if ic.mu_i.is_some() { "exhaustive" } else { "bound" }.into(),
            mu_interface_left: ic.left,
            mu_interface_right: ic.right,
            mu_i: ic.mu_i,
            mu_l: cc.left,
            mu_r: cc.right,
            mu_c: cc.mu_c,
            c0,
            c1,
            c2: None,
            mu_side: None,
            projection_coherence: proj,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::{gaussian_tt, TtCore};

    #[test]
    fn subspace_extremes() {
        let mut e = DMatrix::zeros(6, 2);
        e[(0, 0)] = 1.0;
        e[(1, 1)] = 1.0;
        assert!((subspace_coherence(&e).unwrap() - 3.0).abs() < 1e-15);
        let ones = DMatrix::from_element(5, 1, 1.0 / 5f64.sqrt());
        assert!((subspace_coherence(&ones).unwrap() - 1.0).abs() < 1e-14);
        assert!(subspace_coherence(&DMatrix::from_element(3, 1, 1.0)).is_err());
    }

    #[test]
    fn c0_example_and_degenerate_c2() {
        let s = Shape::uniform(4, 3).unwrap();
        let r = RankTuple::new(vec![1, 1]);
        assert!((bound_c0(1.0, &s, &r).unwrap() - 12.0 / 64.0).abs() < 1e-15);
        let c1 = bound_c1(1.7, &s, &r).unwrap();
        assert!((bound_c2(1.7, 1.0, &s, &s, &r).unwrap() - c1).abs() < 1e-15);
        assert!((bound_c1(1.0, &s, &r).unwrap() - 12.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_uniform() {
        let core = |n: usize| TtCore::new(1, n, 1, vec![1.0; n]).unwrap();
        let x = TensorTrain::new(vec![core(3), core(4), core(2)]).unwrap();
        let ic = interface_coherence(&x).unwrap();
        assert!((ic.mu_i.unwrap() - 1.0).abs() < 1e-12);
        let cc = core_coherence(&x).unwrap();
        assert!((cc.mu_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_projection_coherence_closed_form() {
        let (n1, n2) = (4usize, 6usize);
        let a = TtCore::new(1, n1, 1, vec![1.0; n1]).unwrap();
        let b = TtCore::new(1, n2, 1, vec![1.0; n2]).unwrap();
        let x = TensorTrain::new(vec![a, b]).unwrap();
        let got = projection_coherence(&x).unwrap();
        let want = (n1 + n2 - 1) as f64 / (n1 * n2) as f64;
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn full_grid_rip_is_zero() {
        let s = Shape::new(vec![3, 4, 3]).unwrap();
        let x = gaussian_tt(&s, &RankTuple::new(vec![2, 2]), 1).unwrap();
        let om = SampleSet::full_grid(&s).unwrap();
        assert!(rip_estimate(&x, &om).unwrap().eps < 1e-12);
    }

    #[test]
    fn power_mode_matches_exact() {
        let s = Shape::new(vec![5, 4, 5]).unwrap();
        let x = gaussian_tt(&s, &RankTuple::new(vec![2, 2]), 3).unwrap();
        let om = crate::sampling::sample_uniform(&s, 60, 4).unwrap();
        let p = ProjectorHandle::new(&x).unwrap();
        let exact = rip_estimate_at(&p, &om, None).unwrap().eps;
        let pw = power_rip(&p, &p.frame(None), &om, None, om.rho());
        assert!((exact - pw).abs() < 1e-4 * exact, "{exact} {pw}");
    }
}
