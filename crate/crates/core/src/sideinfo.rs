//! Completion with subspace side information.
//!
//! The unknown `A ∈ ℝ^{n₁×…×n_d}` is assumed to have mode-k fibres in
//! `col(Q_k)`, `Q_k ∈ ℝ^{n_k×m_k}` with orthonormal columns, so that
//! `A = Q B = B ×₁ Q₁ ×₂ … ×_d Q_d` for a small `B ∈ ℝ^{m₁×…×m_d}` of the
//! same TT-rank. The solver iterates on `W` over the small shape; `Q`
//! only enters at sample evaluation and when accumulating residuals.

use nalgebra::DMatrix;

use crate::coherence::{self, subspace_coherence, RipEstimate};
use crate::error::{Result, TtError};
use crate::linalg;
use crate::rgd::{self, SampledTarget, SolveResult, SolverConfig, Step};
use crate::sampling::{Observations, SampleSet};
use crate::tangent::ProjectorHandle;
use crate::tensor::{DenseTensor, Shape};
use crate::tt::{gaussian_tt, RankTuple, TensorTrain};

/// Orthonormality tolerance for user-supplied factors.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SideInfo {
    factors: Vec<DMatrix<f64>>,
    large: Shape,
    small: Shape,
    reorthonormalized: Vec<usize>,
}

impl SideInfo {
    /// Factors whose columns are not orthonormal to 1e-10 are replaced by
    /// the Q factor of their QR decomposition (same column span); the
    /// affected modes are listed by [`SideInfo::reorthonormalized`].
    pub fn new(factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(TtError::InvalidShape("side information needs at least two modes".into()));
        }
        let mut fixed = Vec::new();
        let mut out = Vec::with_capacity(factors.len());
        for (k, q) in factors.into_iter().enumerate() {
            let (n, m) = q.shape();
            if m == 0 || m > n {
                return Err(TtError::InvalidShape(format!(
                    "factor {} is {n}×{m}; need 1 ≤ m ≤ n",
                    k + 1
                )));
            }
            if linalg::orthonormality_defect(&q) <= ORTHONORMAL_TOL {
                out.push(q);
                continue;
            }
            let (qq, r) = linalg::thin_qr(&q);
            let rmax = r.diagonal().amax();
            if (0..m).any(|i| r[(i, i)].abs() <= 1e-12 * rmax) {
                return Err(TtError::InvalidArgument(format!(
                    "factor {} does not have full column rank",
                    k + 1
                )));
            }
            fixed.push(k + 1);
            out.push(qq);
        }
        let large = Shape::new(out.iter().map(|q| q.nrows()).collect())?;
        let small = Shape::new(out.iter().map(|q| q.ncols()).collect())?;
        Ok(SideInfo { factors: out, large, small, reorthonormalized: fixed })
    }

    pub fn identity(shape: &Shape) -> Self {
        SideInfo {
            factors: shape.dims().iter().map(|&n| DMatrix::identity(n, n)).collect(),
            large: shape.clone(),
            small: shape.clone(),
            reorthonormalized: Vec::new(),
        }
    }

    /// Random side information: each `Q_k` is the orthonormal factor of a
    /// Gaussian `n_k × m_k` matrix.
    pub fn random(large: &Shape, small: &Shape, seed: u64) -> Result<Self> {
        if large.order() != small.order() {
            return Err(TtError::DimensionMismatch("n and m shapes differ in order".into()));
        }
        let mut rng = crate::rng::rng_from_seed(seed);
        let factors = large
            .dims()
            .iter()
            .zip(small.dims())
            .map(|(&n, &m)| {
                let g = DMatrix::from_fn(n, m, |_, _| {
                    rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
                });
                linalg::thin_qr(&g).0
            })
            .collect();
        SideInfo::new(factors)
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    /// `(n₁,…,n_d)`.
    pub fn large_shape(&self) -> &Shape {
        &self.large
    }

    /// `(m₁,…,m_d)`.
    pub fn small_shape(&self) -> &Shape {
        &self.small
    }

    /// 1-based modes whose factors were orthonormalized on construction.
    pub fn reorthonormalized(&self) -> &[usize] {
        &self.reorthonormalized
    }

    /// `μ(Q_k) = (n_k/m_k) max_i ‖Q_kᵀe_i‖²` per mode.
    pub fn coherences(&self) -> Vec<f64> {
        self.factors
            .iter()
            .map(|q| subspace_coherence(q).expect("orthonormal by construction"))
            .collect()
    }

    /// `μ₂ = max_k μ(Q_k)`.
    pub fn mu2(&self) -> f64 {
        self.coherences().into_iter().fold(1.0, f64::max)
    }

    fn check_small(&self, s: &Shape) -> Result<()> {
        if s != &self.small {
            return Err(TtError::DimensionMismatch(format!(
                "expected small shape {:?}, got {:?}",
                self.small.dims(),
                s.dims()
            )));
        }
        Ok(())
    }

    fn check_large(&self, s: &Shape) -> Result<()> {
        if s != &self.large {
            return Err(TtError::DimensionMismatch(format!(
                "expected large shape {:?}, got {:?}",
                self.large.dims(),
                s.dims()
            )));
        }
        Ok(())
    }

    /// `Q W`, core by core; TT-ranks are unchanged.
    pub fn apply_tt(&self, w: &TensorTrain) -> Result<TensorTrain> {
        self.check_small(w.shape())?;
        TensorTrain::new(
            w.cores().iter().zip(&self.factors).map(|(c, q)| c.mode_product(q)).collect(),
        )
    }

    /// `Q* X`.
    pub fn adjoint_tt(&self, x: &TensorTrain) -> Result<TensorTrain> {
        self.check_large(x.shape())?;
        TensorTrain::new(
            x.cores()
                .iter()
                .zip(&self.factors)
                .map(|(c, q)| c.mode_product(&q.transpose()))
                .collect(),
        )
    }

    pub fn apply_dense(&self, w: &DenseTensor) -> Result<DenseTensor> {
        self.check_small(w.shape())?;
        let mut out = w.clone();
        for (k, q) in self.factors.iter().enumerate() {
            out = out.mode_product(k + 1, q)?;
        }
        Ok(out)
    }

    pub fn adjoint_dense(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.check_large(x.shape())?;
        let mut out = x.clone();
        for (k, q) in self.factors.iter().enumerate() {
            out = out.mode_product(k + 1, &q.transpose())?;
        }
        Ok(out)
    }

    /// Whether `‖QQ*A − A‖_F ≤ tol·‖A‖_F`, i.e. every mode-k fibre of `A`
    /// lies in `col(Q_k)`.
    pub fn contains(&self, a: &DenseTensor, tol: f64) -> Result<bool> {
        let back = self.apply_dense(&self.adjoint_dense(a)?)?;
        Ok(back.sub(a)?.frob_norm() <= tol * a.frob_norm())
    }
}

/// One step on the small manifold:
/// `Y_t = P_{W_t}[Q*R_Ω Q W_t − Q*R_Ω A]`, `α_t = ‖Y_t‖²/⟨Q*R_Ω Q Y_t, Y_t⟩`.
pub fn step_side(
    w: &TensorTrain,
    obs: &Observations,
    side: &SideInfo,
    ranks: &RankTuple,
) -> Result<Step> {
    side.check_small(w.shape())?;
    side.check_large(obs.shape())?;
    rgd::sampled_step(w, &SampledTarget::from_observations(obs), Some(side.factors()), ranks)
}

/// Side-information completion. `obs` and `test` sample `A` on the large
/// shape; `w0` and `truth` (the small `B`) live on the small shape. The
/// recorded true error is `‖W_t − B‖_F = ‖QW_t − A‖_F`.
pub fn solve_side(
    obs: &Observations,
    side: &SideInfo,
    cfg: &SolverConfig,
    w0: Option<&TensorTrain>,
    truth: Option<&TensorTrain>,
    test: Option<&Observations>,
) -> Result<SolveResult> {
    side.check_large(obs.shape())?;
    if let Some(t) = test {
        side.check_large(t.shape())?;
    }
    if let Some(b) = truth {
        side.check_small(b.shape())?;
    }
    let small = side.small_shape();
    cfg.ranks.check_representable(small)?;
    let w0 = match w0 {
        Some(w) => {
            side.check_small(w.shape())?;
            w.clone()
        }
        None => gaussian_tt(small, &cfg.ranks, cfg.seed)?,
    };
    let q = Some(side.factors());
    let target = SampledTarget::from_observations(obs);
    let test_target = test.map(SampledTarget::from_observations);
    rgd::run(
        cfg,
        w0,
        target.norm(),
        |w| rgd::sampled_step(w, &target, q, &cfg.ranks),
        truth.map(|b| move |w: &TensorTrain| Ok(w.sub(b)?.frob_norm())),
        test_target.as_ref().map(|t| move |w: &TensorTrain| rgd::sampled_test_error(w, t, q)),
    )
}

/// `‖P_B − ρ⁻¹ P_B Q* R_Ω Q P_B‖` on `T_B M_r^{(m)}`, with `ρ = |Ω|/∏n_k`.
pub fn rip_estimate_side(b: &TensorTrain, omega: &SampleSet, side: &SideInfo) -> Result<RipEstimate> {
    side.check_small(b.shape())?;
    side.check_large(omega.shape())?;
    let p = ProjectorHandle::new(b)?;
    coherence::rip_estimate_at(&p, omega, Some(side.factors()))
}

/// Exhaustive `max_ω ‖P_{T_B} Q* E_ω‖²_F` over the large grid.
pub fn projection_coherence_side(b: &TensorTrain, side: &SideInfo) -> Result<f64> {
    side.check_small(b.shape())?;
    let p = ProjectorHandle::new(b)?;
    coherence::projection_scan(&p, Some(side.factors()), side.large_shape())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_uniform;
    use crate::tt::{sigma_min_tt, tt_rank_of_train};

    fn shapes() -> (Shape, Shape) {
        (Shape::new(vec![7, 6, 8]).unwrap(), Shape::new(vec![3, 4, 2]).unwrap())
    }

    #[test]
    fn left_inverse_and_isometry() {
        let (n, m) = shapes();
        let side = SideInfo::random(&n, &m, 1).unwrap();
        let r = RankTuple::new(vec![2, 2]);
        let w = gaussian_tt(&m, &r, 2).unwrap();
        let qw = side.apply_tt(&w).unwrap();
        assert!((qw.frob_norm() - w.frob_norm()).abs() < 1e-12 * w.frob_norm());
        let back = side.adjoint_tt(&qw).unwrap();
        assert!(back.sub(&w).unwrap().frob_norm() < 1e-12 * w.frob_norm());
        let dense = side.apply_dense(&w.to_dense().unwrap()).unwrap();
        assert!(dense.sub(&qw.to_dense().unwrap()).unwrap().frob_norm() < 1e-12 * w.frob_norm());
        assert_eq!(tt_rank_of_train(&qw, 1e-10), r);
        let s1 = sigma_min_tt(&w).unwrap();
        let s2 = sigma_min_tt(&qw).unwrap();
        assert!((s1 - s2).abs() < 1e-10 * s1);
    }

    #[test]
    fn membership() {
        let (n, m) = shapes();
        let side = SideInfo::random(&n, &m, 3).unwrap();
        let w = gaussian_tt(&m, &RankTuple::new(vec![2, 2]), 4).unwrap();
        let a = side.apply_dense(&w.to_dense().unwrap()).unwrap();
        assert!(side.contains(&a, 1e-10).unwrap());
        let mut data = a.into_data();
        data[0] += 1.0;
        let bad = DenseTensor::new(n.clone(), data).unwrap();
        assert!(!side.contains(&bad, 1e-10).unwrap());
    }

    #[test]
    fn non_orthonormal_factors_are_fixed() {
        let q = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let side = SideInfo::new(vec![q.clone(), DMatrix::identity(2, 2)]).unwrap();
        assert_eq!(side.reorthonormalized(), &[1]);
        assert!(linalg::orthonormality_defect(&side.factors()[0]) < 1e-14);
        let rank_deficient = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0]);
        assert!(SideInfo::new(vec![rank_deficient, DMatrix::identity(2, 2)]).is_err());
    }

    #[test]
    fn identity_side_matches_plain_step() {
        let s = Shape::new(vec![5, 4, 6]).unwrap();
        let r = RankTuple::new(vec![2, 2]);
        let a = gaussian_tt(&s, &r, 5).unwrap();
        let x = gaussian_tt(&s, &r, 6).unwrap();
        let obs = sample_uniform(&s, 60, 7).unwrap().observe_tt(&a).unwrap();
        let side = SideInfo::identity(&s);
        let p = rgd::step_completion(&x, &obs, &r).unwrap();
        let q = step_side(&x, &obs, &side, &r).unwrap();
        let diff = p.next.sub(&q.next).unwrap().frob_norm();
        assert!(diff <= 1e-12 * p.next.frob_norm(), "{diff}");
        assert!((p.alpha - q.alpha).abs() <= 1e-12 * p.alpha);
    }

    #[test]
    fn full_grid_identity_rip_is_zero() {
        let s = Shape::new(vec![4, 3, 4]).unwrap();
        let b = gaussian_tt(&s, &RankTuple::new(vec![2, 2]), 8).unwrap();
        let om = SampleSet::full_grid(&s).unwrap();
        let e = rip_estimate_side(&b, &om, &SideInfo::identity(&s)).unwrap();
        assert!(e.eps < 1e-12, "{}", e.eps);
    }

    #[test]
    fn projection_coherence_below_c2() {
        let (n, m) = (Shape::new(vec![8, 7, 9]).unwrap(), Shape::new(vec![3, 4, 3]).unwrap());
        let r = RankTuple::new(vec![2, 2]);
        for seed in 0..10 {
            let side = SideInfo::random(&n, &m, seed).unwrap();
            let b = gaussian_tt(&m, &r, 100 + seed).unwrap();
            let mu1 = coherence::core_coherence(&side.apply_tt(&b).unwrap()).unwrap().mu_c;
            let c2 = coherence::bound_c2(mu1, side.mu2(), &n, &m, &r).unwrap();
            let got = projection_coherence_side(&b, &side).unwrap();
            assert!(got <= c2 * (1.0 + 1e-12), "{got} > {c2}");
        }
    }
}
