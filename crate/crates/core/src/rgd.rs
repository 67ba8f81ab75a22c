//! Riemannian gradient descent on the fixed-rank TT manifold with
//! TT-SVD retraction and exact line search in the tangent space.
//!
//! One step:
//!
//! ```text
//! Y_t     = P_{X_t} R*(R X_t − R A)
//! α_t     = ‖Y_t‖² / ‖R Y_t‖²
//! X_{t+1} = TT-SVD_r(X_t − α_t Y_t)
//! ```
//!
//! `X_t − α_t Y_t` is formed as a tangent element of rank ≤ 2r (the base
//! point sits in the last gauge slot) and rounded at TT cost. Rounding
//! keeps the declared rank even when trailing singular values vanish.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};
use crate::kernel;
use crate::sampling::{Observations, SampleSet};
use crate::tangent::ProjectorHandle;
use crate::tensor::{DenseTensor, Shape};
use crate::tt::{gaussian_tt, tt_rank_of_train, RankTuple, TensorTrain};

/// Relative singular-value cut used when reporting iterate ranks.
pub const RANK_REPORT_TOL: f64 = 1e-13;
/// Residual, relative to the data norm, treated as exact fit.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    #[default]
    ExactLineSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub ranks: RankTuple,
    pub max_iters: usize,
    pub success_tol: f64,
    pub stall_tol: f64,
    pub stall_window: usize,
    pub seed: u64,
    pub step_mode: StepMode,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            ranks: RankTuple::new(vec![1]),
            max_iters: 500,
            success_tol: 1e-4,
            stall_tol: 1e-12,
            stall_window: 25,
            seed: 0,
            step_mode: StepMode::ExactLineSearch,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn with_ranks(ranks: RankTuple) -> Self {
        SolverConfig { ranks, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(TtError::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.success_tol > 0.0) || !(self.stall_tol > 0.0) {
            return Err(TtError::InvalidArgument("tolerances must be positive".into()));
        }
        if self.stall_window == 0 {
            return Err(TtError::InvalidArgument("stall_window must be at least 1".into()));
        }
        if self.ranks.0.contains(&0) {
            return Err(TtError::InvalidRank("ranks must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics, all evaluated at `X_t` before the step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    /// `‖R X_t − R A‖`.
    pub residual: f64,
    /// `‖X_t − A‖_F` when the ground truth is known.
    pub true_error: Option<f64>,
    pub alpha: f64,
    /// `‖Y_t‖_F`.
    pub grad_norm: f64,
    pub rank: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    /// CSV with header `iter,residual,true_error,alpha,grad_norm`; an
    /// unknown true error is written as an empty field.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,residual,true_error,alpha,grad_norm")?;
        for r in &self.rows {
            let te = r.true_error.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(w, "{},{:e},{},{:e},{:e}", r.iter, r.residual, te, r.alpha, r.grad_norm)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    MaxIters,
    Stalled,
    /// Zero gradient, or residual below `RESIDUAL_FLOOR` times the data norm.
    Stationary,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: TensorTrain,
    pub trace: ConvergenceTrace,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Relative error on the test set, when one was given.
    pub test_error: Option<f64>,
    pub success: bool,
}

/// Outcome of one step.
#[derive(Clone, Debug)]
pub struct Step {
    pub next: TensorTrain,
    pub residual: f64,
    pub alpha: f64,
    pub grad_norm: f64,
}

/// Linear measurement operator `R : ℝ^{n₁×…×n_d} → ℝ^s`.
///
/// Implementations must satisfy `⟨R X, y⟩ = ⟨X, R* y⟩`. The bound
/// `‖R*R‖ ≤ C` used by the recovery theory is the caller's responsibility
/// and is not checked.
pub trait MeasurementOp: Sync {
    fn shape(&self) -> &Shape;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &DenseTensor) -> Result<Vec<f64>>;
    fn adjoint(&self, y: &[f64]) -> Result<DenseTensor>;

    fn apply_tt(&self, x: &TensorTrain) -> Result<Vec<f64>> {
        self.apply(&x.to_dense()?)
    }

    /// `⟨R* R X, X⟩ = ‖R X‖²`.
    fn quadratic(&self, x: &DenseTensor) -> Result<f64> {
        Ok(self.apply(x)?.iter().map(|v| v * v).sum())
    }
}

pub struct IdentityOp {
    shape: Shape,
}

impl IdentityOp {
    pub fn new(shape: Shape) -> Self {
        IdentityOp { shape }
    }
}

impl MeasurementOp for IdentityOp {
    fn shape(&self) -> &Shape {
        &self.shape
    }
    fn output_len(&self) -> usize {
        self.shape.numel()
    }
    fn apply(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        check_shape(&self.shape, x.shape())?;
        Ok(x.data().to_vec())
    }
    fn adjoint(&self, y: &[f64]) -> Result<DenseTensor> {
        DenseTensor::new(self.shape.clone(), y.to_vec())
    }
}

/// Dense `s × ∏n` measurement matrix acting on `vec(X)`.
pub struct MatrixOp {
    shape: Shape,
    m: DMatrix<f64>,
}

impl MatrixOp {
    pub fn new(shape: Shape, m: DMatrix<f64>) -> Result<Self> {
        if m.ncols() != shape.numel() {
            return Err(TtError::DimensionMismatch(format!(
                "measurement matrix has {} columns for {} entries",
                m.ncols(),
                shape.numel()
            )));
        }
        Ok(MatrixOp { shape, m })
    }
}

impl MeasurementOp for MatrixOp {
    fn shape(&self) -> &Shape {
        &self.shape
    }
    fn output_len(&self) -> usize {
        self.m.nrows()
    }
    fn apply(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        check_shape(&self.shape, x.shape())?;
        let v = nalgebra::DVector::from_column_slice(x.data());
        Ok((&self.m * v).as_slice().to_vec())
    }
    fn adjoint(&self, y: &[f64]) -> Result<DenseTensor> {
        if y.len() != self.m.nrows() {
            return Err(TtError::DimensionMismatch("measurement vector length".into()));
        }
        let v = self.m.tr_mul(&nalgebra::DVector::from_column_slice(y));
        DenseTensor::new(self.shape.clone(), v.as_slice().to_vec())
    }
}

/// Entry sampling `X ↦ (X(ω_j))_j`, so that `R*R = R_Ω`.
pub struct SamplingOp {
    sample: SampleSet,
}

impl SamplingOp {
    pub fn new(sample: SampleSet) -> Self {
        SamplingOp { sample }
    }
}

impl MeasurementOp for SamplingOp {
    fn shape(&self) -> &Shape {
        self.sample.shape()
    }
    fn output_len(&self) -> usize {
        self.sample.len()
    }
    fn apply(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        Ok(self.sample.observe_dense(x)?.values().to_vec())
    }
    fn adjoint(&self, y: &[f64]) -> Result<DenseTensor> {
        Ok(Observations::new(self.sample.clone(), y.to_vec())?.adjoint_dense())
    }
    fn apply_tt(&self, x: &TensorTrain) -> Result<Vec<f64>> {
        Ok(self.sample.observe_tt(x)?.values().to_vec())
    }
}

fn check_shape(want: &Shape, got: &Shape) -> Result<()> {
    if want != got {
        return Err(TtError::DimensionMismatch(format!(
            "expected shape {:?}, got {:?}",
            want.dims(),
            got.dims()
        )));
    }
    Ok(())
}

/// One recovery step with a generic operator (dense gradient).
pub fn step_recovery(
    x: &TensorTrain,
    op: &dyn MeasurementOp,
    data: &[f64],
    ranks: &RankTuple,
) -> Result<Step> {
    check_shape(op.shape(), x.shape())?;
    if data.len() != op.output_len() {
        return Err(TtError::DimensionMismatch("data length differs from operator output".into()));
    }
    let p = ProjectorHandle::new_unchecked(x);
    let resid: Vec<f64> = op.apply_tt(x)?.iter().zip(data).map(|(a, b)| a - b).collect();
    let residual = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
    let y = p.project_dense(&op.adjoint(&resid)?)?;
    let g = y.norm();
    if g == 0.0 {
        return Ok(Step { next: x.clone(), residual, alpha: 0.0, grad_norm: 0.0 });
    }
    let denom = op.quadratic(&y.to_dense()?)?;
    if !(denom > 0.0) {
        return Err(TtError::DegenerateMeasurement(format!(
            "‖R Y‖² = {denom:e} with ‖Y‖ = {g:e}"
        )));
    }
    let alpha = g * g / denom;
    Ok(Step { next: y.retract(-alpha, ranks)?, residual, alpha, grad_norm: g })
}

/// Sampled data in the form the completion kernels consume: unique
/// indices (0-based, flat), multiplicities, and one target value each.
pub(crate) struct SampledTarget<'a> {
    pub idx: &'a [usize],
    pub mult: &'a [u32],
    pub values: Vec<f64>,
}

impl<'a> SampledTarget<'a> {
    pub fn from_observations(obs: &'a Observations) -> Self {
        SampledTarget {
            idx: obs.sample().unique_flat(),
            mult: obs.sample().multiplicities(),
            values: obs.unique_values(),
        }
    }

    /// `‖R_Ω(X − A)‖` given `X` at the unique indices.
    pub fn residual(&self, xv: &[f64]) -> f64 {
        xv.iter()
            .zip(&self.values)
            .zip(self.mult)
            .map(|((x, a), &m)| (m as f64 * (x - a)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.mult)
            .map(|(a, &m)| (m as f64 * a).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Completion step on `W` (small shape when `q` is given) against samples
/// of `A = Q W*` in the large shape.
pub(crate) fn sampled_step(
    x: &TensorTrain,
    target: &SampledTarget,
    q: Option<&[DMatrix<f64>]>,
    ranks: &RankTuple,
) -> Result<Step> {
    let p = ProjectorHandle::new_unchecked(x);
    let frame = p.frame(q);
    let xv = kernel::eval_many(&kernel::tables(p.left().cores(), q), target.idx);
    let diff: Vec<f64> = xv
        .iter()
        .zip(&target.values)
        .zip(target.mult)
        .map(|((x, a), &m)| m as f64 * (x - a))
        .collect();
    let residual = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    let y = p.project_samples(target.idx, &diff, q);
    let g = y.norm();
    if g == 0.0 {
        return Ok(Step { next: x.clone(), residual, alpha: 0.0, grad_norm: 0.0 });
    }
    let yv = frame.eval_tangent(&y.gauge_tables(q), target.idx);
    let denom: f64 = yv.iter().zip(target.mult).map(|(v, &m)| m as f64 * v * v).sum();
    if !(denom > 0.0) {
        return Err(TtError::DegenerateMeasurement(format!(
            "⟨R_Ω Y, Y⟩ = {denom:e} with ‖Y‖ = {g:e}"
        )));
    }
    let alpha = g * g / denom;
    Ok(Step { next: y.retract(-alpha, ranks)?, residual, alpha, grad_norm: g })
}

/// One completion step `Y_t = P_{X_t}[R_Ω X_t − R_Ω A]`,
/// `α_t = ‖Y_t‖²/⟨R_Ω Y_t, Y_t⟩`.
pub fn step_completion(x: &TensorTrain, obs: &Observations, ranks: &RankTuple) -> Result<Step> {
    check_shape(obs.shape(), x.shape())?;
    sampled_step(x, &SampledTarget::from_observations(obs), None, ranks)
}

/// Relative test-set error `‖R_{Ω₂}(A − X)‖ / ‖R_{Ω₂}A‖`.
pub fn test_error(x: &TensorTrain, test: &Observations) -> Result<f64> {
    check_shape(test.shape(), x.shape())?;
    let t = SampledTarget::from_observations(test);
    let xv = test.sample().gather_unique_tt(x);
    Ok(t.residual(&xv) / t.norm())
}

pub(crate) fn sampled_test_error(
    x: &TensorTrain,
    test: &SampledTarget,
    q: Option<&[DMatrix<f64>]>,
) -> f64 {
    let xv = kernel::eval_many(&kernel::tables(x.cores(), q), test.idx);
    test.residual(&xv) / test.norm()
}

/// Iteration driver shared by all solvers.
pub(crate) fn run<F, E, T>(
    cfg: &SolverConfig,
    x0: TensorTrain,
    data_norm: f64,
    mut step: F,
    true_error: Option<E>,
    test: Option<T>,
) -> Result<SolveResult>
where
    F: FnMut(&TensorTrain) -> Result<Step>,
    E: Fn(&TensorTrain) -> Result<f64>,
    T: Fn(&TensorTrain) -> f64,
{
    cfg.validate()?;
    let mut x = x0;
    let mut trace = ConvergenceTrace::default();
    let mut status = SolveStatus::MaxIters;
    let mut prev: Option<f64> = None;
    let mut flat = 0usize;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        let te = true_error.as_ref().map(|f| f(&x)).transpose()?;
        let s = step(&x)?;
        iterations = it + 1;
        if cfg.record_trace {
            trace.rows.push(TraceRow {
                iter: it,
                residual: s.residual,
                true_error: te,
                alpha: s.alpha,
                grad_norm: s.grad_norm,
                rank: tt_rank_of_train(&x, RANK_REPORT_TOL).0,
            });
        }
        if s.grad_norm == 0.0 || s.residual <= RESIDUAL_FLOOR * data_norm {
            status = SolveStatus::Stationary;
            break;
        }
        if let Some(p) = prev {
            if (s.residual - p).abs() <= cfg.stall_tol * p {
                flat += 1;
            } else {
                flat = 0;
            }
        }
        prev = Some(s.residual);
        x = s.next;
        if flat >= cfg.stall_window {
            status = SolveStatus::Stalled;
            break;
        }
    }
    let test_error = test.map(|f| f(&x));
    let success = test_error.is_some_and(|e| e < cfg.success_tol);
    Ok(SolveResult { x, trace, status, iterations, test_error, success })
}

fn initial_point(cfg: &SolverConfig, shape: &Shape, x0: Option<&TensorTrain>) -> Result<TensorTrain> {
    match x0 {
        Some(x) => {
            check_shape(shape, x.shape())?;
            Ok(x.clone())
        }
        None => gaussian_tt(shape, &cfg.ranks, cfg.seed),
    }
}

/// TT completion from observed entries.
///
/// `X₀` defaults to `gaussian_tt(shape, ranks, cfg.seed)`. Success means
/// relative test-set error below `cfg.success_tol` at termination.
pub fn solve_completion(
    obs: &Observations,
    cfg: &SolverConfig,
    x0: Option<&TensorTrain>,
    truth: Option<&TensorTrain>,
    test: Option<&Observations>,
) -> Result<SolveResult> {
    let shape = obs.shape();
    cfg.ranks.check_representable(shape)?;
    if let Some(t) = test {
        check_shape(shape, t.shape())?;
    }
    let x0 = initial_point(cfg, shape, x0)?;
    let target = SampledTarget::from_observations(obs);
    let test_target = test.map(SampledTarget::from_observations);
    run(
        cfg,
        x0,
        target.norm(),
        |x| sampled_step(x, &target, None, &cfg.ranks),
        truth.map(|a| move |x: &TensorTrain| Ok(x.sub(a)?.frob_norm())),
        test_target.as_ref().map(|t| move |x: &TensorTrain| sampled_test_error(x, t, None)),
    )
}

/// Recovery with a generic measurement operator. Success is judged on the
/// relative measurement residual when no test data is available.
pub fn solve_recovery(
    op: &dyn MeasurementOp,
    data: &[f64],
    cfg: &SolverConfig,
    x0: Option<&TensorTrain>,
    truth: Option<&TensorTrain>,
) -> Result<SolveResult> {
    cfg.ranks.check_representable(op.shape())?;
    let x0 = initial_point(cfg, op.shape(), x0)?;
    let dnorm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel_residual = |x: &TensorTrain| -> f64 {
        match op.apply_tt(x) {
            Ok(v) => v.iter().zip(data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / dnorm,
            Err(_) => f64::INFINITY,
        }
    };
    run(
        cfg,
        x0,
        dnorm,
        |x| step_recovery(x, op, data, &cfg.ranks),
        truth.map(|a| move |x: &TensorTrain| Ok(x.sub(a)?.frob_norm())),
        Some(rel_residual),
    )
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConvergenceConstants {
    /// Contraction factor β_t.
    pub beta: f64,
    /// Right-hand side of the initial-condition requirement on
    /// `‖X₀ − A‖ / σ_min(A)`.
    pub basin: f64,
    /// RIP constant used: δ for recovery, ε_t = E(2‖X_t − A‖/σ_min) for completion.
    pub rip: f64,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(TtError::OutOfRange(format!("{name} = {v} outside [0, 1)")));
    }
    Ok(())
}

/// Recovery with RIP constant δ = δ_{2r} and `‖R*R‖ ≤ C`:
/// `β_t = (1+√(d−1))[2δ/(1−δ) + (1 + C/(1−δ)) ‖X_t − A‖/σ_min(A)]`,
/// basin `(1+C−δ)⁻¹((1−δ)/(1+√(d−1)) − 2δ)`.
pub fn recovery_constants(
    err: f64,
    sigma_min: f64,
    delta: f64,
    c: f64,
    d: usize,
) -> Result<ConvergenceConstants> {
    check_unit("delta", delta)?;
    if !(sigma_min > 0.0) {
        return Err(TtError::OutOfRange("sigma_min must be positive".into()));
    }
    let s = 1.0 + ((d - 1) as f64).sqrt();
    let beta = s * (2.0 * delta / (1.0 - delta) + (1.0 + c / (1.0 - delta)) * err / sigma_min);
    let denom = 1.0 + c - delta;
    if !(denom > 0.0) {
        return Err(TtError::OutOfRange(format!("1 + C − δ = {denom} is not positive")));
    }
    let basin = ((1.0 - delta) / s - 2.0 * delta) / denom;
    Ok(ConvergenceConstants { beta, basin, rip: delta })
}

/// Completion with tangent RIP constant ε at `A`, `‖R_Ω‖ ≤ C`, density ρ:
/// `ε_t = ε + δ(1 + 2Cρ⁻¹)` with `δ = 2‖X_t − A‖/σ_min(A)`, β_t as for
/// recovery with ε_t in place of δ, basin
/// `(5 + C + 8Cρ⁻¹ + (2 + 4Cρ⁻¹)/(1+√(d−1)) − ε)⁻¹((1−ε)/(1+√(d−1)) − 2ε)`.
pub fn completion_constants(
    err: f64,
    sigma_min: f64,
    eps: f64,
    c: f64,
    rho: f64,
    d: usize,
) -> Result<ConvergenceConstants> {
    check_unit("eps", eps)?;
    if !(sigma_min > 0.0) || !(rho > 0.0) {
        return Err(TtError::OutOfRange("sigma_min and rho must be positive".into()));
    }
    let s = 1.0 + ((d - 1) as f64).sqrt();
    let cr = c / rho;
    let eps_t = eps + 2.0 * err / sigma_min * (1.0 + 2.0 * cr);
    check_unit("eps_t", eps_t)?;
    let beta = s * (2.0 * eps_t / (1.0 - eps_t) + (1.0 + c / (1.0 - eps_t)) * err / sigma_min);
    let denom = 5.0 + c + 8.0 * cr + (2.0 + 4.0 * cr) / s - eps;
    let basin = ((1.0 - eps) / s - 2.0 * eps) / denom;
    Ok(ConvergenceConstants { beta, basin, rip: eps_t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_uniform;

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn fixed_point() {
        let s = shape(&[4, 5, 3]);
        let r = RankTuple::new(vec![2, 2]);
        let a = gaussian_tt(&s, &r, 1).unwrap();
        let om = sample_uniform(&s, 40, 2).unwrap();
        let obs = om.observe_tt(&a).unwrap();
        let st = step_completion(&a, &obs, &r).unwrap();
        let e = st.next.sub(&a).unwrap().frob_norm();
        assert!(e < 1e-12 * a.frob_norm(), "{e}");
    }

    #[test]
    fn identity_operator_matrix_one_step() {
        let s = shape(&[6, 5]);
        let r = RankTuple::new(vec![2]);
        let a = gaussian_tt(&s, &r, 3).unwrap();
        let op = IdentityOp::new(s.clone());
        let data = op.apply(&a.to_dense().unwrap()).unwrap();
        let p = ProjectorHandle::new(&a).unwrap();
        let x0 = p.random_tangent(4).scaled(1e-3).retract(1.0, &r).unwrap();
        let st = step_recovery(&x0, &op, &data, &r).unwrap();
        assert!((st.alpha - 1.0).abs() < 1e-12);
        let e = st.next.sub(&a).unwrap().frob_norm();
        assert!(e < 1e-10 * a.frob_norm(), "{e}");
    }

    #[test]
    fn full_grid_completion_equals_identity_recovery() {
        let s = shape(&[3, 4, 3]);
        let r = RankTuple::new(vec![2, 2]);
        let a = gaussian_tt(&s, &r, 5).unwrap();
        let x = gaussian_tt(&s, &r, 6).unwrap();
        let om = SampleSet::full_grid(&s).unwrap();
        let obs = om.observe_tt(&a).unwrap();
        let op = IdentityOp::new(s.clone());
        let data = op.apply(&a.to_dense().unwrap()).unwrap();
        let c = step_completion(&x, &obs, &r).unwrap();
        let rr = step_recovery(&x, &op, &data, &r).unwrap();
        let diff = c.next.to_dense().unwrap().sub(&rr.next.to_dense().unwrap()).unwrap().frob_norm();
        assert!(diff < 1e-12 * rr.next.frob_norm());
    }

    #[test]
    fn full_grid_solves_quickly() {
        let s = shape(&[4, 3, 5]);
        let r = RankTuple::new(vec![2, 2]);
        let a = gaussian_tt(&s, &r, 7).unwrap();
        let om = SampleSet::full_grid(&s).unwrap();
        let obs = om.observe_tt(&a).unwrap();
        let cfg = SolverConfig { max_iters: 60, ..SolverConfig::with_ranks(r) };
        let res = solve_completion(&obs, &cfg, None, Some(&a), Some(&obs)).unwrap();
        assert!(res.success, "{:?}", res.test_error);
        assert_eq!(res.trace.rows.len(), res.iterations);
    }

    #[test]
    fn constants_edge_cases() {
        let c = recovery_constants(0.0, 1.0, 0.0, 1.0, 3).unwrap();
        assert_eq!(c.beta, 0.0);
        assert!(recovery_constants(0.0, 1.0, 1.0, 1.0, 3).is_err());
        let k = completion_constants(0.0, 1.0, 0.0, 1.0, 1.0, 2).unwrap();
        // ε = 0, C = ρ = 1, d = 2: (1/2) / (5 + 1 + 8 + 6/2)
        assert!((k.basin - 0.5 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn trace_csv_header() {
        let t = ConvergenceTrace {
            rows: vec![TraceRow {
                iter: 0,
                residual: 1.0,
                true_error: None,
                alpha: 2.0,
                grad_norm: 3.0,
                rank: vec![1],
            }],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("iter,residual,true_error,alpha,grad_norm\n0,1e0,,2e0,3e0"));
    }
}
