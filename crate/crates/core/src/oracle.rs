//! Brute-force reference implementations for testing.
//!
//! Everything here works on dense arrays with textbook formulas and never
//! calls the projection, rounding or sampling code it is meant to check.
//! Costs are polynomial in `∏n_k`; keep instances small.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, TtError};
use crate::tensor::{DenseTensor, Shape};
use crate::tt::{TensorTrain, TtCore};

/// Largest ambient size accepted by the dense projector.
pub const DENSE_MAX: usize = 20_000;
/// Largest tangent dimension accepted by the dense basis.
pub const BASIS_MAX: usize = 5_000;

/// `X(ω) = Σ_α G₁(1,i₁,α₁) G₂(α₁,i₂,α₂) ⋯ G_d(α_{d−1},i_d,1)` by explicit
/// enumeration of all rank indices. `idx` is 0-based.
pub fn naive_tt_entry(cores: &[TtCore], idx: &[usize]) -> f64 {
    fn go(cores: &[TtCore], idx: &[usize], a: usize) -> f64 {
        let c = &cores[0];
        if cores.len() == 1 {
            return c.get(a, idx[0], 0);
        }
        (0..c.right_rank()).map(|b| c.get(a, idx[0], b) * go(&cores[1..], &idx[1..], b)).sum()
    }
    go(cores, idx, 0)
}

/// Densify a train entry by entry with [`naive_tt_entry`].
pub fn naive_to_dense(cores: &[TtCore]) -> Result<DenseTensor> {
    let shape = Shape::new(cores.iter().map(|c| c.mode_size()).collect())?;
    Ok(DenseTensor::from_fn(shape, |w| naive_tt_entry(cores, w)))
}

/// Orthonormal basis of the span of `cols` by twice-iterated modified
/// Gram–Schmidt; columns whose residual falls below `1e-8` of their
/// original norm are dropped.
fn orthonormal_span(cols: Vec<DVector<f64>>) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for mut v in cols {
        let n0 = v.norm();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-8 * n0 {
            basis.push(v / n);
        }
    }
    let rows = basis.first().map_or(0, |b| b.len());
    DMatrix::from_fn(rows, basis.len(), |i, j| basis[j][i])
}

/// Orthonormal basis of `T_X M_r` as columns of a `∏n × dim` matrix, from
/// the derivatives of `X` with respect to every core entry.
pub fn dense_tangent_basis(x: &TensorTrain) -> Result<DMatrix<f64>> {
    let numel = x.shape().numel();
    if numel > DENSE_MAX {
        return Err(TtError::SizeGuard(format!("{numel} entries exceed {DENSE_MAX}")));
    }
    let dim = x.ranks().manifold_dim(x.shape());
    if dim > BASIS_MAX {
        return Err(TtError::SizeGuard(format!("tangent dimension {dim} exceeds {BASIS_MAX}")));
    }
    let mut cols = Vec::new();
    for k in 0..x.order() {
        let c = &x.cores()[k];
        for e in 0..c.data().len() {
            let mut unit = vec![0.0; c.data().len()];
            unit[e] = 1.0;
            let mut cores = x.cores().to_vec();
            cores[k] = TtCore::new(c.left_rank(), c.mode_size(), c.right_rank(), unit)?;
            cols.push(DVector::from_vec(naive_to_dense(&cores)?.into_data()));
        }
    }
    let b = orthonormal_span(cols);
    if b.ncols() != dim {
        return Err(TtError::NonMinimal(format!(
            "derivative span has dimension {}, expected {dim}",
            b.ncols()
        )));
    }
    Ok(b)
}

/// Matrix of the orthogonal projector onto `T_X M_r` acting on `vec(Z)`.
pub fn dense_projector(x: &TensorTrain) -> Result<DMatrix<f64>> {
    let b = dense_tangent_basis(x)?;
    Ok(&b * b.transpose())
}

/// Spectral norm. Symmetric input uses its eigenvalues directly; other
/// matrices go through `MᵀM`.
pub fn dense_opnorm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = m.is_square() && (m - m.transpose()).amax() <= 1e-14 * m.amax().max(1.0);
    if sym {
        SymmetricEigen::new(m.clone()).eigenvalues.amax()
    } else {
        SymmetricEigen::new(m.transpose() * m).eigenvalues.max().max(0.0).sqrt()
    }
}

/// Eckart–Young optimum `M V_r V_rᵀ` with `V_r` the top-r eigenvectors of
/// `MᵀM`.
pub fn best_rank_approx_d2(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.transpose() * m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let keep = r.min(order.len());
    let v = DMatrix::from_fn(m.ncols(), keep, |i, j| eig.eigenvectors[(i, order[j])]);
    m * &v * v.transpose()
}

/// Orthonormal basis of the column span of a matrix.
pub fn column_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    orthonormal_span(m.column_iter().map(|c| c.into_owned()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::{gaussian_tt, RankTuple};

    #[test]
    fn matrix_manifold_dimension() {
        let s = Shape::new(vec![5, 5]).unwrap();
        let x = gaussian_tt(&s, &RankTuple::new(vec![2]), 1).unwrap();
        let b = dense_tangent_basis(&x).unwrap();
        assert_eq!(b.ncols(), 2 * (2 * 5 - 2));
        let g = b.transpose() * &b - DMatrix::identity(b.ncols(), b.ncols());
        assert!(g.amax() < 1e-10);
    }

    #[test]
    fn projector_trace_and_idempotence() {
        let s = Shape::new(vec![4, 3, 4]).unwrap();
        let r = RankTuple::new(vec![2, 2]);
        let x = gaussian_tt(&s, &r, 2).unwrap();
        let p = dense_projector(&x).unwrap();
        assert!((p.trace() - r.manifold_dim(&s) as f64).abs() < 1e-8);
        assert!((&p * &p - &p).amax() < 1e-10);
    }

    #[test]
    fn rank_one_all_ones() {
        let cores: Vec<TtCore> =
            (0..3).map(|_| TtCore::new(1, 3, 1, vec![1.0; 3]).unwrap()).collect();
        let t = naive_to_dense(&cores).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn opnorm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -3.0, 2.0]));
        assert!((dense_opnorm(&m) - 3.0).abs() < 1e-14);
        let r = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert!((dense_opnorm(&r) - 5.0).abs() < 1e-12);
    }
}
