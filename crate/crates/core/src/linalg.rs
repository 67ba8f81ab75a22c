//! Small dense linear-algebra kernels: nalgebra storage, LAPACK SVD.

use lax::{layout::MatrixLayout, JobSvd, Lapack};
use nalgebra::{DMatrix, SymmetricEigen};

/// Thin SVD, singular values in descending order.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

impl ThinSvd {
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        if smax <= 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&v| v > rel_tol * smax).count()
    }
}

fn layout(m: &DMatrix<f64>) -> MatrixLayout {
    MatrixLayout::F { col: m.ncols() as i32, lda: m.nrows() as i32 }
}

/// LAPACK divide-and-conquer SVD, falling back to the QR-iteration driver
/// if it does not converge.
pub fn svd(m: &DMatrix<f64>) -> ThinSvd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return ThinSvd { u: DMatrix::zeros(rows, 0), s: Vec::new(), vt: DMatrix::zeros(0, cols) };
    }
    let mut a = m.as_slice().to_vec();
    if let Ok(out) = f64::svddc(layout(m), JobSvd::Some, &mut a) {
        return ThinSvd {
            u: DMatrix::from_vec(rows, k, out.u.expect("u requested")),
            s: out.s,
            vt: DMatrix::from_vec(k, cols, out.vt.expect("vt requested")),
        };
    }
    let mut a = m.as_slice().to_vec();
    let out = f64::svd(layout(m), true, true, &mut a).expect("LAPACK SVD failed to converge");
    let u = DMatrix::from_vec(rows, rows, out.u.expect("u requested"));
    let vt = DMatrix::from_vec(cols, cols, out.vt.expect("vt requested"));
    ThinSvd { u: u.columns(0, k).into_owned(), s: out.s, vt: vt.rows(0, k).into_owned() }
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut a = m.as_slice().to_vec();
    match f64::svddc(layout(m), JobSvd::None, &mut a) {
        Ok(out) => out.s,
        Err(_) => svd(m).s,
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Thin Householder QR: `m = q * r` with `q` of size rows × min(rows, cols).
pub fn thin_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

/// Orthonormal basis of the orthogonal complement of the column span of
/// `u`, which must have orthonormal (or at least independent) columns.
pub fn orth_complement(u: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = u.shape();
    let mut aug = DMatrix::zeros(n, r + n);
    aug.view_mut((0, 0), (n, r)).copy_from(u);
    aug.view_mut((0, r), (n, n)).fill_with_identity();
    let (q, _) = thin_qr(&aug);
    q.columns(r, n - r).into_owned()
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_abs_max_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Maximum entry of |mᵀm − I|.
pub fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.25]);
        let f = svd(&m);
        assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        let rec = &f.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(f.s.clone())) * &f.vt;
        assert!((rec - m).norm() < 1e-12);
    }

    #[test]
    fn complement_is_orthogonal() {
        let m = DMatrix::from_fn(6, 2, |i, j| ((i * 3 + j * 7) % 5) as f64 - 1.7);
        let (q, _) = thin_qr(&m);
        let c = orth_complement(&q);
        assert_eq!(c.shape(), (6, 4));
        assert!((q.transpose() * &c).norm() < 1e-12);
        assert!(orthonormality_defect(&c) < 1e-12);
    }

    #[test]
    fn rank_of_zero_matrix() {
        let f = svd(&DMatrix::zeros(3, 4));
        assert_eq!(f.rank(1e-10), 0);
    }
}
