use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

use ttcomp_core::oracle::naive_to_dense;
use ttcomp_core::rng::rng_from_seed;
use ttcomp_core::tt::{gaussian_tt, sigma_min_tt, tt_rank, tt_svd};
use ttcomp_core::{DenseTensor, RankTuple, Shape};

fn gauss(dims: &[usize], seed: u64) -> DenseTensor {
    let mut rng = rng_from_seed(seed);
    DenseTensor::from_fn(Shape::new(dims.to_vec()).unwrap(), |_| StandardNormal.sample(&mut rng))
}

fn gauss_mat(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
}

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 2..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tensorize_inverts_unfold(dims in dims_strategy(), seed in 0u64..1000) {
        let x = gauss(&dims, seed);
        for k in 1..dims.len() {
            let back = DenseTensor::tensorize(&x.unfold(k).unwrap(), k, x.shape()).unwrap();
            prop_assert_eq!(back.data(), x.data());
        }
    }

    #[test]
    fn inner_is_unfolding_trace(dims in dims_strategy(), seed in 0u64..1000) {
        let x = gauss(&dims, seed);
        let y = gauss(&dims, seed + 7);
        let ip = x.inner(&y).unwrap();
        for k in 1..dims.len() {
            let t = (x.unfold(k).unwrap().transpose() * y.unfold(k).unwrap()).trace();
            prop_assert!((t - ip).abs() <= 1e-12 * (1.0 + ip.abs()));
        }
    }

    #[test]
    fn mode_product_flattening_identity(dims in dims_strategy(), m in 1usize..5, seed in 0u64..1000) {
        let x = gauss(&dims, seed);
        for k in 1..=dims.len() {
            let b = gauss_mat(m, dims[k - 1], seed + k as u64);
            let y = x.mode_product(k, &b).unwrap();
            let want = &b * x.flatten(k).unwrap();
            let got = y.flatten(k).unwrap();
            prop_assert!((got - want).amax() <= 1e-12 * (1.0 + b.amax() * x.frob_norm()));
        }
    }

    #[test]
    fn naive_entries_match_to_dense(dims in prop::collection::vec(2usize..5, 2..5), seed in 0u64..1000) {
        let r = RankTuple::uniform(2, dims.len());
        let shape = Shape::new(dims).unwrap();
        prop_assume!(r.check_representable(&shape).is_ok());
        let x = gaussian_tt(&shape, &r, seed).unwrap();
        let a = x.to_dense().unwrap();
        let b = naive_to_dense(x.cores()).unwrap();
        prop_assert!(a.sub(&b).unwrap().frob_norm() <= 1e-12 * a.frob_norm());
    }
}

#[test]
fn outer_product_flattenings_have_rank_one() {
    let (u, v, w) = (gauss_mat(3, 1, 1), gauss_mat(4, 1, 2), gauss_mat(5, 1, 3));
    let x = DenseTensor::from_fn(Shape::new(vec![3, 4, 5]).unwrap(), |i| {
        u[i[0]] * v[i[1]] * w[i[2]]
    });
    for k in 1..=3 {
        assert_eq!(x.flatten(k).unwrap().rank(1e-10), 1);
    }
}

#[test]
fn generic_gaussian_trains_have_full_rank() {
    let shape = Shape::uniform(5, 3).unwrap();
    let r = RankTuple::uniform(2, 3);
    for s in 0..50 {
        let x = gaussian_tt(&shape, &r, s).unwrap().to_dense().unwrap();
        assert_eq!(tt_rank(&x, 1e-10).unwrap(), r, "seed {s}");
    }
}

#[test]
fn gaussian_core_entries_have_zero_mean() {
    let x = gaussian_tt(&Shape::uniform(30, 4).unwrap(), &RankTuple::uniform(5, 4), 9).unwrap();
    let all: Vec<f64> = x.cores().iter().flat_map(|c| c.data().iter().copied()).collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean} over {n} entries");
}

#[test]
fn sigma_min_matches_dense_svd() {
    let shape = Shape::new(vec![4, 5, 3, 4]).unwrap();
    let r = RankTuple::new(vec![2, 3, 2]);
    for s in 0..5 {
        let x = gaussian_tt(&shape, &r, 40 + s).unwrap();
        let dense = x.to_dense().unwrap();
        let inv: f64 = (1..4)
            .map(|k| {
                let sv = dense.unfold(k).unwrap().singular_values();
                let mut sv: Vec<f64> = sv.iter().copied().collect();
                sv.sort_by(|a, b| b.total_cmp(a));
                1.0 / sv[r.0[k - 1] - 1]
            })
            .sum();
        let got = sigma_min_tt(&x).unwrap();
        assert!((got - 1.0 / inv).abs() <= 1e-10 * got, "{got} vs {}", 1.0 / inv);
    }
}

/// Best rank-(r1, r2) approximation error of an order-3 tensor by
/// alternating least squares over the three cores, from `starts` random
/// initializations plus the TT-SVD point.
fn als_best_error(x: &DenseTensor, r1: usize, r2: usize, starts: u64) -> f64 {
    let n = x.shape().dims().to_vec();
    let xf = |i: usize, j: usize, k: usize| x.get0(&[i, j, k]);
    let fit = |g1: &DMatrix<f64>, g2: &[DMatrix<f64>], g3: &DMatrix<f64>| -> f64 {
        let mut e = 0.0;
        for j in 0..n[1] {
            let s = g1 * &g2[j] * g3;
            for i in 0..n[0] {
                for k in 0..n[2] {
                    e += (s[(i, k)] - xf(i, j, k)).powi(2);
                }
            }
        }
        e.sqrt()
    };
    let slice = |j: usize| DMatrix::from_fn(n[0], n[2], |i, k| xf(i, j, k));
    let mut best = f64::INFINITY;
    let svd_start = tt_svd(x, &RankTuple::new(vec![r1, r2])).unwrap();
    for s in 0..=starts {
        let (mut g1, mut g2, mut g3) = if s == 0 {
            let c = svd_start.cores();
            (
                DMatrix::from_fn(n[0], r1, |i, a| c[0].get(0, i, a)),
                (0..n[1]).map(|j| c[1].slice(j)).collect::<Vec<_>>(),
                DMatrix::from_fn(r2, n[2], |b, k| c[2].get(b, k, 0)),
            )
        } else {
            (
                gauss_mat(n[0], r1, 1000 * s),
                (0..n[1]).map(|j| gauss_mat(r1, r2, 1000 * s + 1 + j as u64)).collect(),
                gauss_mat(r2, n[2], 1000 * s + 999),
            )
        };
        for _ in 0..300 {
            // G1: X_j ≈ G1 (G2_j G3) for all j, stacked along columns.
            let m = DMatrix::from_fn(r1, n[1] * n[2], |a, c| (&g2[c / n[2]] * &g3)[(a, c % n[2])]);
            let xm = DMatrix::from_fn(n[0], n[1] * n[2], |i, c| xf(i, c / n[2], c % n[2]));
            g1 = &xm * m.transpose() * (&m * m.transpose()).pseudo_inverse(1e-14).unwrap();
            let g1p = g1.clone().pseudo_inverse(1e-14).unwrap();
            let g3p = g3.clone().pseudo_inverse(1e-14).unwrap();
            for (j, g) in g2.iter_mut().enumerate() {
                *g = &g1p * slice(j) * &g3p;
            }
            // G3: X^<2> ≈ L G3.
            let l = DMatrix::from_fn(n[0] * n[1], r2, |c, b| (&g1 * &g2[c / n[0]])[(c % n[0], b)]);
            let xl = DMatrix::from_fn(n[0] * n[1], n[2], |c, k| xf(c % n[0], c / n[0], k));
            g3 = (l.transpose() * &l).pseudo_inverse(1e-14).unwrap() * l.transpose() * xl;
        }
        best = best.min(fit(&g1, &g2, &g3));
    }
    best
}

#[test]
fn tt_svd_quasi_optimal_at_d3() {
    for s in 0..4 {
        let x = gauss(&[5, 4, 5], 60 + s);
        let (r1, r2) = (2, 2);
        let svd_err = tt_svd(&x, &RankTuple::new(vec![r1, r2]))
            .unwrap()
            .to_dense()
            .unwrap()
            .sub(&x)
            .unwrap()
            .frob_norm();
        let opt = als_best_error(&x, r1, r2, 10);
        assert!(opt <= svd_err * (1.0 + 1e-9), "ALS {opt} worse than TT-SVD {svd_err}");
        assert!(svd_err <= 2f64.sqrt() * opt, "TT-SVD {svd_err} > sqrt(2) * {opt}");
    }
}
