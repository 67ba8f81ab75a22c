use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use ttcomp_core::coherence::{
    core_coherence, interface_coherence, left_core_coherence, projection_coherence, rip_estimate,
    subspace_coherence,
};
use ttcomp_core::oracle::{column_basis, dense_opnorm, dense_projector, dense_tangent_basis};
use ttcomp_core::rng::rng_from_seed;
use ttcomp_core::sampling::{sample_uniform, SampleSet};
use ttcomp_core::tangent::projector_distance;
use ttcomp_core::tt::{gaussian_tt, tt_round};
use ttcomp_core::{DenseTensor, ProjectorHandle, RankTuple, Shape, TensorTrain};

fn tt(dims: &[usize], r: &[usize], seed: u64) -> TensorTrain {
    gaussian_tt(&Shape::new(dims.to_vec()).unwrap(), &RankTuple::new(r.to_vec()), seed).unwrap()
}

fn gauss(shape: &Shape, seed: u64) -> DenseTensor {
    let mut rng = rng_from_seed(seed);
    DenseTensor::from_fn(shape.clone(), |_| StandardNormal.sample(&mut rng))
}

fn vecd(x: &DenseTensor) -> DVector<f64> {
    DVector::from_column_slice(x.data())
}

#[test]
fn complement_of_tangent_space_projects_to_zero() {
    let x = tt(&[4, 3, 4], &[2, 2], 1);
    let b = dense_tangent_basis(&x).unwrap();
    let p = ProjectorHandle::new(&x).unwrap();
    for s in 0..5 {
        let z = gauss(x.shape(), 10 + s);
        let v = vecd(&z);
        let perp = &v - &b * (b.transpose() * &v);
        let zp = DenseTensor::new(x.shape().clone(), perp.as_slice().to_vec()).unwrap();
        let y = p.project_dense(&zp).unwrap();
        assert!(y.norm() <= 1e-12 * zp.frob_norm(), "{}", y.norm());
    }
}

#[test]
fn tangent_norm_is_ambient_norm() {
    let x = tt(&[3, 5, 4, 3], &[2, 3, 2], 2);
    let p = ProjectorHandle::new(&x).unwrap();
    let y = p.random_tangent(3);
    let n2 = y.to_dense().unwrap().frob_norm().powi(2);
    assert!((y.inner(&y).unwrap() - n2).abs() <= 1e-12 * n2);
}

#[test]
fn interface_projectors() {
    let x = tt(&[3, 4, 3, 3], &[2, 3, 2], 4);
    let p = ProjectorHandle::new(&x).unwrap();
    let dense = x.to_dense().unwrap();
    let z = gauss(x.shape(), 5);
    assert_eq!(p.proj_leq(0, &z).unwrap().data(), z.data());
    for k in 1..4 {
        let once = p.proj_leq(k, &z).unwrap();
        let twice = p.proj_leq(k, &once).unwrap();
        assert!(twice.sub(&once).unwrap().frob_norm() <= 1e-12 * once.frob_norm());
        let base = p.proj_leq(k, &dense).unwrap();
        assert!(base.sub(&dense).unwrap().frob_norm() <= 1e-12 * dense.frob_norm());
    }
}

#[test]
fn projector_distance_matches_dense_opnorm() {
    for s in 0..5 {
        let x = tt(&[4, 3, 4], &[2, 2], 20 + s);
        let g = tt(&[4, 3, 4], &[2, 2], 30 + s);
        let t = 0.05 * x.frob_norm() / g.frob_norm();
        let xt = tt_round(&x.add(&g.scaled(t)).unwrap(), &x.ranks()).unwrap();
        let pd = projector_distance(&x, &xt).unwrap();
        let want = dense_opnorm(&(dense_projector(&x).unwrap() - dense_projector(&xt).unwrap()));
        assert!((pd.dist - want).abs() <= 1e-10, "{} vs {want}", pd.dist);
        assert!(pd.dist <= 2.0);
    }
}

#[test]
fn subspace_coherence_rotation_invariant() {
    let mut rng = rng_from_seed(6);
    let g = DMatrix::from_fn(100, 5, |_, _| StandardNormal.sample(&mut rng));
    let u = column_basis(&g);
    let rot = column_basis(&DMatrix::from_fn(5, 5, |_, _| StandardNormal.sample(&mut rng)));
    let a = subspace_coherence(&u).unwrap();
    let b = subspace_coherence(&(&u * rot)).unwrap();
    assert!((1.0..=20.0).contains(&a));
    assert!((a - b).abs() <= 1e-12 * a);
}

#[test]
fn interface_coherence_matches_dense_unfoldings() {
    for s in 0..3 {
        let x = tt(&[4, 4, 4], &[2, 2], 40 + s);
        let ic = interface_coherence(&x).unwrap();
        let dense = x.to_dense().unwrap();
        for k in 1..3 {
            let m = dense.unfold(k).unwrap();
            let left = subspace_coherence(&column_basis(&m)).unwrap();
            let right = subspace_coherence(&column_basis(&m.transpose())).unwrap();
            assert!((ic.left[k - 1].unwrap() - left).abs() <= 1e-10 * left);
            assert!((ic.right[k - 1].unwrap() - right).abs() <= 1e-10 * right);
        }
    }
}

#[test]
fn first_left_core_coherence_is_matrix_coherence() {
    let x = tt(&[6, 4, 5], &[3, 2], 7).orthogonalize(3).unwrap();
    let u = x.cores()[0].left_unfold();
    let want = subspace_coherence(&u).unwrap();
    assert!((left_core_coherence(&x.cores()[0]) - want).abs() <= 1e-12 * want);
}

#[test]
fn matrix_core_coherence_is_max_of_factor_coherences() {
    let x = tt(&[7, 6], &[2], 8);
    let m = x.to_dense().unwrap().unfold(1).unwrap();
    let mu_u = subspace_coherence(&column_basis(&m)).unwrap();
    let mu_v = subspace_coherence(&column_basis(&m.transpose())).unwrap();
    let cc = core_coherence(&x).unwrap();
    assert!((cc.mu_c - mu_u.max(mu_v)).abs() <= 1e-10 * cc.mu_c);
}

#[test]
fn projection_coherence_is_max_projector_diagonal() {
    let x = tt(&[4, 3, 4], &[2, 2], 9);
    let p = dense_projector(&x).unwrap();
    let want = p.diagonal().max();
    let got = projection_coherence(&x).unwrap();
    assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
}

#[test]
fn samples_on_one_slice_break_rip() {
    let x = tt(&[6, 6, 6], &[2, 2], 11);
    let shape = x.shape().clone();
    let entries: Vec<usize> = (0..36).flat_map(|j| [0, j % 6, j / 6]).collect();
    let slice = SampleSet::from_flat(shape.clone(), entries).unwrap();
    let eps = rip_estimate(&x, &slice).unwrap().eps;
    assert!(eps >= 0.9, "{eps}");
    let spread = sample_uniform(&shape, 36 * 30, 12).unwrap();
    assert!(rip_estimate(&x, &spread).unwrap().eps < eps);
}

#[test]
fn uniform_sampling_chi_square() {
    let shape = Shape::new(vec![4, 4]).unwrap();
    let n = 1_000_000;
    let s = sample_uniform(&shape, n, 13).unwrap();
    let mut counts = [0usize; 16];
    for j in 0..s.len() {
        let w = s.entry(j);
        counts[w[0] + 4 * w[1]] += 1;
    }
    let expect = n as f64 / 16.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // 15 degrees of freedom: mean 15, sd √30; 5σ above the mean.
    assert!(chi2 < 15.0 + 5.0 * 30f64.sqrt(), "chi2 = {chi2}");
    assert_eq!(counts.iter().sum::<usize>(), n);
}
