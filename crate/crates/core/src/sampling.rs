//! Uniform sampling with replacement and the sampling operator
//! `R_Ω X = Σ_{ω∈Ω} X(ω) E_ω`.

use rand::Rng;

use crate::error::{Result, TtError};
use crate::kernel;
use crate::rng::rng_from_seed;
use crate::tensor::{DenseTensor, MultiIndex, Shape, SparseTensor};
use crate::tt::TensorTrain;

/// A multiset of multi-indices.
///
/// `entries` keeps the draw order (values are aligned with it); the unique
/// indices are sorted by linear offset and carry their multiplicity, which
/// is what operator applications use.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    shape: Shape,
    entries: Vec<usize>,
    unique: Vec<usize>,
    mult: Vec<u32>,
    slot: Vec<usize>,
}

impl SampleSet {
    /// From 0-based indices stored flat, `d` per entry.
    pub fn from_flat(shape: Shape, entries: Vec<usize>) -> Result<Self> {
        let d = shape.order();
        if entries.is_empty() || !entries.len().is_multiple_of(d) {
            return Err(TtError::InvalidArgument(format!(
                "{} index entries do not form a nonempty list of {d}-tuples",
                entries.len()
            )));
        }
        for w in entries.chunks(d) {
            for (k, (&i, &n)) in w.iter().zip(shape.dims()).enumerate() {
                if i >= n {
                    return Err(TtError::IndexOutOfRange(format!(
                        "index {} in mode {} exceeds {n}",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        let count = entries.len() / d;
        let mut order: Vec<usize> = (0..count).collect();
        let key = |j: usize| entries[j * d..(j + 1) * d].iter().rev();
        order.sort_by(|&a, &b| key(a).cmp(key(b)));
        let mut unique = Vec::new();
        let mut mult: Vec<u32> = Vec::new();
        let mut slot = vec![0; count];
        for (pos, &j) in order.iter().enumerate() {
            let w = &entries[j * d..(j + 1) * d];
            if pos > 0 && unique[unique.len() - d..] == *w {
                *mult.last_mut().expect("nonempty") += 1;
            } else {
                unique.extend_from_slice(w);
                mult.push(1);
            }
            slot[j] = mult.len() - 1;
        }
        Ok(SampleSet { shape, entries, unique, mult, slot })
    }

    /// From 1-based multi-indices.
    pub fn from_indices(shape: Shape, indices: &[MultiIndex]) -> Result<Self> {
        let mut flat = Vec::with_capacity(indices.len() * shape.order());
        for idx in indices {
            idx.check(&shape)?;
            flat.extend(idx.to_zero_based());
        }
        Self::from_flat(shape, flat)
    }

    /// Every index of the grid exactly once.
    pub fn full_grid(shape: &Shape) -> Result<Self> {
        let n = shape.checked_numel().ok_or_else(|| TtError::SizeGuard("grid too large".into()))?;
        let flat = (0..n).flat_map(|o| shape.unravel0(o)).collect();
        Self::from_flat(shape.clone(), flat)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.entries.len() / self.shape.order()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `ρ = |Ω| / ∏n_k`.
    pub fn rho(&self) -> f64 {
        self.len() as f64 / self.shape.numel_f64()
    }

    /// 0-based index of draw `j`.
    pub fn entry(&self, j: usize) -> &[usize] {
        let d = self.shape.order();
        &self.entries[j * d..(j + 1) * d]
    }

    pub fn entries_flat(&self) -> &[usize] {
        &self.entries
    }

    pub fn unique_flat(&self) -> &[usize] {
        &self.unique
    }

    pub fn unique_len(&self) -> usize {
        self.mult.len()
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.mult
    }

    /// Position of draw `j` in the unique list.
    pub fn unique_slot(&self, j: usize) -> usize {
        self.slot[j]
    }

    /// `‖R_Ω‖`, the largest number of repetitions of one index.
    pub fn max_multiplicity(&self) -> u32 {
        self.mult.iter().copied().max().unwrap_or(0)
    }

    fn check_shape(&self, s: &Shape) -> Result<()> {
        if s != &self.shape {
            return Err(TtError::DimensionMismatch(format!(
                "sample of shape {:?} applied to tensor of shape {:?}",
                self.shape.dims(),
                s.dims()
            )));
        }
        Ok(())
    }

    /// Values at the unique indices.
    pub(crate) fn gather_unique_tt(&self, x: &TensorTrain) -> Vec<f64> {
        kernel::eval_many(&kernel::tables(x.cores(), None), &self.unique)
    }

    /// `values[j] = X(entries[j])` for a dense tensor.
    pub fn observe_dense(&self, x: &DenseTensor) -> Result<Observations> {
        self.check_shape(x.shape())?;
        let d = self.shape.order();
        let values = self.entries.chunks(d).map(|w| x.get0(w)).collect();
        Observations::new(self.clone(), values)
    }

    /// `values[j] = X(entries[j])` for a tensor train, O(d r²) per entry.
    pub fn observe_tt(&self, x: &TensorTrain) -> Result<Observations> {
        self.check_shape(x.shape())?;
        let u = self.gather_unique_tt(x);
        let values = (0..self.len()).map(|j| u[self.slot[j]]).collect();
        Observations::new(self.clone(), values)
    }

    /// `R_Ω X` as a dense tensor: entry ω scaled by its multiplicity.
    pub fn apply_dense(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.check_shape(x.shape())?;
        let d = self.shape.order();
        let mut data = vec![0.0; x.data().len()];
        for (w, &m) in self.unique.chunks(d).zip(&self.mult) {
            let off = self.shape.offset0(w);
            data[off] = m as f64 * x.data()[off];
        }
        DenseTensor::new(self.shape.clone(), data)
    }

    /// `R_Ω X` in coordinate form over the unique indices.
    pub fn apply_sparse_tt(&self, x: &TensorTrain) -> Result<SparseTensor> {
        self.check_shape(x.shape())?;
        let vals = self
            .gather_unique_tt(x)
            .into_iter()
            .zip(&self.mult)
            .map(|(v, &m)| m as f64 * v)
            .collect();
        SparseTensor::new(self.shape.clone(), self.unique.clone(), vals)
    }
}

/// Observed values aligned with the draws of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    sample: SampleSet,
    values: Vec<f64>,
}

impl Observations {
    pub fn new(sample: SampleSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != sample.len() {
            return Err(TtError::DimensionMismatch(format!(
                "{} values for {} sampled entries",
                values.len(),
                sample.len()
            )));
        }
        Ok(Observations { sample, values })
    }

    pub fn sample(&self) -> &SampleSet {
        &self.sample
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> &Shape {
        self.sample.shape()
    }

    /// One value per unique index (the mean over repeated draws).
    pub fn unique_values(&self) -> Vec<f64> {
        let s = &self.sample;
        let mut acc = vec![0.0; s.unique_len()];
        for (j, v) in self.values.iter().enumerate() {
            acc[s.slot[j]] += v;
        }
        acc.iter_mut().zip(&s.mult).for_each(|(a, &m)| *a /= m as f64);
        acc
    }

    /// `Σ_j values[j] E_{ω_j}`; equals `R_Ω X` when the values are `X(ω)`.
    pub fn adjoint_dense(&self) -> DenseTensor {
        self.to_sparse().to_dense()
    }

    pub fn to_sparse(&self) -> SparseTensor {
        SparseTensor::new(self.shape().clone(), self.sample.entries.clone(), self.values.clone())
            .expect("indices validated at construction")
    }

    /// `‖R_Ω A‖_F` for the observed tensor A.
    pub fn norm(&self) -> f64 {
        self.unique_values()
            .iter()
            .zip(self.sample.multiplicities())
            .map(|(v, &m)| (m as f64 * v).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `count` i.i.d. uniform draws (with replacement) from a ChaCha8 stream
/// seeded with `seed`; mode indices are drawn in order k = 1..d.
pub fn sample_uniform(shape: &Shape, count: usize, seed: u64) -> Result<SampleSet> {
    if count == 0 {
        return Err(TtError::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let dims = shape.dims();
    let mut flat = Vec::with_capacity(count * dims.len());
    for _ in 0..count {
        for &n in dims {
            flat.push(rng.random_range(0..n));
        }
    }
    SampleSet::from_flat(shape.clone(), flat)
}

/// Principal branch of the Lambert W function on `x ≥ 0` (Halley iteration).
pub fn lambert_w(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(TtError::InvalidArgument(format!("lambert_w needs finite x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut w = if x < 3.0 { (1.0 + x).ln() * 0.7 } else { x.ln() - x.ln().ln().max(0.0) };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// `d β log n / W(d)`, `n = max n_k`: the high-probability bound on the
/// number of repetitions of any index.
pub fn repetition_bound(shape: &Shape, beta: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(TtError::InvalidArgument(format!("beta must exceed 1, got {beta}")));
    }
    let d = shape.order() as f64;
    let n = shape.max_dim() as f64;
    Ok(d * beta * n.ln() / lambert_w(d)?)
}

/// `n^{d(1−β)}`, the failure probability attached to `repetition_bound`.
pub fn repetition_tail(shape: &Shape, beta: f64) -> f64 {
    let d = shape.order() as f64;
    (shape.max_dim() as f64).powf(d * (1.0 - beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    fn gauss(s: &Shape, seed: u64) -> DenseTensor {
        let mut rng = rng_from_seed(seed);
        DenseTensor::from_fn(s.clone(), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn lambert_w_values() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-14);
        assert!((lambert_w(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-14);
        for x in [1e-8, 0.3, 1.0, 3.0, 10.0, 1e3, 1e8] {
            let w = lambert_w(x).unwrap();
            assert!((w * w.exp() - x).abs() <= 1e-12 * x);
        }
        assert!(lambert_w(-0.1).is_err());
    }

    #[test]
    fn deterministic_and_counts() {
        let s = shape(&[4, 5, 3]);
        let a = sample_uniform(&s, 60, 9).unwrap();
        assert_eq!(a, sample_uniform(&s, 60, 9).unwrap());
        assert_eq!(a.multiplicities().iter().sum::<u32>(), 60);
        assert!(a.max_multiplicity() > 1);
        assert!((a.rho() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_grid_is_identity() {
        let s = shape(&[3, 4, 2]);
        let om = SampleSet::full_grid(&s).unwrap();
        let x = gauss(&s, 1);
        assert_eq!(om.apply_dense(&x).unwrap(), x);
        assert_eq!(om.observe_dense(&x).unwrap().adjoint_dense(), x);
        assert_eq!(om.max_multiplicity(), 1);
    }

    #[test]
    fn duplicate_doubles() {
        let s = shape(&[3, 3]);
        let om = SampleSet::from_indices(
            s.clone(),
            &[MultiIndex::new(vec![2, 3]), MultiIndex::new(vec![2, 3])],
        )
        .unwrap();
        let x = gauss(&s, 2);
        let rx = om.apply_dense(&x).unwrap();
        assert_eq!(rx.get0(&[1, 2]), 2.0 * x.get0(&[1, 2]));
        assert_eq!(om.observe_dense(&x).unwrap().adjoint_dense(), rx);
        let rrx = om.apply_dense(&rx).unwrap();
        assert_eq!(rrx.get0(&[1, 2]), 4.0 * x.get0(&[1, 2]));
    }

    #[test]
    fn self_adjoint() {
        let s = shape(&[4, 3, 5]);
        let om = sample_uniform(&s, 40, 3).unwrap();
        let x = gauss(&s, 4);
        let y = gauss(&s, 5);
        let a = om.apply_dense(&x).unwrap().inner(&y).unwrap();
        let b = x.inner(&om.apply_dense(&y).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        assert!(om.apply_dense(&x).unwrap().inner(&x).unwrap() >= 0.0);
    }

    #[test]
    fn tt_and_dense_observations_agree() {
        let s = shape(&[4, 3, 5]);
        let x = crate::tt::gaussian_tt(&s, &crate::tt::RankTuple::new(vec![2, 2]), 1).unwrap();
        let om = sample_uniform(&s, 30, 3).unwrap();
        let a = om.observe_tt(&x).unwrap();
        let b = om.observe_dense(&x.to_dense().unwrap()).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_rejects_small_beta() {
        assert!(repetition_bound(&shape(&[16, 16, 16]), 1.0).is_err());
        let b = repetition_bound(&shape(&[16, 16, 16]), 2.0).unwrap();
        assert!((b - 6.0 * 16f64.ln() / lambert_w(3.0).unwrap()).abs() < 1e-12);
    }
}
