//! Per-sample contractions shared by the sparse projection, sampled
//! evaluation, coherence scans and RIP estimates.
//!
//! Every core is turned into a table of contiguous `r × r'` subblocks,
//! one per index of the *observed* mode. With side information the table
//! stores mixed slices `Σ_j Q[i, j] G(:, j, :)`, so a sample index of the
//! large tensor addresses the small core directly.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::tt::TtCore;

const CHUNK: usize = 2048;

#[derive(Clone, Debug)]
pub(crate) struct SliceTable {
    pub rl: usize,
    pub rr: usize,
    pub n: usize,
    data: Vec<f64>,
}

impl SliceTable {
    pub fn new(core: &TtCore, q: Option<&DMatrix<f64>>) -> Self {
        let (rl, m, rr) = (core.left_rank(), core.mode_size(), core.right_rank());
        let blk = rl * rr;
        match q {
            None => {
                let mut data = vec![0.0; m * blk];
                for i in 0..m {
                    for b in 0..rr {
                        for a in 0..rl {
                            data[i * blk + a + rl * b] = core.get(a, i, b);
                        }
                    }
                }
                SliceTable { rl, rr, n: m, data }
            }
            Some(q) => {
                debug_assert_eq!(q.ncols(), m);
                let n = q.nrows();
                let mut data = vec![0.0; n * blk];
                for j in 0..m {
                    for b in 0..rr {
                        for a in 0..rl {
                            let g = core.get(a, j, b);
                            if g == 0.0 {
                                continue;
                            }
                            for i in 0..n {
                                data[i * blk + a + rl * b] += q[(i, j)] * g;
                            }
                        }
                    }
                }
                SliceTable { rl, rr, n, data }
            }
        }
    }

    #[inline]
    pub fn slice(&self, i: usize) -> &[f64] {
        let blk = self.rl * self.rr;
        &self.data[i * blk..(i + 1) * blk]
    }

    /// `out = l · S_i` (row vector times block).
    #[inline]
    pub fn row_times(&self, l: &[f64], i: usize, out: &mut [f64]) {
        let s = self.slice(i);
        for (b, o) in out.iter_mut().enumerate() {
            let col = &s[self.rl * b..self.rl * (b + 1)];
            *o = col.iter().zip(l).map(|(x, y)| x * y).sum();
        }
    }

    /// `out = S_i · v` (block times column vector).
    #[inline]
    pub fn times_col(&self, v: &[f64], i: usize, out: &mut [f64]) {
        let s = self.slice(i);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (b, &vb) in v.iter().enumerate() {
            let col = &s[self.rl * b..self.rl * (b + 1)];
            for (o, x) in out.iter_mut().zip(col) {
                *o += x * vb;
            }
        }
    }

    /// `l · S_i · v`.
    #[inline]
    pub fn bilinear(&self, l: &[f64], i: usize, v: &[f64]) -> f64 {
        let s = self.slice(i);
        let mut acc = 0.0;
        for (b, &vb) in v.iter().enumerate() {
            let col = &s[self.rl * b..self.rl * (b + 1)];
            acc += vb * col.iter().zip(l).map(|(x, y)| x * y).sum::<f64>();
        }
        acc
    }
}

pub(crate) fn tables(cores: &[TtCore], q: Option<&[DMatrix<f64>]>) -> Vec<SliceTable> {
    cores
        .iter()
        .enumerate()
        .map(|(k, c)| SliceTable::new(c, q.map(|q| &q[k])))
        .collect()
}

/// Value of the train given by `tabs` at a 0-based index.
pub(crate) fn eval_chain(tabs: &[SliceTable], idx: &[usize]) -> f64 {
    let mut l = vec![1.0];
    let mut next = Vec::new();
    for (t, &i) in tabs.iter().zip(idx) {
        next.resize(t.rr, 0.0);
        t.row_times(&l, i, &mut next);
        std::mem::swap(&mut l, &mut next);
    }
    l[0]
}

pub(crate) fn eval_many(tabs: &[SliceTable], idx: &[usize]) -> Vec<f64> {
    let d = tabs.len();
    if idx.len() <= CHUNK * d {
        return idx.chunks(d).map(|w| eval_chain(tabs, w)).collect();
    }
    idx.par_chunks(d).map(|w| eval_chain(tabs, w)).collect()
}

/// Left/right partial products around every core for a base point given
/// in left-orthogonal (`u`) and right-orthogonal (`v`) form.
pub(crate) struct Frame {
    pub u: Vec<SliceTable>,
    pub v: Vec<SliceTable>,
    /// `(1, r₁, …, r_{d−1}, 1)`
    pub ranks: Vec<usize>,
}

/// Scratch vectors for one sample: `left[c] = U_1(i_1)⋯U_c(i_c)` as a row of
/// length r_c, `right[c] = V_{c+2}(i_{c+2})⋯V_d(i_d)` as a column of length
/// r_{c+1} (0-based core `c`).
pub(crate) struct Sweep {
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new(u: Vec<SliceTable>, v: Vec<SliceTable>) -> Self {
        let mut ranks = vec![1];
        ranks.extend(u.iter().map(|t| t.rr));
        Frame { u, v, ranks }
    }

    pub fn order(&self) -> usize {
        self.u.len()
    }

    pub fn sweep_buffers(&self) -> Sweep {
        let d = self.order();
        Sweep {
            left: (0..d).map(|c| vec![0.0; self.ranks[c]]).collect(),
            right: (0..d).map(|c| vec![0.0; self.ranks[c + 1]]).collect(),
        }
    }

    pub fn sweep(&self, idx: &[usize], s: &mut Sweep) {
        let d = self.order();
        s.left[0][0] = 1.0;
        for c in 1..d {
            let (done, rest) = s.left.split_at_mut(c);
            self.u[c - 1].row_times(&done[c - 1], idx[c - 1], &mut rest[0]);
        }
        s.right[d - 1][0] = 1.0;
        for c in (0..d - 1).rev() {
            let (head, tail) = s.right.split_at_mut(c + 1);
            self.v[c + 1].times_col(&tail[0], idx[c + 1], &mut head[c]);
        }
    }

    /// Raw (un-gauged) projected cores of the sparse tensor `Σ_j w_j E_{ω_j}`:
    /// `δG_c(:, i, :) = Σ_j w_j [i_c(ω_j) ↦ i] left_c ⊗ right_c`, followed by
    /// the adjoint of the side-information mixing when `q` is given.
    pub fn accumulate(
        &self,
        idx: &[usize],
        weights: &[f64],
        q: Option<&[DMatrix<f64>]>,
    ) -> Vec<TtCore> {
        let d = self.order();
        let run = |ix: &[usize], ws: &[f64]| -> Vec<Vec<f64>> {
            let mut acc: Vec<Vec<f64>> =
                self.u.iter().map(|t| vec![0.0; t.n * self.ranks_blk(t)]).collect();
            let mut s = self.sweep_buffers();
            for (w, &z) in ix.chunks(d).zip(ws) {
                if z == 0.0 {
                    continue;
                }
                self.sweep(w, &mut s);
                for c in 0..d {
                    let (rl, rr) = (self.ranks[c], self.ranks[c + 1]);
                    let blk = &mut acc[c][w[c] * rl * rr..(w[c] + 1) * rl * rr];
                    for (b, &vb) in s.right[c].iter().enumerate() {
                        let zv = z * vb;
                        for (a, &la) in s.left[c].iter().enumerate() {
                            blk[a + rl * b] += la * zv;
                        }
                    }
                }
            }
            acc
        };
        let acc = if weights.len() <= CHUNK {
            run(idx, weights)
        } else {
            // Fixed chunking and in-order reduction keep the sum bitwise
            // reproducible regardless of thread scheduling.
            let parts: Vec<Vec<Vec<f64>>> = idx
                .par_chunks(CHUNK * d)
                .zip(weights.par_chunks(CHUNK))
                .map(|(ix, ws)| run(ix, ws))
                .collect();
            let mut it = parts.into_iter();
            let mut total = it.next().expect("at least one chunk");
            for p in it {
                for (t, x) in total.iter_mut().zip(p) {
                    t.iter_mut().zip(x).for_each(|(a, b)| *a += b);
                }
            }
            total
        };
        acc.into_iter()
            .enumerate()
            .map(|(c, a)| self.fold_back(c, &a, q.map(|q| &q[c])))
            .collect()
    }

    fn ranks_blk(&self, t: &SliceTable) -> usize {
        t.rl * t.rr
    }

    /// Turn a slice-contiguous accumulator over observed indices into a
    /// core over the small mode: `δG(:, j, :) = Σ_i Q[i, j] acc[i]`.
    fn fold_back(&self, c: usize, acc: &[f64], q: Option<&DMatrix<f64>>) -> TtCore {
        let (rl, rr) = (self.ranks[c], self.ranks[c + 1]);
        let blk = rl * rr;
        let n_obs = acc.len() / blk;
        match q {
            None => {
                let mut core = TtCore::zeros(rl, n_obs, rr);
                for i in 0..n_obs {
                    for b in 0..rr {
                        for a in 0..rl {
                            core.set(a, i, b, acc[i * blk + a + rl * b]);
                        }
                    }
                }
                core
            }
            Some(q) => {
                let m = q.ncols();
                let mut core = TtCore::zeros(rl, m, rr);
                for i in 0..n_obs {
                    let s = &acc[i * blk..(i + 1) * blk];
                    if s.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    for j in 0..m {
                        let w = q[(i, j)];
                        for b in 0..rr {
                            for a in 0..rl {
                                let cur = core.get(a, j, b);
                                core.set(a, j, b, cur + w * s[a + rl * b]);
                            }
                        }
                    }
                }
                core
            }
        }
    }

    /// Values `Σ_c left_c · Υ_c(i_c) · right_c` of a tangent vector with
    /// gauge tables `gauges` at every sample.
    pub fn eval_tangent(&self, gauges: &[SliceTable], idx: &[usize]) -> Vec<f64> {
        let d = self.order();
        let one = |ix: &[usize]| -> Vec<f64> {
            let mut s = self.sweep_buffers();
            ix.chunks(d)
                .map(|w| {
                    self.sweep(w, &mut s);
                    (0..d).map(|c| gauges[c].bilinear(&s.left[c], w[c], &s.right[c])).sum()
                })
                .collect()
        };
        if idx.len() <= CHUNK * d {
            return one(idx);
        }
        idx.par_chunks(CHUNK * d).flat_map_iter(one).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::tt::{gaussian_tt, RankTuple};

    #[test]
    fn chain_matches_tt_eval() {
        let x = gaussian_tt(&Shape::new(vec![3, 4, 5]).unwrap(), &RankTuple::new(vec![2, 3]), 1)
            .unwrap();
        let t = tables(x.cores(), None);
        for idx in [[0, 0, 0], [2, 3, 4], [1, 2, 0]] {
            assert!((eval_chain(&t, &idx) - x.eval0(&idx)).abs() < 1e-13);
        }
    }

    #[test]
    fn mixed_slices_match_mode_product() {
        let x = gaussian_tt(&Shape::new(vec![3, 4, 2]).unwrap(), &RankTuple::new(vec![2, 2]), 2)
            .unwrap();
        let q: Vec<DMatrix<f64>> = [5, 6, 3]
            .iter()
            .zip(x.shape().dims())
            .map(|(&n, &m)| DMatrix::from_fn(n, m, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0))
            .collect();
        let t = tables(x.cores(), Some(&q));
        let big: Vec<TtCore> =
            x.cores().iter().zip(&q).map(|(c, q)| c.mode_product(q)).collect();
        let big = crate::tt::TensorTrain::new(big).unwrap();
        for idx in [[0, 0, 0], [4, 5, 2], [2, 1, 1]] {
            assert!((eval_chain(&t, &idx) - big.eval0(&idx)).abs() < 1e-11);
        }
    }
}
