//! Batch experiments: completion phase plots with and without side
//! information, the chi-squared product study, and coherence reports.
//!
//! Every trial is seeded independently with
//! `derive_seed(master, [d, n, |Ω|, trial])`; from that trial seed the
//! ground truth, initial point, training set, test set and side
//! information use `derive_seed(trial_seed, [j])` for j = 0, 1, 2, 3, 4
//! respectively. Results therefore do not depend on thread scheduling.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{rip_estimate, CoherenceReport, RipEstimate};
use crate::error::{Result, TtError};
use crate::rgd::{solve_completion, SolverConfig};
use crate::rng::derive_seed;
use crate::sampling::{repetition_bound, repetition_tail, sample_uniform, SampleSet};
use crate::sideinfo::{solve_side, SideInfo};
use crate::tensor::Shape;
use crate::tt::{gaussian_tt, RankTuple, TensorTrain};

const SEED_TRUTH: u64 = 0;
const SEED_INIT: u64 = 1;
const SEED_TRAIN: u64 = 2;
const SEED_TEST: u64 = 3;
const SEED_SIDE: u64 = 4;

/// `d² r² n log(n) / 10`.
pub fn reference_samples(d: usize, r: usize, n: usize) -> f64 {
    reference_samples_pow(d, r, n, 2.0)
}

/// `d^p r² n log(n) / 10`.
pub fn reference_samples_pow(d: usize, r: usize, n: usize, p: f64) -> f64 {
    (d as f64).powf(p) * (r * r * n) as f64 * (n as f64).ln() / 10.0
}

/// Solver settings an experiment may override; the rest of
/// [`SolverConfig`] is filled per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOverrides {
    pub max_iters: usize,
    pub success_tol: f64,
    pub stall_tol: f64,
    pub stall_window: usize,
}

impl Default for SolverOverrides {
    fn default() -> Self {
        let c = SolverConfig::default();
        SolverOverrides {
            max_iters: c.max_iters,
            success_tol: c.success_tol,
            stall_tol: c.stall_tol,
            stall_window: c.stall_window,
        }
    }
}

impl SolverOverrides {
    fn config(&self, ranks: RankTuple, seed: u64) -> SolverConfig {
        SolverConfig {
            ranks,
            max_iters: self.max_iters,
            success_tol: self.success_tol,
            stall_tol: self.stall_tol,
            stall_window: self.stall_window,
            seed,
            record_trace: false,
            ..SolverConfig::default()
        }
    }
}

/// Sample sizes of a phase plot row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleGrid {
    /// The same absolute sizes for every row.
    Absolute(Vec<usize>),
    /// Multiples of `d² r² n log(n)/10` (plain) or `d m r²` (side info).
    Reference(Vec<f64>),
    /// Multiples of the manifold dimension.
    Dimension(Vec<f64>),
}

impl SampleGrid {
    fn sizes(&self, reference: f64, dim: usize) -> Vec<usize> {
        let scale = |fs: &[f64], base: f64| -> Vec<usize> {
            fs.iter().map(|f| ((f * base).round() as usize).max(1)).collect()
        };
        match self {
            SampleGrid::Absolute(v) => v.clone(),
            SampleGrid::Reference(f) => scale(f, reference),
            SampleGrid::Dimension(f) => scale(f, dim as f64),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            SampleGrid::Absolute(v) => v.is_empty(),
            SampleGrid::Reference(v) | SampleGrid::Dimension(v) => v.is_empty(),
        }
    }
}

fn default_trials() -> usize {
    5
}

/// Plain completion phase plot over `(d, |Ω|)` for every `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub rank: usize,
    pub samples: SampleGrid,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// `|Ω₂|`; defaults to `|Ω₁|`.
    #[serde(default)]
    pub test_size: Option<usize>,
    #[serde(default)]
    pub solver: SolverOverrides,
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.d.is_empty() || self.samples.is_empty() {
            return Err(TtError::InvalidArgument("n, d and sample grids must be nonempty".into()));
        }
        if self.trials == 0 || self.rank == 0 {
            return Err(TtError::InvalidArgument("trials and rank must be at least 1".into()));
        }
        if self.d.iter().any(|&d| d < 2) || self.n.iter().any(|&n| n < 2) {
            return Err(TtError::InvalidArgument("need d >= 2 and n >= 2".into()));
        }
        if self.test_size == Some(0) {
            return Err(TtError::InvalidArgument("test_size must be at least 1".into()));
        }
        for &n in &self.n {
            for &d in &self.d {
                RankTuple::uniform(self.rank, d).check_representable(&Shape::uniform(n, d)?)?;
            }
        }
        Ok(())
    }
}

/// Side-information phase plot: fixed `d`, `m`, varying `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidePhaseConfig {
    pub n: Vec<usize>,
    pub d: usize,
    pub m: usize,
    pub rank: usize,
    pub samples: SampleGrid,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub test_size: Option<usize>,
    #[serde(default)]
    pub solver: SolverOverrides,
}

impl SidePhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.samples.is_empty() {
            return Err(TtError::InvalidArgument("n and sample grids must be nonempty".into()));
        }
        if self.trials == 0 || self.rank == 0 || self.d < 2 {
            return Err(TtError::InvalidArgument("need trials, rank >= 1 and d >= 2".into()));
        }
        if self.n.iter().any(|&n| n < self.m) {
            return Err(TtError::InvalidArgument("every n must be at least m".into()));
        }
        if self.test_size == Some(0) {
            return Err(TtError::InvalidArgument("test_size must be at least 1".into()));
        }
        RankTuple::uniform(self.rank, self.d).check_representable(&Shape::uniform(self.m, self.d)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub d: usize,
    pub n: usize,
    /// Side-information dimension; equals `n` for plain completion.
    pub m: usize,
    pub samples: usize,
    pub trials: usize,
    pub successes: usize,
    pub frequency: f64,
    /// Manifold dimension of the unknown.
    pub dim: usize,
    /// Median final test error over trials.
    pub median_test_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub rank: usize,
    pub cells: Vec<PhaseCell>,
}

impl PhaseTable {
    /// CSV, one row per cell, with the reference curves
    /// `d² r² n log n/10` and `d^{2.2} r² n log n/10` alongside.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "d,n,m,samples,trials,successes,frequency,dim,ref_d2,ref_d22,median_test_error")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{:.3},{:.3},{:e}",
                c.d,
                c.n,
                c.m,
                c.samples,
                c.trials,
                c.successes,
                c.frequency,
                c.dim,
                reference_samples(c.d, self.rank, c.n),
                reference_samples_pow(c.d, self.rank, c.n, 2.2),
                c.median_test_error
            )?;
        }
        Ok(())
    }

    pub fn cell(&self, d: usize, n: usize, samples: usize) -> Option<&PhaseCell> {
        self.cells.iter().find(|c| c.d == d && c.n == n && c.samples == samples)
    }
}

pub fn trial_seed(master: u64, d: usize, n: usize, samples: usize, trial: usize) -> u64 {
    derive_seed(master, &[d as u64, n as u64, samples as u64, trial as u64])
}

struct Job {
    d: usize,
    n: usize,
    samples: usize,
    trial: usize,
}

/// Outcome of one trial: success flag and final test error.
type Outcome = (bool, f64);

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn collect(jobs: &[Job], outcomes: Vec<Result<Outcome>>, trials: usize, dims: impl Fn(&Job) -> (usize, usize)) -> Result<Vec<PhaseCell>> {
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for (group, res) in jobs.chunks(trials).zip(outcomes.chunks(trials)) {
        let j = &group[0];
        let (m, dim) = dims(j);
        let successes = res.iter().filter(|r| r.0).count();
        let mut errs: Vec<f64> = res.iter().map(|r| r.1).collect();
        cells.push(PhaseCell {
            d: j.d,
            n: j.n,
            m,
            samples: j.samples,
            trials,
            successes,
            frequency: successes as f64 / trials as f64,
            dim,
            median_test_error: median(&mut errs),
        });
    }
    Ok(cells)
}

fn plain_trial(cfg: &PhaseConfig, j: &Job) -> Result<Outcome> {
    let shape = Shape::uniform(j.n, j.d)?;
    let ranks = RankTuple::uniform(cfg.rank, j.d);
    let s = trial_seed(cfg.master_seed, j.d, j.n, j.samples, j.trial);
    let truth = gaussian_tt(&shape, &ranks, derive_seed(s, &[SEED_TRUTH]))?;
    let train = sample_uniform(&shape, j.samples, derive_seed(s, &[SEED_TRAIN]))?.observe_tt(&truth)?;
    let test_n = cfg.test_size.unwrap_or(j.samples);
    let test = sample_uniform(&shape, test_n, derive_seed(s, &[SEED_TEST]))?.observe_tt(&truth)?;
    let solver = cfg.solver.config(ranks, derive_seed(s, &[SEED_INIT]));
    let res = solve_completion(&train, &solver, None, None, Some(&test))?;
    Ok((res.success, res.test_error.unwrap_or(f64::NAN)))
}

/// Run every `(n, d, |Ω|, trial)` in parallel; cells come back in grid
/// order (n outermost, then d, then |Ω|).
pub fn run_phase_plot(cfg: &PhaseConfig) -> Result<PhaseTable> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &n in &cfg.n {
        for &d in &cfg.d {
            let dim = RankTuple::uniform(cfg.rank, d).manifold_dim(&Shape::uniform(n, d)?);
            for samples in cfg.samples.sizes(reference_samples(d, cfg.rank, n), dim) {
                for trial in 0..cfg.trials {
                    jobs.push(Job { d, n, samples, trial });
                }
            }
        }
    }
    let outcomes: Vec<Result<Outcome>> = jobs.par_iter().map(|j| plain_trial(cfg, j)).collect();
    let cells = collect(&jobs, outcomes, cfg.trials, |j| {
        let dim = RankTuple::uniform(cfg.rank, j.d)
            .manifold_dim(&Shape::uniform(j.n, j.d).expect("validated"));
        (j.n, dim)
    })?;
    Ok(PhaseTable { rank: cfg.rank, cells })
}

fn side_trial(cfg: &SidePhaseConfig, j: &Job) -> Result<Outcome> {
    let large = Shape::uniform(j.n, cfg.d)?;
    let small = Shape::uniform(cfg.m, cfg.d)?;
    let ranks = RankTuple::uniform(cfg.rank, cfg.d);
    let s = trial_seed(cfg.master_seed, cfg.d, j.n, j.samples, j.trial);
    let side = SideInfo::random(&large, &small, derive_seed(s, &[SEED_SIDE]))?;
    let b = gaussian_tt(&small, &ranks, derive_seed(s, &[SEED_TRUTH]))?;
    let a = side.apply_tt(&b)?;
    let train = sample_uniform(&large, j.samples, derive_seed(s, &[SEED_TRAIN]))?.observe_tt(&a)?;
    let test_n = cfg.test_size.unwrap_or(j.samples);
    let test = sample_uniform(&large, test_n, derive_seed(s, &[SEED_TEST]))?.observe_tt(&a)?;
    let solver = cfg.solver.config(ranks, derive_seed(s, &[SEED_INIT]));
    let res = solve_side(&train, &side, &solver, None, None, Some(&test))?;
    Ok((res.success, res.test_error.unwrap_or(f64::NAN)))
}

/// Side-information phase plot over `(n, |Ω|)`. The reference scale for
/// [`SampleGrid::Reference`] is `d m r²`.
pub fn run_phase_plot_side(cfg: &SidePhaseConfig) -> Result<PhaseTable> {
    cfg.validate()?;
    let small = Shape::uniform(cfg.m, cfg.d)?;
    let dim = RankTuple::uniform(cfg.rank, cfg.d).manifold_dim(&small);
    let reference = (cfg.d * cfg.m * cfg.rank * cfg.rank) as f64;
    let mut jobs = Vec::new();
    for &n in &cfg.n {
        for samples in cfg.samples.sizes(reference, dim) {
            for trial in 0..cfg.trials {
                jobs.push(Job { d: cfg.d, n, samples, trial });
            }
        }
    }
    let outcomes: Vec<Result<Outcome>> = jobs.par_iter().map(|j| side_trial(cfg, j)).collect();
    let cells = collect(&jobs, outcomes, cfg.trials, |_| (cfg.m, dim))?;
    Ok(PhaseTable { rank: cfg.rank, cells })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiRow {
    pub k: usize,
    pub median: f64,
    pub mean: f64,
    /// `E ∏ χ²(r) = r^k`.
    pub expected_mean: f64,
}

/// Empirical median and mean of `∏_{j≤k} χ²(r)` for k = 1..k_max. Each
/// draw extends the product of the previous k, so rows share samples.
pub fn run_chi_median(r: usize, k_max: usize, samples: usize, seed: u64) -> Result<Vec<ChiRow>> {
    if r == 0 || k_max == 0 {
        return Err(TtError::InvalidArgument("r and k_max must be at least 1".into()));
    }
    if samples < 10_000 {
        return Err(TtError::InvalidArgument(format!("need at least 10000 samples, got {samples}")));
    }
    let chi = ChiSquared::new(r as f64).map_err(|e| TtError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prod = vec![1.0f64; samples];
    let mut rows = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        for p in prod.iter_mut() {
            *p *= chi.sample(&mut rng);
        }
        let mean = prod.iter().sum::<f64>() / samples as f64;
        let mut sorted = prod.clone();
        rows.push(ChiRow {
            k,
            median: median(&mut sorted),
            mean,
            expected_mean: (r as f64).powi(k as i32),
        });
    }
    Ok(rows)
}

pub fn write_chi_csv<W: Write>(rows: &[ChiRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "k,median,mean,expected_mean")?;
    for r in rows {
        writeln!(w, "{},{:e},{:e},{:e}", r.k, r.median, r.mean, r.expected_mean)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub beta: f64,
    pub bound: f64,
    pub tail_probability: f64,
    pub max_multiplicity: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FullReport {
    pub coherence: CoherenceReport,
    pub repetition: RepetitionReport,
    pub rip: Option<RipEstimate>,
    pub samples: Option<usize>,
}

/// Coherence report, repetition bound and, when a sample is given, the
/// tangent-space RIP estimate.
pub fn run_reports(x: &TensorTrain, omega: Option<&SampleSet>, beta: f64) -> Result<FullReport> {
    let coherence = CoherenceReport::new(x)?;
    let repetition = RepetitionReport {
        beta,
        bound: repetition_bound(x.shape(), beta)?,
        tail_probability: repetition_tail(x.shape(), beta),
        max_multiplicity: omega.map(|o| o.max_multiplicity()),
    };
    let rip = omega.map(|o| rip_estimate(x, o)).transpose()?;
    Ok(FullReport { coherence, repetition, rip, samples: omega.map(|o| o.len()) })
}
