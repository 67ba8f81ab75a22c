//! `ttcomp`: tensor-train completion experiments from the command line.
//!
//! Every subcommand takes an optional JSON config (`--config`) whose keys
//! can be overridden by flags, writes its tables as CSV into `--out`, and
//! records a `<command>.json` metadata file with the effective config,
//! seeds and tool version. Failures print `{"error": {...}}` on stderr and
//! exit nonzero (2 for bad input, 1 for runtime errors).

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Map, Value};

use ttcomp_core::coherence::{rip_estimate, CoherenceReport};
use ttcomp_core::harness::{
    run_chi_median, run_phase_plot, run_phase_plot_side, run_reports, write_chi_csv, PhaseConfig,
    SidePhaseConfig, SolverOverrides,
};
use ttcomp_core::io::{self as tio, BinaryKind};
use ttcomp_core::rgd::{solve_completion, SolveResult, SolverConfig};
use ttcomp_core::rng::derive_seed;
use ttcomp_core::sampling::{sample_uniform, SampleSet};
use ttcomp_core::sideinfo::{solve_side, SideInfo};
use ttcomp_core::tt::{gaussian_tt, tt_svd};
use ttcomp_core::{RankTuple, Shape, TensorTrain, TtError};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "ttcomp", version, about = "Tensor-train completion by Riemannian gradient descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    success_tol: Option<f64>,
    #[arg(long)]
    stall_tol: Option<f64>,
    #[arg(long)]
    stall_window: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a tensor from observed entries.
    Complete {
        #[command(flatten)]
        common: Common,
        /// Observations (CSV with 1-based indices, or JSON).
        #[arg(long)]
        observations: Option<PathBuf>,
        /// Shape for CSV observations, e.g. 20,20,20.
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
        /// Held-out observations for the success test.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Ground truth TT, for the true-error trace column.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Side information; the solver then works on the small shape.
        #[arg(long)]
        side: Option<PathBuf>,
        /// Initial point (TT file); random otherwise.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Completion phase plot over (d, |Ω|).
    PhasePlot {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<usize>>,
        #[arg(long)]
        rank: Option<usize>,
        /// Absolute sample sizes.
        #[arg(long, value_delimiter = ',', conflicts_with = "multiples")]
        samples: Option<Vec<usize>>,
        /// Multiples of d²r²n log(n)/10.
        #[arg(long, value_delimiter = ',')]
        multiples: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        test_size: Option<usize>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Side-information phase plot over (n, |Ω|).
    PhasePlotSi {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, value_delimiter = ',', conflicts_with = "multiples")]
        samples: Option<Vec<usize>>,
        /// Multiples of d·m·r².
        #[arg(long, value_delimiter = ',')]
        multiples: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        test_size: Option<usize>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Coherence report and repetition bound of a tensor.
    Coherence {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: SourceFlags,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Tangent-space RIP constant for a sample set.
    RipEstimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: SourceFlags,
        /// Number of uniform samples to draw.
        #[arg(long)]
        samples: Option<usize>,
        /// Use the index set of these observations instead.
        #[arg(long)]
        omega: Option<PathBuf>,
        #[arg(long)]
        sample_seed: Option<u64>,
    },
    /// Median and mean of products of chi-squared variables.
    ChiMedian {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Random TT ground truth, observations and optional side information.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        test_samples: Option<usize>,
        /// Side-information dimensions; the truth is then Q·B with B of this shape.
        #[arg(long, value_delimiter = ',')]
        side_dims: Option<Vec<usize>>,
    },
}

/// Where a report takes its tensor from: a file, or a generator.
#[derive(Args)]
struct SourceFlags {
    /// TT or dense tensor file.
    #[arg(long)]
    tensor: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    shape: Option<Vec<usize>>,
    /// Ranks; also used to decompose a dense input.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Core(TtError),
}

impl From<TtError> for CliError {
    fn from(e: TtError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn to_json(&self) -> Value {
        match self {
            CliError::Input(m) => json!({"error": {"kind": "config", "message": m}}),
            CliError::Core(e) => json!({"error": {"kind": e.kind(), "message": e.to_string()}}),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Core(TtError::Io(_)) => 1,
            CliError::Core(TtError::Json(_) | TtError::Format(_) | TtError::InvalidArgument(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Collects flag overrides on top of the config file.
struct Overrides(Map<String, Value>);

impl Overrides {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Overrides(Map::new()));
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(m)) => Ok(Overrides(m)),
            Ok(_) => Err(CliError::Input(format!("{}: config must be a JSON object", path.display()))),
            Err(e) => Err(CliError::Input(format!("{}: {e}", path.display()))),
        }
    }

    fn set<T: Serialize>(&mut self, key: &str, v: Option<T>) -> &mut Self {
        if let Some(v) = v {
            let v = serde_json::to_value(v).expect("flag values serialize");
            match key.split_once('.') {
                Some((outer, inner)) => {
                    let slot = self.0.entry(outer).or_insert_with(|| Value::Object(Map::new()));
                    if let Value::Object(m) = slot {
                        m.insert(inner.to_string(), v);
                    } else {
                        *slot = json!({ inner: v });
                    }
                }
                None => {
                    self.0.insert(key.to_string(), v);
                }
            }
        }
        self
    }

    fn solver(&mut self, f: SolverFlags) -> &mut Self {
        self.set("solver.max_iters", f.max_iters)
            .set("solver.success_tol", f.success_tol)
            .set("solver.stall_tol", f.stall_tol)
            .set("solver.stall_window", f.stall_window)
    }

    fn parse<T: DeserializeOwned>(&self) -> CliResult<T> {
        serde_json::from_value(Value::Object(self.0.clone()))
            .map_err(|e| CliError::Input(format!("config: {e}")))
    }
}

fn default_beta() -> f64 {
    2.0
}

fn default_trace() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompleteConfig {
    observations: PathBuf,
    #[serde(default)]
    shape: Option<Vec<usize>>,
    ranks: Vec<usize>,
    #[serde(default)]
    test: Option<PathBuf>,
    #[serde(default)]
    truth: Option<PathBuf>,
    #[serde(default)]
    side: Option<PathBuf>,
    #[serde(default)]
    init: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_trace")]
    record_trace: bool,
    #[serde(default)]
    solver: SolverOverrides,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceConfig {
    #[serde(default)]
    tensor: Option<PathBuf>,
    #[serde(default)]
    shape: Option<Vec<usize>>,
    #[serde(default)]
    ranks: Option<Vec<usize>>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoherenceConfig {
    #[serde(flatten)]
    source: SourceConfig,
    #[serde(default = "default_beta")]
    beta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RipConfig {
    #[serde(flatten)]
    source: SourceConfig,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    omega: Option<PathBuf>,
    #[serde(default)]
    sample_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChiConfig {
    #[serde(default = "default_chi_r")]
    r: usize,
    #[serde(default = "default_chi_k")]
    k_max: usize,
    #[serde(default = "default_chi_samples")]
    samples: usize,
    #[serde(default)]
    seed: u64,
}

fn default_chi_r() -> usize {
    5
}

fn default_chi_k() -> usize {
    10
}

fn default_chi_samples() -> usize {
    1_000_000
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    shape: Vec<usize>,
    ranks: Vec<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    test_samples: Option<usize>,
    #[serde(default)]
    side_dims: Option<Vec<usize>>,
}

/// Writes outputs into the output directory and the metadata file.
struct Output {
    dir: PathBuf,
    command: &'static str,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path, command: &'static str) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), command, files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn finish<C: Serialize>(mut self, config: &C, seeds: Value, results: Value) -> CliResult<Value> {
        let meta_name = format!("{}.json", self.command);
        let meta_path = self.path(&meta_name);
        let meta = json!({
            "tool": "ttcomp",
            "version": VERSION,
            "command": self.command,
            "config": config,
            "seeds": seeds,
            "results": results,
            "outputs": self.files,
        });
        fs::write(&meta_path, serde_json::to_string_pretty(&meta).map_err(TtError::from)? + "\n")?;
        Ok(meta)
    }
}

fn shape_of(dims: Vec<usize>) -> CliResult<Shape> {
    Ok(Shape::new(dims)?)
}

fn load_source(src: &SourceConfig) -> CliResult<TensorTrain> {
    if let Some(path) = &src.tensor {
        return match tio::sniff(path)? {
            BinaryKind::Tt => Ok(tio::load_tt(path)?),
            BinaryKind::Dense => {
                let x = tio::load_dense(path)?;
                let r = src.ranks.clone().ok_or_else(|| {
                    CliError::Input("a dense tensor needs ranks to decompose".into())
                })?;
                Ok(tt_svd(&x, &RankTuple::new(r))?)
            }
            BinaryKind::Side => Err(CliError::Input(format!("{}: not a tensor", path.display()))),
        };
    }
    match (&src.shape, &src.ranks) {
        (Some(s), Some(r)) => Ok(gaussian_tt(&shape_of(s.clone())?, &RankTuple::new(r.clone()), src.seed)?),
        _ => Err(CliError::Input("give a tensor file or shape and ranks".into())),
    }
}

fn solve_summary(res: &SolveResult) -> Value {
    json!({
        "status": res.status,
        "iterations": res.iterations,
        "test_error": res.test_error,
        "success": res.success,
        "final_ranks": res.x.ranks().0,
    })
}

fn cmd_complete(cfg: CompleteConfig, out: &Path) -> CliResult<Value> {
    let side = cfg.side.as_deref().map(tio::load_side).transpose()?;
    let shape = cfg.shape.clone().map(shape_of).transpose()?;
    let obs = tio::load_observations(&cfg.observations, shape.as_ref())?;
    let test = cfg.test.as_deref().map(|p| tio::load_observations(p, Some(obs.shape()))).transpose()?;
    let truth = cfg.truth.as_deref().map(tio::load_tt).transpose()?;
    let init = cfg.init.as_deref().map(tio::load_tt).transpose()?;
    let solver = SolverConfig {
        ranks: RankTuple::new(cfg.ranks.clone()),
        max_iters: cfg.solver.max_iters,
        success_tol: cfg.solver.success_tol,
        stall_tol: cfg.solver.stall_tol,
        stall_window: cfg.solver.stall_window,
        seed: cfg.seed,
        record_trace: cfg.record_trace,
        ..SolverConfig::default()
    };
    let res = match &side {
        Some(q) => solve_side(&obs, q, &solver, init.as_ref(), truth.as_ref(), test.as_ref())?,
        None => solve_completion(&obs, &solver, init.as_ref(), truth.as_ref(), test.as_ref())?,
    };
    let mut o = Output::new(out, "complete")?;
    if cfg.record_trace {
        res.trace.write_csv(o.create("trace.csv")?)?;
    }
    let solution = match &side {
        Some(q) => {
            tio::save_tt(&o.path("solution_small.tt"), &res.x)?;
            q.apply_tt(&res.x)?
        }
        None => res.x.clone(),
    };
    tio::save_tt(&o.path("solution.tt"), &solution)?;
    let mut summary = solve_summary(&res);
    summary["samples"] = json!(obs.sample().len());
    summary["rho"] = json!(obs.sample().rho());
    o.finish(&cfg, json!({"init": cfg.seed}), summary)
}

fn phase_results(t: &ttcomp_core::harness::PhaseTable) -> Value {
    json!({"cells": t.cells.len(), "successes": t.cells.iter().map(|c| c.successes).sum::<usize>()})
}

const SEED_NOTE: &str = "trial seed = derive_seed(master, [d, n, samples, trial]); \
     truth/init/train/test/side use derive_seed(trial, [0..4])";

fn cmd_phase_plot(cfg: PhaseConfig, out: &Path) -> CliResult<Value> {
    let t = run_phase_plot(&cfg)?;
    let mut o = Output::new(out, "phase-plot")?;
    t.write_csv(o.create("phase.csv")?)?;
    let seeds = json!({"master": cfg.master_seed, "derivation": SEED_NOTE});
    let mut results = phase_results(&t);
    results["test_size"] = json!(cfg.test_size.map_or("equal to training size".into(), |s| s.to_string()));
    o.finish(&cfg, seeds, results)
}

fn cmd_phase_plot_si(cfg: SidePhaseConfig, out: &Path) -> CliResult<Value> {
    let t = run_phase_plot_side(&cfg)?;
    let mut o = Output::new(out, "phase-plot-si")?;
    t.write_csv(o.create("phase_si.csv")?)?;
    let seeds = json!({"master": cfg.master_seed, "derivation": SEED_NOTE});
    o.finish(&cfg, seeds, phase_results(&t))
}

fn cmd_coherence(cfg: CoherenceConfig, out: &Path) -> CliResult<Value> {
    let x = load_source(&cfg.source)?;
    let report = run_reports(&x, None, cfg.beta)?;
    let o = Output::new(out, "coherence")?;
    let results = serde_json::to_value(&report).map_err(TtError::from)?;
    o.finish(&cfg, json!({"tensor": cfg.source.seed}), results)
}

fn cmd_rip(cfg: RipConfig, out: &Path) -> CliResult<Value> {
    let x = load_source(&cfg.source)?;
    let omega: SampleSet = match (&cfg.omega, cfg.samples) {
        (Some(p), _) => tio::load_observations(p, Some(x.shape()))?.sample().clone(),
        (None, Some(n)) => sample_uniform(x.shape(), n, cfg.sample_seed)?,
        (None, None) => return Err(CliError::Input("give samples or omega".into())),
    };
    let est = rip_estimate(&x, &omega)?;
    let report = CoherenceReport::new(&x)?;
    let o = Output::new(out, "rip-estimate")?;
    let results = json!({
        "eps": est.eps,
        "rho": est.rho,
        "mode": est.mode,
        "samples": omega.len(),
        "distinct": omega.unique_len(),
        "max_multiplicity": omega.max_multiplicity(),
        "mu_c": report.mu_c,
        "c1": report.c1,
    });
    o.finish(&cfg, json!({"tensor": cfg.source.seed, "sample": cfg.sample_seed}), results)
}

fn cmd_chi(cfg: ChiConfig, out: &Path) -> CliResult<Value> {
    let rows = run_chi_median(cfg.r, cfg.k_max, cfg.samples, cfg.seed)?;
    let mut o = Output::new(out, "chi-median")?;
    write_chi_csv(&rows, o.create("chi_median.csv")?)?;
    let medians: Vec<f64> = rows.iter().map(|r| r.median).collect();
    o.finish(&cfg, json!({"master": cfg.seed}), json!({"medians": medians}))
}

fn cmd_generate(cfg: GenerateConfig, out: &Path) -> CliResult<Value> {
    let shape = shape_of(cfg.shape.clone())?;
    let ranks = RankTuple::new(cfg.ranks.clone());
    let seeds = [0u64, 2, 3, 4].map(|j| derive_seed(cfg.seed, &[j]));
    let mut o = Output::new(out, "generate")?;
    let truth = match &cfg.side_dims {
        Some(m) => {
            let small = shape_of(m.clone())?;
            let q = SideInfo::random(&shape, &small, seeds[3])?;
            let b = gaussian_tt(&small, &ranks, seeds[0])?;
            tio::save_side(&o.path("side.bin"), &q)?;
            tio::save_tt(&o.path("truth_small.tt"), &b)?;
            q.apply_tt(&b)?
        }
        None => gaussian_tt(&shape, &ranks, seeds[0])?,
    };
    tio::save_tt(&o.path("truth.tt"), &truth)?;
    if let Some(n) = cfg.samples {
        let obs = sample_uniform(&shape, n, seeds[1])?.observe_tt(&truth)?;
        tio::save_observations(&o.path("observations.csv"), &obs)?;
    }
    if let Some(n) = cfg.test_samples {
        let obs = sample_uniform(&shape, n, seeds[2])?.observe_tt(&truth)?;
        tio::save_observations(&o.path("test.csv"), &obs)?;
    }
    let results = json!({"frob_norm": truth.frob_norm(), "manifold_dim": ranks.manifold_dim(&shape)});
    let seed_json = json!({"master": cfg.seed, "truth": seeds[0], "train": seeds[1], "test": seeds[2], "side": seeds[3]});
    o.finish(&cfg, seed_json, results)
}

fn run(cli: Cli) -> CliResult<Value> {
    match cli.command {
        Command::Complete { common, observations, shape, ranks, test, truth, side, init, seed, solver } => {
            let mut ov = Overrides::load(common.config.as_deref())?;
            ov.set("observations", observations)
                .set("shape", shape)
                .set("ranks", ranks)
                .set("test", test)
                .set("truth", truth)
                .set("side", side)
                .set("init", init)
                .set("seed", seed)
                .solver(solver);
            cmd_complete(ov.parse()?, &common.out)
        }
        Command::PhasePlot { common, n, d, rank, samples, multiples, trials, seed, test_size, solver } => {
            let mut ov = Overrides::load(common.config.as_deref())?;
            ov.set("n", n)
                .set("d", d)
                .set("rank", rank)
                .set("samples", samples.map(|s| json!({"absolute": s})))
                .set("samples", multiples.map(|s| json!({"reference": s})))
                .set("trials", trials)
                .set("master_seed", seed)
                .set("test_size", test_size)
                .solver(solver);
            cmd_phase_plot(ov.parse()?, &common.out)
        }
        Command::PhasePlotSi { common, n, d, m, rank, samples, multiples, trials, seed, test_size, solver } => {
            let mut ov = Overrides::load(common.config.as_deref())?;
            ov.set("n", n)
                .set("d", d)
                .set("m", m)
                .set("rank", rank)
                .set("samples", samples.map(|s| json!({"absolute": s})))
                .set("samples", multiples.map(|s| json!({"reference": s})))
                .set("trials", trials)
                .set("master_seed", seed)
                .set("test_size", test_size)
                .solver(solver);
            cmd_phase_plot_si(ov.parse()?, &common.out)
        }
        Command::Coherence { common, source, beta } => {
            let mut ov = Overrides::load(common.config.as_deref())?;
            ov.set("tensor", source.tensor)
                .set("shape", source.shape)
                .set("ranks", source.ranks)
                .set("seed", source.seed)
                .set("beta", beta);
            cmd_coherence(ov.parse()?, &common.out)
        }
        Command::RipEstimate { common, source, samples, omega, sample_seed } => {
            let mut ov = Overrides::load(common.config.as_deref())?;
            ov.set("tensor", source.tensor)
                .set("shape", source.shape)
                .set("ranks", source.ranks)
                .set("seed", source.seed)
                .set("samples", samples)
                .set("omega", omega)
                .set("sample_seed", sample_seed);
            cmd_rip(ov.parse()?, &common.out)
        }
        Command::ChiMedian { common, r, k_max, samples, seed } => {
            let mut ov = Overrides::load(common.config.as_deref())?;
            ov.set("r", r).set("k_max", k_max).set("samples", samples).set("seed", seed);
            cmd_chi(ov.parse()?, &common.out)
        }
        Command::Generate { common, shape, ranks, seed, samples, test_samples, side_dims } => {
            let mut ov = Overrides::load(common.config.as_deref())?;
            ov.set("shape", shape)
                .set("ranks", ranks)
                .set("seed", seed)
                .set("samples", samples)
                .set("test_samples", test_samples)
                .set("side_dims", side_dims);
            cmd_generate(ov.parse()?, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Input(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(meta) => {
            println!("{}", serde_json::to_string(&meta).expect("metadata serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
