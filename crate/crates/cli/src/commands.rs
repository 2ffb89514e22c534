//! The four subcommands. Each writes into its own output directory and
//! returns nothing but errors; layouts are documented in `docs/FORMATS.md`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lrad_core::graph::Adjacency;
use lrad_core::graphgen::{self, SyntheticConfig};
use lrad_core::metrics::{evaluate_dense, mean_std, EvalReport};
use lrad_core::solver::TraceRecord;
use lrad_core::{Exec, FactorPoint, PrecisionSequence, SolverTrace, SpdMatrix, Termination, WindowedDataset};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{self, indexed, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    /// Resolved generator settings (generate only).
    pub synthetic: Option<SyntheticConfig>,
    /// Input directories as given on the command line.
    pub inputs: Vec<PathBuf>,
}

impl Manifest {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.into(),
            version: VERSION.into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            synthetic: None,
            inputs: Vec::new(),
        }
    }

    fn write(&self, out: &Path) -> CliResult<()> {
        io::write_json(&out.join("manifest.json"), self)
    }
}

fn not_found(path: PathBuf, what: &str) -> CliError {
    CliError::Io {
        source: std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
        path,
    }
}

// ---------------------------------------------------------------- generate

fn write_dataset(out: &Path, data: &WindowedDataset, truth: &graphgen::GroundTruth) -> CliResult<()> {
    let data_dir = out.join("data");
    let truth_dir = out.join("truth");
    io::ensure_dir(&data_dir)?;
    io::ensure_dir(&truth_dir)?;
    for (t, x) in data.windows().iter().enumerate() {
        io::write_matrix(&indexed(&data_dir, "window", t), x)?;
    }
    for (t, (theta, edges)) in truth.precisions.iter().zip(&truth.edges).enumerate() {
        io::write_matrix(&indexed(&truth_dir, "theta", t), theta.as_matrix())?;
        io::write_edges(&indexed(&truth_dir, "edges", t), edges)?;
    }
    if let Some(factors) = &truth.factors {
        write_factors(&truth_dir, factors)?;
    }
    Ok(())
}

pub fn generate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let syn = cfg.synthetic(None, cfg.seed)?;
    let (data, truth) = graphgen::generate(&syn)?;
    io::ensure_dir(out)?;
    write_dataset(out, &data, &truth)?;
    let mut m = Manifest::new("generate", cfg);
    m.synthetic = Some(syn);
    m.write(out)
}

// ---------------------------------------------------------------- loading

/// Windows from `dir/data/` (a generated dataset) or from `dir` itself.
pub fn load_dataset(dir: &Path) -> CliResult<WindowedDataset> {
    let nested = dir.join("data");
    let data_dir = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let t = io::count_indexed(&data_dir, "window");
    if t == 0 {
        return Err(not_found(indexed(&data_dir, "window", 0), "first data window"));
    }
    let windows = (0..t)
        .map(|k| io::read_matrix(&indexed(&data_dir, "window", k)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(WindowedDataset::new(windows)?)
}

/// Ground-truth precisions and edge sets from `dir/truth/`.
pub fn load_truth(dir: &Path) -> CliResult<(Vec<SpdMatrix>, Vec<Adjacency>)> {
    let truth_dir = dir.join("truth");
    let t = io::count_indexed(&truth_dir, "theta");
    if t == 0 {
        return Err(not_found(indexed(&truth_dir, "theta", 0), "ground truth"));
    }
    let mut thetas = Vec::with_capacity(t);
    let mut edges = Vec::with_capacity(t);
    for k in 0..t {
        let path = indexed(&truth_dir, "theta", k);
        let m = io::read_matrix(&path)?;
        let p = m.nrows();
        thetas.push(SpdMatrix::new(m).map_err(|e| CliError::format(&path, e.to_string()))?);
        edges.push(io::read_edges(&indexed(&truth_dir, "edges", k), p)?);
    }
    Ok((thetas, edges))
}

fn write_factors(dir: &Path, points: &[FactorPoint]) -> CliResult<()> {
    for (t, pt) in points.iter().enumerate() {
        io::write_matrix(&indexed(dir, "Y", t), pt.y())?;
        io::write_row(&indexed(dir, "D", t), pt.d())?;
    }
    Ok(())
}

pub fn load_factors(dir: &Path) -> CliResult<PrecisionSequence> {
    let t = io::count_indexed(dir, "Y");
    if t == 0 {
        return Err(not_found(indexed(dir, "Y", 0), "factor file"));
    }
    let points = (0..t)
        .map(|k| {
            let y = io::read_matrix(&indexed(dir, "Y", k))?;
            let d_path = indexed(dir, "D", k);
            let d = io::read_row(&d_path)?;
            FactorPoint::new(y, d).map_err(|e| CliError::format(&d_path, e.to_string()))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(PrecisionSequence::new(points)?)
}

/// Dense estimates from factor files when present, else from `theta_*.csv`.
pub fn load_estimate(dir: &Path) -> CliResult<Vec<SpdMatrix>> {
    if indexed(dir, "Y", 0).is_file() {
        return Ok(load_factors(dir)?.materialize());
    }
    let t = io::count_indexed(dir, "theta");
    if t == 0 {
        return Err(not_found(indexed(dir, "Y", 0), "fitted factors (or dense theta files)"));
    }
    (0..t)
        .map(|k| {
            let path = indexed(dir, "theta", k);
            SpdMatrix::new(io::read_matrix(&path)?).map_err(|e| CliError::format(&path, e.to_string()))
        })
        .collect()
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub termination: Termination,
    pub iterations: usize,
    pub restarts: usize,
    pub objective: f64,
    pub max_grad_norm: f64,
    pub windows: usize,
    pub p: usize,
    pub rank: usize,
    pub elapsed_secs: f64,
    pub secs_per_iteration: f64,
}

fn summarize(seq: &PrecisionSequence, trace: &SolverTrace, elapsed: f64) -> FitSummary {
    let last = trace.final_record();
    let iterations = trace.records.len() - 1;
    FitSummary {
        termination: trace.termination,
        iterations,
        restarts: trace.records.iter().skip(1).filter(|r| r.restarted).count(),
        objective: last.objective,
        max_grad_norm: last.max_grad_norm,
        windows: seq.len(),
        p: seq.dim(),
        rank: seq.rank(),
        elapsed_secs: elapsed,
        secs_per_iteration: elapsed / iterations.max(1) as f64,
    }
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> CliResult<()> {
    let mut t = Table::create(path, &["iter", "objective", "max_grad_norm", "step", "restarted"])?;
    for r in records {
        t.row([
            r.iter.to_string(),
            io::num(r.objective),
            io::num(r.max_grad_norm),
            io::num(r.step),
            r.restarted.to_string(),
        ])?;
    }
    t.finish()
}

fn run_fit(cfg: &RunConfig, data: &WindowedDataset) -> CliResult<(PrecisionSequence, SolverTrace, FitSummary)> {
    let start = Instant::now();
    let (seq, trace) = lrad_core::fit(data, &cfg.solver)?;
    let summary = summarize(&seq, &trace, start.elapsed().as_secs_f64());
    Ok((seq, trace, summary))
}

pub fn fit(cfg: &RunConfig, data_dir: &Path, out: &Path) -> CliResult<FitSummary> {
    cfg.validate_solver()?;
    let data = load_dataset(data_dir)?;
    let (seq, trace, summary) = run_fit(cfg, &data)?;
    io::ensure_dir(out)?;
    write_factors(out, seq.points())?;
    if cfg.fit.dense {
        for (t, m) in seq.materialize().iter().enumerate() {
            io::write_matrix(&indexed(out, "theta", t), m.as_matrix())?;
        }
    }
    write_trace(&out.join("trace.csv"), &trace.records)?;
    io::write_json(&out.join("fit.json"), &summary)?;
    let mut m = Manifest::new("fit", cfg);
    m.inputs = vec![data_dir.to_path_buf()];
    m.write(out)?;
    Ok(summary)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let (mean, std) = mean_std(&v);
        Self { mean, std }
    }
}

/// Mean ± sample standard deviation across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub auc: MeanStd,
    pub f1: MeanStd,
    pub mean_geodesic_error: MeanStd,
    pub temporal_variation: MeanStd,
}

impl Aggregate {
    pub fn of(reports: &[&EvalReport]) -> Self {
        Self {
            runs: reports.len(),
            auc: MeanStd::of(reports.iter().map(|r| r.auc)),
            f1: MeanStd::of(reports.iter().map(|r| r.f1)),
            mean_geodesic_error: MeanStd::of(reports.iter().map(|r| r.mean_geodesic_error)),
            temporal_variation: MeanStd::of(reports.iter().map(|r| r.temporal_variation)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub fit: PathBuf,
    pub truth: PathBuf,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub threshold: f64,
    pub runs: Vec<EvalRun>,
    pub aggregate: Aggregate,
}

/// Score each fit against its truth; a single truth is shared by all fits.
pub fn eval(cfg: &RunConfig, fits: &[PathBuf], truths: &[PathBuf], out: &Path) -> CliResult<EvalOutput> {
    cfg.validate_solver()?;
    if fits.is_empty() || !(truths.len() == fits.len() || truths.len() == 1) {
        return Err(CliError::Validation(format!(
            "need one --truth per --fit (or a single shared one); got {} fits, {} truths",
            fits.len(),
            truths.len()
        )));
    }
    let mut runs = Vec::with_capacity(fits.len());
    for (k, fit_dir) in fits.iter().enumerate() {
        let truth_dir = &truths[if truths.len() == 1 { 0 } else { k }];
        let (truth, edges) = load_truth(truth_dir)?;
        let est = load_estimate(fit_dir)?;
        let report = evaluate_dense(&est, &truth, &edges, cfg.eval.threshold)?;
        runs.push(EvalRun {
            fit: fit_dir.clone(),
            truth: truth_dir.clone(),
            report,
        });
    }
    let aggregate = Aggregate::of(&runs.iter().map(|r| &r.report).collect::<Vec<_>>());
    let output = EvalOutput {
        threshold: cfg.eval.threshold,
        runs,
        aggregate,
    };
    io::ensure_dir(out)?;
    io::write_json(&out.join("report.json"), &output)?;
    let mut m = Manifest::new("eval", cfg);
    m.inputs = fits.iter().chain(truths).cloned().collect();
    m.write(out)?;
    Ok(output)
}

// ---------------------------------------------------------------- benchmark

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub p: usize,
    pub seed: u64,
    pub fit: FitSummary,
    pub report: EvalReport,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub p: usize,
    pub cells: usize,
    pub secs_per_iteration: MeanStd,
    pub iterations: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutput {
    pub timing: Vec<TimingRow>,
    /// Eval aggregate per `p`, in grid order.
    pub aggregate: Vec<(usize, Aggregate)>,
}

fn cell_dir(out: &Path, p: usize, seed: u64) -> PathBuf {
    out.join("cells").join(format!("p{p:04}_s{seed:03}"))
}

/// One isolated generate → fit → eval pipeline.
fn run_cell(cfg: &RunConfig, p: usize, seed: u64, out: &Path) -> CliResult<CellResult> {
    let syn = cfg.synthetic(Some(p), seed)?;
    let (data, truth) = graphgen::generate(&syn)?;
    let mut cell_cfg = cfg.clone();
    cell_cfg.seed = seed;
    cell_cfg.solver.seed = seed;
    let (seq, trace, fit) = run_fit(&cell_cfg, &data)?;
    let report = evaluate_dense(&seq.materialize(), &truth.precisions, &truth.edges, cfg.eval.threshold)?;
    let dir = cell_dir(out, p, seed);
    io::ensure_dir(&dir)?;
    write_trace(&dir.join("trace.csv"), &trace.records)?;
    io::write_json(&dir.join("fit.json"), &fit)?;
    io::write_json(&dir.join("report.json"), &report)?;
    Ok(CellResult {
        p,
        seed,
        fit,
        report,
        trace: trace.records,
    })
}

pub fn benchmark(cfg: &RunConfig, out: &Path) -> CliResult<BenchmarkOutput> {
    cfg.validate_solver()?;
    let seeds = &cfg.benchmark.seeds;
    let p_grid = match &cfg.benchmark.p_grid {
        Some(g) => g.clone(),
        None => vec![cfg.synthetic(None, 0)?.p],
    };
    if seeds.is_empty() || p_grid.is_empty() {
        return Err(CliError::Validation(format!(
            "benchmark grid is empty ({} seeds x {} dimensions)",
            seeds.len(),
            p_grid.len()
        )));
    }
    // Fail fast on invalid cells before spending time on valid ones.
    for &p in &p_grid {
        cfg.synthetic(Some(p), seeds[0])?;
    }
    io::ensure_dir(out)?;

    let exec = if cfg.solver.deterministic {
        Exec::Sequential
    } else {
        cfg.solver.exec
    };
    let grid: Vec<(usize, u64)> = p_grid.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
    let cells = exec.try_map(grid.len(), |k| run_cell(cfg, grid[k].0, grid[k].1, out))?;

    let mut table = Table::create(
        &out.join("cells.csv"),
        &[
            "p", "seed", "termination", "iterations", "elapsed_secs", "secs_per_iteration", "objective",
            "max_grad_norm", "auc", "f1", "mean_geodesic_error", "temporal_variation",
        ],
    )?;
    let mut conv = Table::create(
        &out.join("convergence.csv"),
        &["p", "seed", "iter", "objective", "max_grad_norm", "step", "restarted"],
    )?;
    for c in &cells {
        table.row([
            c.p.to_string(),
            c.seed.to_string(),
            c.fit.termination.to_string(),
            c.fit.iterations.to_string(),
            io::num(c.fit.elapsed_secs),
            io::num(c.fit.secs_per_iteration),
            io::num(c.fit.objective),
            io::num(c.fit.max_grad_norm),
            io::num(c.report.auc),
            io::num(c.report.f1),
            io::num(c.report.mean_geodesic_error),
            io::num(c.report.temporal_variation),
        ])?;
        for r in &c.trace {
            conv.row([
                c.p.to_string(),
                c.seed.to_string(),
                r.iter.to_string(),
                io::num(r.objective),
                io::num(r.max_grad_norm),
                io::num(r.step),
                r.restarted.to_string(),
            ])?;
        }
    }
    table.finish()?;
    conv.finish()?;

    let mut timing = Vec::with_capacity(p_grid.len());
    let mut aggregate = Vec::with_capacity(p_grid.len());
    let mut tt = Table::create(
        &out.join("timing.csv"),
        &["p", "cells", "secs_per_iteration_mean", "secs_per_iteration_std", "iterations_mean", "iterations_std"],
    )?;
    for &p in &p_grid {
        let of_p: Vec<&CellResult> = cells.iter().filter(|c| c.p == p).collect();
        let row = TimingRow {
            p,
            cells: of_p.len(),
            secs_per_iteration: MeanStd::of(of_p.iter().map(|c| c.fit.secs_per_iteration)),
            iterations: MeanStd::of(of_p.iter().map(|c| c.fit.iterations as f64)),
        };
        tt.row([
            p.to_string(),
            row.cells.to_string(),
            io::num(row.secs_per_iteration.mean),
            io::num(row.secs_per_iteration.std),
            io::num(row.iterations.mean),
            io::num(row.iterations.std),
        ])?;
        timing.push(row);
        aggregate.push((p, Aggregate::of(&of_p.iter().map(|c| &c.report).collect::<Vec<_>>())));
    }
    tt.finish()?;

    let output = BenchmarkOutput { timing, aggregate };
    io::write_json(&out.join("aggregate.json"), &output)?;
    Manifest::new("benchmark", cfg).write(out)?;
    Ok(output)
}
