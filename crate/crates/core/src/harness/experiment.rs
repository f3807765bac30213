//! Runs the requested methods over the `(σ², ν)` grid.
//!
//! Every grid point of a method is solved independently from the same
//! method seed. Points therefore share random streams (smoother curves, and
//! the global `ν = 0` point reproduces its calibration run exactly) and the
//! output does not depend on how points are spread over worker threads.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::curve_csv::{self, CurveRow};
use super::manifest::Manifest;
use crate::cavity::global::{calibrate_kappa, estimation_rng, max_entry_std, GlobalSolver};
use crate::cavity::histogram::Histogram;
use crate::cavity::local::LocalSolver;
use crate::cavity::population::{Estimate, SolverDiagnostics};
use crate::error::{Error, Result};
use crate::exact_gp::simulate_learning_curves;
use crate::kernel::KernelParams;
use crate::stats::derive_seed;

/// Convergence and discard counters of one solved grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointDiagnostics {
    pub sigma2: f64,
    pub nu: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub discarded_updates: u64,
    pub discarded_samples: u64,
}

impl PointDiagnostics {
    fn new(sigma2: f64, nu: f64, diag: &SolverDiagnostics) -> Self {
        Self {
            sigma2,
            nu,
            sweeps: diag.sweeps,
            converged: diag.converged,
            discarded_updates: diag.discarded_updates,
            discarded_samples: diag.discarded_samples,
        }
    }
}

/// A grid point whose solve raised an error; it has no CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub method: Method,
    pub sigma2: f64,
    pub nu: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub kappa: f64,
    pub seed: u64,
    pub diagnostics: PointDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub method: Method,
    pub seed: u64,
    pub rows: Vec<CurveRow>,
    /// Isolated-vertex contribution to the simulated error, same layout as
    /// `rows`. Simulation only.
    pub isolated_rows: Vec<CurveRow>,
    pub isolated_fraction: Option<f64>,
    pub calibration: Option<Calibration>,
    pub points: Vec<PointDiagnostics>,
    pub failures: Vec<PointFailure>,
}

/// Population statistics of one converged globally normalized population.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramOutput {
    pub nu: f64,
    pub sigma2: f64,
    pub v00: Histogram,
    pub proxy: Histogram,
    /// Largest entrywise standard deviation across the population.
    pub max_entry_std: f64,
    pub diagnostics: PointDiagnostics,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub outputs: Vec<MethodOutput>,
    pub histograms: Vec<HistogramOutput>,
}

/// Overall outcome, in increasing severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    NotConverged,
    Failed,
}

impl ExperimentResults {
    pub fn output(&self, method: Method) -> Option<&MethodOutput> {
        self.outputs.iter().find(|o| o.method == method)
    }

    pub fn status(&self) -> RunStatus {
        let points = self.outputs.iter().flat_map(|o| o.points.iter().chain(o.calibration.iter().map(|c| &c.diagnostics)));
        let points: Vec<&PointDiagnostics> = points.chain(self.histograms.iter().map(|h| &h.diagnostics)).collect();
        if self.outputs.iter().any(|o| !o.failures.is_empty()) {
            RunStatus::Failed
        } else if points.iter().any(|p| !p.converged) {
            RunStatus::NotConverged
        } else {
            RunStatus::Ok
        }
    }
}

/// Seed shared by all grid points of `method`.
pub fn method_seed(config: &ExperimentConfig, method: Method) -> u64 {
    derive_seed(config.seed, &[method.tag()])
}

fn grid(config: &ExperimentConfig) -> Vec<(f64, f64)> {
    let nus = config.nu.points();
    config.noise.iter().flat_map(|&s| nus.iter().map(move |&nu| (s, nu))).collect()
}

fn row(config: &ExperimentConfig, method: Method, params: &KernelParams, seed: u64, sigma2: f64, nu: f64, est: &Estimate) -> CurveRow {
    CurveRow {
        method: method.name().to_string(),
        ensemble: config.ensemble_label(),
        normalization: params.normalization.to_string(),
        a: params.a,
        p: params.p,
        sigma2,
        nu,
        epsilon: est.epsilon,
        stderr: est.stderr,
        n_samples: est.n_samples,
        seed,
    }
}

pub fn run_simulate(config: &ExperimentConfig) -> Result<MethodOutput> {
    let method = Method::Simulate;
    let dist = config.ensemble.distribution()?;
    let params = config.kernel_for(method);
    let seed = method_seed(config, method);
    let nus = config.nu.points();
    let sim = simulate_learning_curves::<f64>(&dist, &params, &config.noise, &nus, &config.simulation, seed)?;
    let mut rows = Vec::new();
    let mut isolated_rows = Vec::new();
    for (k, &sigma2) in config.noise.iter().enumerate() {
        for (point, iso) in sim.curves[k].iter().zip(&sim.isolated[k]) {
            let as_est = |p: &crate::exact_gp::LearningCurvePoint| Estimate {
                epsilon: p.epsilon,
                stderr: p.stderr,
                n_samples: p.n_samples,
                discarded: 0,
            };
            rows.push(row(config, method, &params, seed, sigma2, point.nu, &as_est(point)));
            let mut r = row(config, method, &params, seed, sigma2, iso.nu, &as_est(iso));
            r.method = "simulate_isolated".into();
            isolated_rows.push(r);
        }
    }
    Ok(MethodOutput {
        method,
        seed,
        rows,
        isolated_rows,
        isolated_fraction: Some(sim.isolated_fraction),
        calibration: None,
        points: Vec::new(),
        failures: Vec::new(),
    })
}

/// κ for the globally normalized solvers, from a `σ² = 1, ν = 0` run at the
/// cavity-global method seed.
pub fn calibrate(config: &ExperimentConfig) -> Result<Calibration> {
    let dist = config.ensemble.distribution()?;
    let params = config.kernel_for(Method::CavityGlobal);
    let seed = method_seed(config, Method::CavityGlobal);
    let (kappa, diag) = calibrate_kappa::<f64>(&dist, &params, &config.solver, seed)?;
    Ok(Calibration { kappa, seed, diagnostics: PointDiagnostics::new(1.0, 0.0, &diag) })
}

type PointResult = std::result::Result<(Estimate, SolverDiagnostics), Error>;

fn collect_points(
    config: &ExperimentConfig,
    method: Method,
    params: &KernelParams,
    seed: u64,
    calibration: Option<Calibration>,
    results: Vec<((f64, f64), PointResult)>,
) -> MethodOutput {
    let mut out = MethodOutput {
        method,
        seed,
        rows: Vec::new(),
        isolated_rows: Vec::new(),
        isolated_fraction: None,
        calibration,
        points: Vec::new(),
        failures: Vec::new(),
    };
    for ((sigma2, nu), res) in results {
        match res {
            Ok((est, diag)) => {
                out.rows.push(row(config, method, params, seed, sigma2, nu, &est));
                out.points.push(PointDiagnostics::new(sigma2, nu, &diag));
            }
            Err(err) => {
                log::warn!("{method} failed at σ²={sigma2}, ν={nu}: {err}");
                out.failures.push(PointFailure { method, sigma2, nu, message: err.to_string() });
            }
        }
    }
    out
}

pub fn run_cavity_global(config: &ExperimentConfig, calibration: Calibration) -> Result<MethodOutput> {
    let method = Method::CavityGlobal;
    let dist = config.ensemble.distribution()?;
    let params = config.kernel_for(method);
    let seed = calibration.seed;
    let kappa = calibration.kappa;
    let results: Vec<_> = grid(config)
        .into_par_iter()
        .map(|(sigma2, nu)| {
            let res = GlobalSolver::<f64>::new(&dist, &params, sigma2, nu, kappa)
                .and_then(|s| s.run(&config.solver, seed))
                .map(|sol| (sol.estimate, sol.diagnostics));
            ((sigma2, nu), res)
        })
        .collect();
    Ok(collect_points(config, method, &params, seed, Some(calibration), results))
}

pub fn run_cavity_local(config: &ExperimentConfig) -> Result<MethodOutput> {
    let method = Method::CavityLocal;
    let dist = config.ensemble.distribution()?;
    let params = config.kernel_for(method);
    let seed = method_seed(config, method);
    let results: Vec<_> = grid(config)
        .into_par_iter()
        .map(|(sigma2, nu)| {
            let res = LocalSolver::<f64>::new(&dist, &params, sigma2, nu)
                .and_then(|s| s.run(&config.solver, seed))
                .map(|sol| (sol.estimate, sol.diagnostics));
            ((sigma2, nu), res)
        })
        .collect();
    Ok(collect_points(config, method, &params, seed, None, results))
}

/// Population statistics for each configured histogram ν, at the first
/// noise level.
pub fn run_histograms(config: &ExperimentConfig, calibration: &Calibration) -> Result<Vec<HistogramOutput>> {
    let dist = config.ensemble.distribution()?;
    let params = config.kernel_for(Method::Histogram);
    let sigma2 = config.noise[0];
    let seed = method_seed(config, Method::Histogram);
    let h = &config.histogram;
    h.nu.par_iter()
        .map(|&nu| {
            let solver = GlobalSolver::<f64>::new(&dist, &params, sigma2, nu, calibration.kappa)?;
            let sol = solver.run(&config.solver, seed)?;
            let mut rng = estimation_rng(seed);
            let (v00, proxy) = solver.histograms(&sol.population, h.draws, h.bins, &mut rng);
            Ok(HistogramOutput {
                nu,
                sigma2,
                v00,
                proxy,
                max_entry_std: max_entry_std(&sol.population.members),
                diagnostics: PointDiagnostics::new(sigma2, nu, &sol.diagnostics),
            })
        })
        .collect()
}

/// Runs every configured method. Errors that invalidate a whole method
/// (bad configuration, failed calibration) are returned; per-point solver
/// errors are recorded in the outputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let mut calibration: Option<Calibration> = None;
    let mut outputs = Vec::new();
    let mut histograms = Vec::new();
    for method in methods {
        log::info!("running {method}");
        let needs_kappa = matches!(method, Method::CavityGlobal | Method::Histogram);
        if needs_kappa && calibration.is_none() {
            let cal = calibrate(config)?;
            log::info!("calibrated κ = {}", cal.kappa);
            calibration = Some(cal);
        }
        match method {
            Method::Simulate => outputs.push(run_simulate(config)?),
            Method::CavityGlobal => outputs.push(run_cavity_global(config, calibration.clone().expect("calibrated"))?),
            Method::CavityLocal => outputs.push(run_cavity_local(config)?),
            Method::Histogram => histograms = run_histograms(config, calibration.as_ref().expect("calibrated"))?,
        }
    }
    Ok(ExperimentResults { config: config.clone(), outputs, histograms })
}

pub fn curve_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

pub fn histogram_path(dir: &Path, nu: f64) -> PathBuf {
    dir.join(format!("histogram_nu{nu}.csv"))
}

pub fn write_histogram<W: std::io::Write>(out: W, hists: &[&Histogram]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "bin_lo", "bin_hi", "density"])?;
    for h in hists {
        for (k, density) in h.densities().into_iter().enumerate() {
            let (lo, hi) = h.bin_edges(k);
            w.write_record([h.quantity.clone(), lo.to_string(), hi.to_string(), density.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes curve CSVs, histogram CSVs and `manifest.json` into `dir`.
pub fn write_outputs(results: &ExperimentResults, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for out in &results.outputs {
        let path = curve_path(dir, out.method.name());
        curve_csv::save(&path, &out.rows)?;
        files.push(path);
        if !out.isolated_rows.is_empty() {
            let path = curve_path(dir, "simulate_isolated");
            curve_csv::save(&path, &out.isolated_rows)?;
            files.push(path);
        }
    }
    for h in &results.histograms {
        let path = histogram_path(dir, h.nu);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_histogram(std::io::BufWriter::new(file), &[&h.v00, &h.proxy])?;
        files.push(path);
    }
    let manifest = Manifest::new(results, &files);
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// The first graph the simulation method samples for this configuration.
pub fn sample_config_graph(config: &ExperimentConfig) -> Result<crate::ensembles::Graph> {
    let dist = config.ensemble.distribution()?;
    crate::exact_gp::sample_instance_graph(&dist, config.simulation.vertex_count, method_seed(config, Method::Simulate), 0)
}
