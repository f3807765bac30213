//! Exact GP posterior variances on finite graphs and Monte-Carlo learning
//! curves over sampled graphs and training sets.
//!
//! In the matched scenario the Bayes error is the average posterior
//! variance, so only variances are ever computed. `n_j` observations at
//! vertex `j` are equivalent to one observation with noise `σ²/n_j`, which
//! keeps every solve at the size of the training support.
//!
//! The posterior factorizes over connected components. Small components
//! (a few vertices, prior variance well above the average) are rare but
//! dominate the Monte-Carlo noise when they carry no data, so their
//! contribution is averaged exactly over the multinomial example counts
//! rather than sampled.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_graph, DegreeDistribution, Graph};
use crate::error::{Error, NumericalError, Result};
use crate::kernel::{build_kernel, KernelParams};
use crate::scalar::Real;
use crate::stats::{poisson_cutoff, poisson_weights, task_rng, Accumulator};

/// Gaussian observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
        }
        Ok(Self { sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Number of training examples observed at each vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingCounts {
    counts: Vec<usize>,
    total: usize,
}

impl TrainingCounts {
    pub fn new(counts: Vec<usize>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn zeros(vertex_count: usize) -> Self {
        Self { counts: vec![0; vertex_count], total: 0 }
    }

    /// Counts for a list of input vertices (with repetition).
    pub fn from_inputs(vertex_count: usize, inputs: &[usize]) -> Self {
        let mut counts = TrainingCounts::zeros(vertex_count);
        inputs.iter().for_each(|&i| counts.add(i));
        counts
    }

    pub fn add(&mut self, vertex: usize) {
        self.counts[vertex] += 1;
        self.total += 1;
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Examples per vertex, `N/V`.
    pub fn nu(&self) -> f64 {
        self.total as f64 / self.counts.len() as f64
    }

    /// Vertices with at least one example.
    pub fn support(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&i| self.counts[i] > 0).collect()
    }
}

/// One point of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningCurvePoint {
    pub nu: f64,
    pub epsilon: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// `Var_i = C_ii − C_iS (C_SS + diag(σ²/n_S))^{-1} C_Si` for every vertex.
pub fn posterior_variances<T: Real>(
    c: &DMatrix<T>,
    counts: &TrainingCounts,
    noise: &NoiseModel,
) -> Result<Vec<T>> {
    let v = c.nrows();
    if c.ncols() != v || counts.counts().len() != v {
        return Err(Error::Domain(format!(
            "kernel is {}x{} but counts cover {} vertices",
            c.nrows(),
            c.ncols(),
            counts.counts().len()
        )));
    }
    let support = counts.support();
    let mut var: Vec<T> = c.diagonal().iter().copied().collect();
    if support.is_empty() {
        return Ok(var);
    }
    let s = support.len();
    let sigma2 = T::of(noise.sigma2());
    let mut k = DMatrix::from_fn(s, s, |a, b| c[(support[a], support[b])]);
    for (a, &j) in support.iter().enumerate() {
        k[(a, a)] += sigma2 / T::of_usize(counts.counts()[j]);
    }
    let chol = k.cholesky().ok_or(NumericalError::NotPositiveDefinite)?;
    let c_s = c.select_rows(&support);
    let z = chol.l_dirty().solve_lower_triangular(&c_s).ok_or(NumericalError::Singular)?;
    for (i, col) in z.column_iter().enumerate() {
        var[i] -= col.norm_squared();
    }
    if var.iter().all(|x| x.finite()) {
        Ok(var)
    } else {
        Err(NumericalError::NonFinite.into())
    }
}

/// Bayes error: mean posterior variance over a uniform input distribution.
pub fn bayes_error<T: Real>(c: &DMatrix<T>, counts: &TrainingCounts, noise: &NoiseModel) -> Result<f64> {
    let var = posterior_variances(c, counts, noise)?;
    Ok(var.iter().map(|x| x.as_f64()).sum::<f64>() / var.len() as f64)
}

/// Finite-graph Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub vertex_count: usize,
    pub graphs: usize,
    pub sets_per_graph: usize,
    /// Components with `2..=exact_components` vertices are averaged exactly
    /// over their example counts; below 2 everything is sampled.
    #[serde(default = "default_exact_components")]
    pub exact_components: usize,
}

pub const DEFAULT_EXACT_COMPONENTS: usize = 3;

fn default_exact_components() -> usize {
    DEFAULT_EXACT_COMPONENTS
}

impl SimulationSettings {
    pub fn new(vertex_count: usize, graphs: usize, sets_per_graph: usize) -> Self {
        Self { vertex_count, graphs, sets_per_graph, exact_components: DEFAULT_EXACT_COMPONENTS }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertex_count == 0 || self.graphs == 0 || self.sets_per_graph == 0 {
            return Err(Error::Config(
                "simulation needs at least one vertex, graph and training set".into(),
            ));
        }
        Ok(())
    }
}

/// Learning curves for several noise levels from one set of sampled graphs
/// and training sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCurves {
    pub sigma2: Vec<f64>,
    /// `curves[k]` is the learning curve at noise `sigma2[k]`.
    pub curves: Vec<Vec<LearningCurvePoint>>,
    /// Contribution of isolated vertices, `(1/V) Σ_{d_i=0} Var_i`, in the
    /// same layout as `curves`.
    pub isolated: Vec<Vec<LearningCurvePoint>>,
    /// Mean fraction of isolated vertices over the sampled graphs.
    pub isolated_fraction: f64,
}

/// Per-instance output: `[sigma][nu] -> (epsilon, isolated part)`.
type InstanceCurves = Vec<Vec<(f64, f64)>>;

/// Simulates learning curves on sampled graphs.
///
/// Each instance's error is the sampled posterior variance summed over
/// vertices outside small components, plus the exact expectation over
/// small components (see [`SimulationSettings::exact_components`]).
/// Training sets are nested along the ν grid: the `N = round(νV)` inputs
/// for each ν are a prefix of one uniform input sequence, and all noise
/// levels share the same inputs. Each instance's curve is therefore
/// exactly monotone in ν and σ², and differences between grid points are
/// measured with common random numbers. Graph `g`, set `s` draws from a
/// generator derived from `(seed, g, s)`, so results do not depend on the
/// number of worker threads.
pub fn simulate_learning_curves<T: Real>(
    dist: &DegreeDistribution,
    params: &KernelParams,
    sigma2: &[f64],
    nu_grid: &[f64],
    settings: &SimulationSettings,
    seed: u64,
) -> Result<SimulatedCurves> {
    settings.validate()?;
    params.validate()?;
    let noises = sigma2.iter().map(|&s| NoiseModel::new(s)).collect::<Result<Vec<_>>>()?;
    if nu_grid.iter().any(|nu| !(nu.is_finite() && *nu >= 0.0)) {
        return Err(Error::Config("ν grid values must be finite and nonnegative".into()));
    }
    let v = settings.vertex_count;
    let targets: Vec<usize> = nu_grid.iter().map(|nu| (nu * v as f64).round() as usize).collect();
    let per_graph: Vec<(Vec<InstanceCurves>, f64)> = (0..settings.graphs)
        .into_par_iter()
        .map(|g| -> Result<_> {
            let graph = sample_instance_graph(dist, v, seed, g)?;
            let kernel = build_kernel::<T>(&graph, params)?;
            let isolated: Vec<usize> = graph.isolated_vertices().collect();
            let small = small_part(&graph, kernel.matrix(), settings.exact_components, &noises, &targets)?;
            let sets = (0..settings.sets_per_graph)
                .map(|s| {
                    let mut rng = task_rng(seed, &[0x7365_7473, g as u64, s as u64]);
                    instance_curve(kernel.matrix(), &isolated, &small, &noises, &targets, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((sets, isolated.len() as f64 / v as f64))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curves = Vec::with_capacity(noises.len());
    let mut isolated = Vec::with_capacity(noises.len());
    for k in 0..noises.len() {
        let mut curve = Vec::with_capacity(nu_grid.len());
        let mut iso = Vec::with_capacity(nu_grid.len());
        for (t, &nu) in nu_grid.iter().enumerate() {
            let (mut eps, mut part) = (Accumulator::new(), Accumulator::new());
            for (sets, _) in &per_graph {
                for inst in sets {
                    eps.push(inst[k][t].0);
                    part.push(inst[k][t].1);
                }
            }
            let n = eps.count() as usize;
            curve.push(LearningCurvePoint { nu, epsilon: eps.mean(), stderr: eps.std_err(), n_samples: n });
            iso.push(LearningCurvePoint { nu, epsilon: part.mean(), stderr: part.std_err(), n_samples: n });
        }
        curves.push(curve);
        isolated.push(iso);
    }
    let isolated_fraction =
        per_graph.iter().map(|(_, f)| f).sum::<f64>() / per_graph.len() as f64;
    Ok(SimulatedCurves { sigma2: sigma2.to_vec(), curves, isolated, isolated_fraction })
}

/// Graph `index` of a simulation run with `seed`.
pub fn sample_instance_graph(dist: &DegreeDistribution, vertex_count: usize, seed: u64, index: usize) -> Result<Graph> {
    let mut rng = task_rng(seed, &[0x6772_6170, index as u64]);
    let seq = dist.sample_degree_sequence(vertex_count, &mut rng)?;
    sample_graph(&seq, &mut rng)
}

/// Single-noise convenience wrapper around [`simulate_learning_curves`].
pub fn simulate_learning_curve<T: Real>(
    dist: &DegreeDistribution,
    params: &KernelParams,
    noise: &NoiseModel,
    nu_grid: &[f64],
    settings: &SimulationSettings,
    seed: u64,
) -> Result<Vec<LearningCurvePoint>> {
    let mut out = simulate_learning_curves::<T>(dist, params, &[noise.sigma2()], nu_grid, settings, seed)?;
    Ok(out.curves.swap_remove(0))
}

/// Exact Bayes error of the regular(1) ensemble (disjoint edges) with
/// Poisson(ν) examples per vertex: a 2×2 posterior averaged over the
/// double sum of example counts. Both normalizations agree here since the
/// two vertices are equivalent.
pub fn disjoint_edges_bayes_error(params: &KernelParams, noise: &NoiseModel, nu: f64) -> Result<f64> {
    let edge = Graph::from_edges(2, &[(0, 1)])?;
    let c = build_kernel::<f64>(&edge, params)?.into_matrix();
    let weights = poisson_weights(nu);
    let mut eps = 0.0;
    for (n0, w0) in weights.iter().enumerate() {
        for (n1, w1) in weights.iter().enumerate() {
            let var = posterior_variances(&c, &TrainingCounts::new(vec![n0, n1]), noise)?;
            eps += w0 * w1 * var[0];
        }
    }
    Ok(eps)
}

/// `Σ_{i∈comp} E[Var_i]` for a component with kernel block `c` when `n`
/// uniform inputs fall on a graph of `v` vertices, one value per noise
/// level. The component's counts are multinomial,
/// `P(n₁…n_m) = n!/(Π nᵢ! (n−S)!) v^{−S} (1 − m/v)^{n−S}` with `S = Σ nᵢ`;
/// count vectors beyond the per-vertex Poisson cutoff or with probability
/// below `1e-18` are dropped.
pub fn component_expected_variance<T: Real>(
    c: &DMatrix<T>,
    v: usize,
    n: usize,
    noises: &[NoiseModel],
) -> Result<Vec<f64>> {
    let m = c.nrows();
    if m == 0 || m > v {
        return Err(Error::Domain(format!("component of {m} vertices on a graph of {v}")));
    }
    let kmax = n.min(poisson_cutoff(n as f64 / v as f64));
    let mut ln_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let ln_p = -(v as f64).ln();
    let rest = 1.0 - m as f64 / v as f64;
    let mut out = vec![0.0; noises.len()];
    let mut counts = vec![0usize; m];
    loop {
        let total: usize = counts.iter().sum();
        if total <= n {
            let tail = n - total;
            let ln_rest = if tail == 0 { 0.0 } else { tail as f64 * rest.ln() };
            let ln_w = ln_fact[n] - ln_fact[tail] - counts.iter().map(|&k| ln_fact[k]).sum::<f64>()
                + total as f64 * ln_p
                + ln_rest;
            let w = ln_w.exp();
            if w > 1e-18 {
                let tc = TrainingCounts::new(counts.clone());
                for (k, noise) in noises.iter().enumerate() {
                    let var = posterior_variances(c, &tc, noise)?;
                    out[k] += w * var.iter().map(|x| x.as_f64()).sum::<f64>();
                }
            }
        }
        // Odometer over [0, kmax]^m.
        let mut i = 0;
        while i < m && counts[i] == kmax {
            counts[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
        counts[i] += 1;
    }
    Ok(out)
}

/// Vertices of a graph whose variance is averaged exactly, and that exact
/// summed contribution per `[noise][target]`.
struct SmallPart {
    exact: Vec<bool>,
    sums: Vec<Vec<f64>>,
}

fn small_part<T: Real>(
    graph: &Graph,
    c: &DMatrix<T>,
    max_size: usize,
    noises: &[NoiseModel],
    targets: &[usize],
) -> Result<SmallPart> {
    let v = c.nrows();
    let mut exact = vec![false; v];
    let mut sums = vec![vec![0.0; targets.len()]; noises.len()];
    for comp in graph.components().into_iter().filter(|c| (2..=max_size).contains(&c.len())) {
        let block = c.select_rows(&comp).select_columns(&comp);
        for (t, &n) in targets.iter().enumerate() {
            let part = component_expected_variance(&block, v, n, noises)?;
            for (k, x) in part.into_iter().enumerate() {
                sums[k][t] += x;
            }
        }
        comp.iter().for_each(|&i| exact[i] = true);
    }
    Ok(SmallPart { exact, sums })
}

fn instance_curve<T: Real, R: Rng + ?Sized>(
    c: &DMatrix<T>,
    isolated: &[usize],
    small: &SmallPart,
    noises: &[NoiseModel],
    targets: &[usize],
    rng: &mut R,
) -> Result<InstanceCurves> {
    let v = c.nrows();
    let n_max = targets.iter().copied().max().unwrap_or(0);
    let inputs: Vec<usize> = (0..n_max).map(|_| rng.random_range(0..v)).collect();
    let mut out = vec![Vec::with_capacity(targets.len()); noises.len()];
    for (t, &n) in targets.iter().enumerate() {
        let counts = TrainingCounts::from_inputs(v, &inputs[..n]);
        for (k, noise) in noises.iter().enumerate() {
            let var = posterior_variances(c, &counts, noise)?;
            let sampled: f64 =
                var.iter().zip(&small.exact).filter(|(_, &e)| !e).map(|(x, _)| x.as_f64()).sum();
            let total = (sampled + small.sums[k][t]) / v as f64;
            let iso = isolated.iter().map(|&i| var[i].as_f64()).sum::<f64>() / v as f64;
            out[k].push((total, iso));
        }
    }
    Ok(out)
}
