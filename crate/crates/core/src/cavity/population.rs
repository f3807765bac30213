//! Generic population-dynamics driver shared by the global and local
//! solvers.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::DegreeDistribution;
use crate::error::{Error, NumericalError, Result};
use crate::stats::{task_rng, Accumulator, TaskRng};

/// Consecutive sweeps that must pass the change criterion.
const CONVERGENCE_STREAK: usize = 5;

/// Consecutive failed inversions tolerated within one update before the
/// run is declared broken.
const MAX_UPDATE_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub population_size: usize,
    /// Hard cap on sweeps before the final measurement.
    pub max_sweeps: usize,
    /// Burn-in sweeps before convergence is assessed.
    pub min_sweeps: usize,
    /// Relative-change tolerance on ε between sweeps.
    pub tol: f64,
    /// Monte-Carlo samples per ε estimate.
    pub epsilon_samples: usize,
    /// Post-convergence snapshots averaged into the reported ε.
    pub snapshots: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            population_size: 5000,
            max_sweeps: 300,
            min_sweeps: 20,
            tol: 1e-4,
            epsilon_samples: 20_000,
            snapshots: 4,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config("population size must be at least 2".into()));
        }
        if self.epsilon_samples == 0 || self.snapshots == 0 {
            return Err(Error::Config("epsilon_samples and snapshots must be positive".into()));
        }
        if self.max_sweeps < self.min_sweeps {
            return Err(Error::Config("max_sweeps must be at least min_sweeps".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// A Monte-Carlo estimate of the Bayes error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub epsilon: f64,
    pub stderr: f64,
    pub n_samples: usize,
    /// Samples dropped because `(M⁻¹)₀₀ ≤ 0` or an inversion failed.
    pub discarded: u64,
}

/// Solver bookkeeping reported alongside each estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    pub discarded_updates: u64,
    pub discarded_samples: u64,
    /// ε estimate after each monitored sweep.
    pub history: Vec<f64>,
}

/// A population of cavity messages with its own generator.
#[derive(Debug, Clone)]
pub struct Population<M> {
    pub members: Vec<M>,
    pub rng: TaskRng,
    pub sweeps: usize,
    pub discarded_updates: u64,
}

impl<M> Population<M> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Degree sampling needed by both solvers: size-biased for message updates,
/// and `p(d)` restricted to `d ≥ 1` for estimators (the `d = 0` term is
/// always handled exactly).
#[derive(Debug, Clone)]
pub struct DegreeSampler {
    dist: DegreeDistribution,
    connected: Option<WeightedIndex<f64>>,
    p0: f64,
}

impl DegreeSampler {
    pub fn new(dist: &DegreeDistribution) -> Self {
        let table = dist.table();
        let p0 = table[0];
        let connected = if p0 < 1.0 { WeightedIndex::new(&table[1..]).ok() } else { None };
        Self { dist: dist.clone(), connected, p0 }
    }

    pub fn distribution(&self) -> &DegreeDistribution {
        &self.dist
    }

    /// Probability of an isolated vertex under the truncated table.
    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// `true` when every vertex is isolated and no messages exist.
    pub fn all_isolated(&self) -> bool {
        self.connected.is_none()
    }

    /// `d ~ p(d) d / d̄`. Only called when messages exist, which implies a
    /// positive mean degree.
    pub fn size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.size_biased_sample(rng).expect("messages exist only for positive mean degree")
    }

    /// `d ~ p(d | d ≥ 1)`.
    pub fn connected<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.connected.as_ref().expect("connected degrees exist").sample(rng) + 1
    }
}

/// One solver's message recursion and estimator.
pub trait Dynamics {
    type Member: Clone;

    fn sampler(&self) -> &DegreeSampler;

    /// A leaf message (degree 1, no incoming messages).
    fn leaf(&self, rng: &mut TaskRng) -> std::result::Result<Self::Member, NumericalError>;

    /// One candidate replacement member built from the current population.
    fn update(
        &self,
        members: &[Self::Member],
        rng: &mut TaskRng,
    ) -> std::result::Result<Self::Member, NumericalError>;

    /// Contribution of one sampled connected vertex, already averaged over
    /// its own example count; `None` for a discarded sample.
    fn connected_sample(&self, members: &[Self::Member], rng: &mut TaskRng) -> Option<f64>;

    /// Exact contribution of an isolated vertex.
    fn isolated_term(&self) -> f64;
}

/// Builds the initial population of leaf messages.
pub fn initialize<D: Dynamics>(
    dynamics: &D,
    size: usize,
    seed: u64,
) -> Result<Population<D::Member>> {
    let mut rng = task_rng(seed, &[0x706f_70]);
    let mut members = Vec::with_capacity(size);
    if !dynamics.sampler().all_isolated() {
        for _ in 0..size {
            members.push(dynamics.leaf(&mut rng)?);
        }
    }
    Ok(Population { members, rng, sweeps: 0, discarded_updates: 0 })
}

/// `S` random-sequential updates. Failed inversions are discarded and the
/// update is redrawn.
pub fn sweep<D: Dynamics>(dynamics: &D, pop: &mut Population<D::Member>) -> Result<()> {
    let size = pop.members.len();
    for _ in 0..size {
        let mut retries = 0;
        let member = loop {
            match dynamics.update(&pop.members, &mut pop.rng) {
                Ok(m) => break m,
                Err(err) => {
                    pop.discarded_updates += 1;
                    retries += 1;
                    if retries >= MAX_UPDATE_RETRIES {
                        return Err(err.into());
                    }
                }
            }
        };
        let target = pop.rng.random_range(0..size);
        pop.members[target] = member;
    }
    pop.sweeps += 1;
    Ok(())
}

/// Monte-Carlo ε with the isolated-vertex term added exactly.
///
/// The reported error combines estimator noise and finite-population noise,
/// `sd·√(1/n + 1/S)`: the population is itself a sample of size `S` from
/// the fixed-point distribution.
pub fn estimate<D: Dynamics>(
    dynamics: &D,
    pop: &Population<D::Member>,
    n_samples: usize,
    rng: &mut TaskRng,
) -> Estimate {
    let sampler = dynamics.sampler();
    let iso = dynamics.isolated_term();
    if sampler.all_isolated() {
        return Estimate { epsilon: iso, stderr: 0.0, n_samples, discarded: 0 };
    }
    let mut acc = Accumulator::new();
    let mut discarded = 0;
    for _ in 0..n_samples {
        match dynamics.connected_sample(&pop.members, rng) {
            Some(x) => acc.push(x),
            None => discarded += 1,
        }
    }
    let p0 = sampler.p0();
    let weight = 1.0 - p0;
    let n = acc.count().max(1) as f64;
    let stderr = weight * acc.std_dev() * (1.0 / n + 1.0 / pop.members.len() as f64).sqrt();
    Estimate { epsilon: p0 * iso + weight * acc.mean(), stderr, n_samples, discarded }
}

/// Runs sweeps until ε stabilizes, then averages `snapshots` estimates
/// taken one sweep apart.
///
/// Convergence: after `min_sweeps`, the relative change of ε between
/// consecutive sweeps must be below `max(tol, 2·combined stderr / ε)` for
/// several sweeps in a row. A fixed relative tolerance alone cannot be met
/// once Monte-Carlo noise dominates the sweep-to-sweep change.
pub fn solve<D: Dynamics>(
    dynamics: &D,
    settings: &SolverSettings,
    seed: u64,
) -> Result<(Population<D::Member>, Estimate, SolverDiagnostics)> {
    settings.validate()?;
    let mut pop = initialize(dynamics, settings.population_size, seed)?;
    let mut diag = SolverDiagnostics::default();
    let mut est_rng = task_rng(seed, &[0x6573_74]);
    if dynamics.sampler().all_isolated() {
        let est = estimate(dynamics, &pop, settings.epsilon_samples, &mut est_rng);
        diag.converged = true;
        return Ok((pop, est, diag));
    }
    let mut previous: Option<Estimate> = None;
    let mut streak = 0;
    while pop.sweeps < settings.max_sweeps {
        sweep(dynamics, &mut pop)?;
        if pop.sweeps < settings.min_sweeps {
            continue;
        }
        let est = estimate(dynamics, &pop, settings.epsilon_samples, &mut est_rng);
        diag.history.push(est.epsilon);
        diag.discarded_samples += est.discarded;
        if let Some(prev) = previous {
            let change = (est.epsilon - prev.epsilon).abs() / est.epsilon.abs().max(f64::MIN_POSITIVE);
            let noise = 2.0 * (est.stderr.powi(2) + prev.stderr.powi(2)).sqrt() / est.epsilon.abs().max(f64::MIN_POSITIVE);
            streak = if change < settings.tol.max(noise) { streak + 1 } else { 0 };
        }
        previous = Some(est);
        if streak >= CONVERGENCE_STREAK {
            diag.converged = true;
            break;
        }
    }
    let mut eps = Accumulator::new();
    let mut stderr = 0.0f64;
    let mut discarded = 0;
    for k in 0..settings.snapshots {
        if k > 0 {
            sweep(dynamics, &mut pop)?;
        }
        let est = estimate(dynamics, &pop, settings.epsilon_samples, &mut est_rng);
        eps.push(est.epsilon);
        stderr = stderr.max(est.stderr);
        discarded += est.discarded;
    }
    diag.sweeps = pop.sweeps;
    diag.discarded_updates = pop.discarded_updates;
    diag.discarded_samples += discarded;
    // Snapshots share one population lineage, so the single-snapshot error
    // is kept as a conservative bound rather than divided by √K.
    let est = Estimate {
        epsilon: eps.mean(),
        stderr,
        n_samples: settings.epsilon_samples * settings.snapshots,
        discarded,
    };
    Ok((pop, est, diag))
}
