//! Population dynamics for the globally normalized kernel.
//!
//! Messages obey `V = [O(d) − Σ_{i<d} X Vⁱ X]⁻¹` with the on-site term
//! `(γ/σ² + λ)` taken to `λ → 0`, which is a rank-one regularized inverse
//! with `s = (γ/σ²)/(dκ)`. The Bayes error is
//! `ε = Σ_d p(d) ⟨1/(γ/σ² + dκ (M_d⁻¹)₀₀)⟩_γ`.
//!
//! The estimator averages exactly over the vertex's own `γ` and over the
//! example count of one of its neighbours, which removes the noise from
//! rare counts such as `γ = 0` at large `ν` (and all noise on trees of
//! depth one).

use rand::Rng;

use super::core::{inverse_00, inverse_00_over_examples, pinned_inverse, CavityGeometry, CavityMessage, PinnedMessage};
use super::histogram::Histogram;
use super::population::{self, DegreeSampler, Dynamics, Estimate, Population, SolverDiagnostics, SolverSettings};
use crate::ensembles::DegreeDistribution;
use crate::error::{Error, NumericalError, Result};
use crate::kernel::KernelParams;
use crate::scalar::Real;
use crate::stats::{poisson_support, sample_poisson, task_rng, TaskRng};

/// One message update: `R(O_base(d) − X(ΣVⁱ)X, (γ/σ²)/(dκ))`.
pub fn update_message_global<T: Real>(
    geometry: &CavityGeometry<T>,
    incoming: &[&CavityMessage<T>],
    d: usize,
    gamma: usize,
    kappa: f64,
    sigma2: f64,
) -> std::result::Result<PinnedMessage<T>, NumericalError> {
    debug_assert!(d >= 1 && incoming.len() + 1 == d);
    let sum = geometry.sum(incoming.iter().copied());
    let m = geometry.precision(d, &sum);
    pinned_inverse(&m, gamma, 1.0 / (sigma2 * d as f64 * kappa))
}

/// Solver for one `(ensemble, kernel, σ², ν, κ)` point.
#[derive(Debug, Clone)]
pub struct GlobalSolver<T: Real> {
    sampler: DegreeSampler,
    geometry: CavityGeometry<T>,
    sigma2: f64,
    nu: f64,
    kappa: f64,
    support: Vec<(usize, f64)>,
}

impl<T: Real> GlobalSolver<T> {
    pub fn new(
        dist: &DegreeDistribution,
        params: &KernelParams,
        sigma2: f64,
        nu: f64,
        kappa: f64,
    ) -> Result<Self> {
        params.validate()?;
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
        }
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::Config(format!("ν must be finite and nonnegative, got {nu}")));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Config(format!("κ must be positive, got {kappa}")));
        }
        Ok(Self {
            sampler: DegreeSampler::new(dist),
            geometry: CavityGeometry::new(params.p, params.a),
            sigma2,
            nu,
            kappa,
            support: poisson_support(nu),
        })
    }

    pub fn geometry(&self) -> &CavityGeometry<T> {
        &self.geometry
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `⟨1/(γ/σ² + dκ m)⟩_γ`; `d = 0` uses `dκm → κ/c₀`.
    fn average_over_examples(&self, precision: f64) -> f64 {
        self.support.iter().map(|&(g, w)| w / (g as f64 / self.sigma2 + precision)).sum()
    }

    fn pick<'a>(&self, members: &'a [PinnedMessage<T>], d: usize, rng: &mut TaskRng) -> Vec<&'a PinnedMessage<T>> {
        (0..d).map(|_| &members[rng.random_range(0..members.len())]).collect()
    }

    /// Draws `(d, members)` and returns `d κ (M_d⁻¹)₀₀`, or `None` when it is
    /// not positive.
    fn prior_precision(&self, members: &[PinnedMessage<T>], d: usize, rng: &mut TaskRng) -> Option<f64> {
        let picks = self.pick(members, d, rng);
        let m = self.geometry.precision(d, &self.geometry.sum(picks.iter().map(|p| &p.v)));
        match inverse_00(&m) {
            Ok(m00) if m00 > T::zero() => Some(d as f64 * self.kappa * m00.as_f64()),
            _ => None,
        }
    }

    pub fn run(&self, settings: &SolverSettings, seed: u64) -> Result<GlobalSolution<T>> {
        let (population, estimate, diagnostics) = population::solve(self, settings, seed)?;
        Ok(GlobalSolution { population, estimate, diagnostics })
    }

    pub fn estimate(&self, pop: &Population<PinnedMessage<T>>, n_samples: usize, rng: &mut TaskRng) -> Estimate {
        population::estimate(self, pop, n_samples, rng)
    }

    /// Histograms of raw `V₀₀` over members and of the marginal posterior
    /// variance proxy `1/(γ/σ² + dκ(M_d⁻¹)₀₀)` over `draws` fresh
    /// `(d ~ p(d), γ ~ Poisson(ν), members)` tuples.
    pub fn histograms(
        &self,
        pop: &Population<PinnedMessage<T>>,
        draws: usize,
        bins: usize,
        rng: &mut TaskRng,
    ) -> (Histogram, Histogram) {
        let v00: Vec<f64> = pop.members.iter().map(|m| m.v[(0, 0)].as_f64()).collect();
        let c0 = self.geometry.isolated_prior_variance();
        let dist = self.sampler.distribution();
        let mut proxy = Vec::with_capacity(draws);
        while proxy.len() < draws {
            let d = dist.sample_table(rng);
            let gamma = sample_poisson(self.nu, rng) as f64;
            let precision = if d == 0 {
                Some(self.kappa / c0)
            } else if pop.is_empty() {
                None
            } else {
                self.prior_precision(&pop.members, d, rng)
            };
            if let Some(precision) = precision {
                proxy.push(1.0 / (gamma / self.sigma2 + precision));
            }
        }
        let hi = proxy.iter().copied().fold(0.0, f64::max);
        (
            Histogram::auto("v00", &v00, bins),
            Histogram::from_values("posterior_variance", &proxy, bins, 0.0, hi),
        )
    }
}

impl<T: Real> Dynamics for GlobalSolver<T> {
    type Member = PinnedMessage<T>;

    fn sampler(&self) -> &DegreeSampler {
        &self.sampler
    }

    fn leaf(&self, rng: &mut TaskRng) -> std::result::Result<Self::Member, NumericalError> {
        let gamma = sample_poisson(self.nu, rng);
        update_message_global(&self.geometry, &[], 1, gamma, self.kappa, self.sigma2)
    }

    fn update(&self, members: &[Self::Member], rng: &mut TaskRng) -> std::result::Result<Self::Member, NumericalError> {
        let d = self.sampler.size_biased(rng);
        let gamma = sample_poisson(self.nu, rng);
        let incoming: Vec<&CavityMessage<T>> =
            (1..d).map(|_| &members[rng.random_range(0..members.len())].v).collect();
        update_message_global(&self.geometry, &incoming, d, gamma, self.kappa, self.sigma2)
    }

    fn connected_sample(&self, members: &[Self::Member], rng: &mut TaskRng) -> Option<f64> {
        let d = self.sampler.connected(rng);
        let picks = self.pick(members, d, rng);
        let m = self.geometry.precision(d, &self.geometry.sum(picks.iter().map(|p| &p.v)));
        let m00 = inverse_00_over_examples(&self.geometry, &m, picks[0], &self.support).ok()?;
        let scale = d as f64 * self.kappa;
        let mut total = 0.0;
        for (&(_, w), m00) in self.support.iter().zip(m00) {
            if !(m00 > 0.0) {
                return None;
            }
            total += w * self.average_over_examples(scale * m00);
        }
        Some(total)
    }

    fn isolated_term(&self) -> f64 {
        self.average_over_examples(self.kappa / self.geometry.isolated_prior_variance())
    }
}

#[derive(Debug, Clone)]
pub struct GlobalSolution<T: Real> {
    pub population: Population<PinnedMessage<T>>,
    pub estimate: Estimate,
    pub diagnostics: SolverDiagnostics,
}

/// κ for a globally normalized kernel: the ensemble-average raw prior
/// variance, i.e. ε at `ν = 0` with `κ = 1`.
///
/// At `ν = 0` every update has `s = 0`, so the population does not depend
/// on κ or σ² and ε scales exactly as `1/κ`; solving at `ν = 0` with the
/// returned κ and the same seed gives ε = 1 up to roundoff.
pub fn calibrate_kappa<T: Real>(
    dist: &DegreeDistribution,
    params: &KernelParams,
    settings: &SolverSettings,
    seed: u64,
) -> Result<(f64, SolverDiagnostics)> {
    let solver = GlobalSolver::<T>::new(dist, params, 1.0, 0.0, 1.0)?;
    let solution = solver.run(settings, seed)?;
    Ok((solution.estimate.epsilon, solution.diagnostics))
}

/// Convenience: a fresh generator for sampling from a frozen population.
pub fn estimation_rng(seed: u64) -> TaskRng {
    task_rng(seed, &[0x6869_7374])
}

/// Entrywise standard deviation across members, maximized over entries.
pub fn max_entry_std<T: Real>(members: &[PinnedMessage<T>]) -> f64 {
    let Some(first) = members.first() else { return 0.0 };
    let n = members.len() as f64;
    let mut worst = 0.0f64;
    for idx in 0..first.v.len() {
        let mean = members.iter().map(|m| m.v[idx].as_f64()).sum::<f64>() / n;
        let var = members.iter().map(|m| (m.v[idx].as_f64() - mean).powi(2)).sum::<f64>() / n;
        worst = worst.max(var.sqrt());
    }
    worst
}
