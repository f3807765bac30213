//! Population dynamics for the locally normalized kernel.
//!
//! Each member is a pair of messages. The auxiliary one carries no data and
//! determines the vertex's local prior variance `v`; the primary one carries
//! the examples, with the on-site data term rescaled by `1/(d v)`. The
//! reverse auxiliary message along an edge is drawn independently from the
//! auxiliary marginal, dropping its conditioning on the forward pair.
//!
//! As in the global solver, the estimator averages exactly over the
//! example count of one neighbour as well as the vertex's own.

use rand::Rng;

use super::core::{
    inverse_00, inverse_00_over_examples, inverse_with_column, pinned_inverse, CavityGeometry, CavityMessage,
    PinnedMessage,
};
use super::population::{self, DegreeSampler, Dynamics, Estimate, Population, SolverDiagnostics, SolverSettings};
use crate::ensembles::DegreeDistribution;
use crate::error::{Error, NumericalError, Result};
use crate::kernel::KernelParams;
use crate::scalar::Real;
use crate::stats::{poisson_support, sample_poisson, TaskRng};

/// Auxiliary and primary cavity messages of one directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPair<T: Real> {
    pub aux: CavityMessage<T>,
    pub main: PinnedMessage<T>,
}

/// One pair update.
///
/// 1. `M_aux = O_base(d) − X(Σ v_auxⁱ)X`, `v_aux' = R(M_aux, 0)`.
/// 2. `M̃ = M_aux − X v̂_aux X` completes the auxiliary neighbourhood with the
///    reverse message; `v = 1/(d (M̃⁻¹)₀₀)` is the local prior variance.
/// 3. `M = O_base(d) − X(Σ v_mainⁱ)X`, `v_main' = R(M, (γ/σ²)/(d v))`.
///
/// Returns the new pair and `v`.
pub fn update_pair_local<T: Real>(
    geometry: &CavityGeometry<T>,
    incoming: &[&LocalPair<T>],
    reverse_aux: &CavityMessage<T>,
    d: usize,
    gamma: usize,
    sigma2: f64,
) -> std::result::Result<(LocalPair<T>, f64), NumericalError> {
    debug_assert!(d >= 1 && incoming.len() + 1 == d);
    let aux_sum = geometry.sum(incoming.iter().map(|p| &p.aux));
    let m_aux = geometry.precision(d, &aux_sum);
    let (aux, w_aux) = inverse_with_column(&m_aux, T::zero())?;
    let m_tilde = &m_aux - geometry.conjugate(reverse_aux);
    let m00 = inverse_00(&m_tilde)?.as_f64();
    if !(m00 > 0.0) {
        return Err(NumericalError::VanishingDenominator(m00));
    }
    let v = 1.0 / (d as f64 * m00);
    let rate = m00 / sigma2;
    let main = if gamma == 0 && incoming.iter().all(|p| p.aux == p.main.v) {
        // Identical recursions: skip the second factorization.
        PinnedMessage { v: aux.clone(), w: w_aux, rate, gamma }
    } else {
        let main_sum = geometry.sum(incoming.iter().map(|p| &p.main.v));
        pinned_inverse(&geometry.precision(d, &main_sum), gamma, rate)?
    };
    Ok((LocalPair { aux, main }, v))
}

#[derive(Debug, Clone)]
pub struct LocalSolver<T: Real> {
    sampler: DegreeSampler,
    geometry: CavityGeometry<T>,
    sigma2: f64,
    nu: f64,
    support: Vec<(usize, f64)>,
}

impl<T: Real> LocalSolver<T> {
    pub fn new(dist: &DegreeDistribution, params: &KernelParams, sigma2: f64, nu: f64) -> Result<Self> {
        params.validate()?;
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
        }
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::Config(format!("ν must be finite and nonnegative, got {nu}")));
        }
        Ok(Self {
            sampler: DegreeSampler::new(dist),
            geometry: CavityGeometry::new(params.p, params.a),
            sigma2,
            nu,
            support: poisson_support(nu),
        })
    }

    pub fn geometry(&self) -> &CavityGeometry<T> {
        &self.geometry
    }

    fn average_over_examples(&self, precision: f64) -> f64 {
        self.support.iter().map(|&(g, w)| w / (g as f64 / self.sigma2 + precision)).sum()
    }

    /// `⟨1/(γ/σ² + m/m_aux)⟩` for `d` sampled pairs, also averaged over the
    /// first pair's example count; `m/m_aux = (M_d⁻¹)₀₀ / (M_aux,d⁻¹)₀₀` is
    /// the local prior precision rescaled by the local prior variance.
    fn connected_average(&self, members: &[LocalPair<T>], d: usize, rng: &mut TaskRng) -> Option<f64> {
        let picks: Vec<&LocalPair<T>> =
            (0..d).map(|_| &members[rng.random_range(0..members.len())]).collect();
        let aux = self.geometry.precision(d, &self.geometry.sum(picks.iter().map(|p| &p.aux)));
        let main = self.geometry.precision(d, &self.geometry.sum(picks.iter().map(|p| &p.main.v)));
        let m_aux = inverse_00(&aux).ok()?.as_f64();
        if !(m_aux > 0.0) {
            return None;
        }
        let m = inverse_00_over_examples(&self.geometry, &main, &picks[0].main, &self.support).ok()?;
        let mut total = 0.0;
        for (&(_, w), m) in self.support.iter().zip(m) {
            if !(m > 0.0) {
                return None;
            }
            total += w * self.average_over_examples(m / m_aux);
        }
        Some(total)
    }

    pub fn run(&self, settings: &SolverSettings, seed: u64) -> Result<LocalSolution<T>> {
        let (population, estimate, diagnostics) = population::solve(self, settings, seed)?;
        Ok(LocalSolution { population, estimate, diagnostics })
    }

    pub fn estimate(&self, pop: &Population<LocalPair<T>>, n_samples: usize, rng: &mut TaskRng) -> Estimate {
        population::estimate(self, pop, n_samples, rng)
    }

    /// Local prior variances `v` of `draws` fresh pair updates, for
    /// diagnostics.
    pub fn sample_prior_variances(&self, pop: &Population<LocalPair<T>>, draws: usize, rng: &mut TaskRng) -> Vec<f64> {
        let mut out = Vec::with_capacity(draws);
        if pop.is_empty() {
            return out;
        }
        while out.len() < draws {
            if let Ok((_, v)) = self.draw_update(&pop.members, rng) {
                out.push(v);
            }
        }
        out
    }

    fn draw_update(
        &self,
        members: &[LocalPair<T>],
        rng: &mut TaskRng,
    ) -> std::result::Result<(LocalPair<T>, f64), NumericalError> {
        let d = self.sampler.size_biased(rng);
        let gamma = sample_poisson(self.nu, rng);
        let incoming: Vec<&LocalPair<T>> =
            (1..d).map(|_| &members[rng.random_range(0..members.len())]).collect();
        let reverse = &members[rng.random_range(0..members.len())].aux;
        update_pair_local(&self.geometry, &incoming, reverse, d, gamma, self.sigma2)
    }
}

impl<T: Real> Dynamics for LocalSolver<T> {
    type Member = LocalPair<T>;

    fn sampler(&self) -> &DegreeSampler {
        &self.sampler
    }

    /// Leaves start with `v_aux = v_main`, which makes the `ν = 0` pair
    /// equality exact rather than statistical.
    fn leaf(&self, _rng: &mut TaskRng) -> std::result::Result<Self::Member, NumericalError> {
        let main = pinned_inverse(&self.geometry.o_base(1), 0, 0.0)?;
        Ok(LocalPair { aux: main.v.clone(), main })
    }

    fn update(&self, members: &[Self::Member], rng: &mut TaskRng) -> std::result::Result<Self::Member, NumericalError> {
        self.draw_update(members, rng).map(|(pair, _)| pair)
    }

    fn connected_sample(&self, members: &[Self::Member], rng: &mut TaskRng) -> Option<f64> {
        let d = self.sampler.connected(rng);
        self.connected_average(members, d, rng)
    }

    /// An isolated vertex has unit local prior variance.
    fn isolated_term(&self) -> f64 {
        self.average_over_examples(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct LocalSolution<T: Real> {
    pub population: Population<LocalPair<T>>,
    pub estimate: Estimate,
    pub diagnostics: SolverDiagnostics,
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::cavity::core::rank_one_regularized_inverse;
    use crate::cavity::global::update_message_global;
    use crate::kernel::Normalization;

    fn params(a: f64, p: usize) -> KernelParams {
        KernelParams::new(a, p, Normalization::Local).unwrap()
    }

    fn settings() -> SolverSettings {
        SolverSettings {
            population_size: 1000,
            max_sweeps: 60,
            min_sweeps: 10,
            tol: 1e-4,
            epsilon_samples: 4000,
            snapshots: 2,
        }
    }

    #[test]
    fn leaf_pair_is_zero_shift_inverse() {
        let g = CavityGeometry::<f64>::new(2, 2.0);
        let leaf = rank_one_regularized_inverse(&g.o_base(1), 0.0).unwrap();
        let (pair, v) = update_pair_local(&g, &[], &leaf, 1, 0, 0.1).unwrap();
        assert_eq!(pair.aux, leaf);
        assert_eq!(pair.main.v, leaf);
        assert!(v > 0.0);
    }

    #[test]
    fn local_prior_variance_of_an_edge() {
        // Two vertices joined by one edge: v equals the raw prior variance
        // ½(1 + (1 − 2/a)^p).
        for (a, p) in [(2.0, 2), (3.0, 2), (3.0, 5), (2.5, 10)] {
            let g = CavityGeometry::<f64>::new(p, a);
            let leaf = rank_one_regularized_inverse(&g.o_base(1), 0.0).unwrap();
            let (_, v) = update_pair_local(&g, &[], &leaf, 1, 0, 0.1).unwrap();
            let want = 0.5 * (1.0 + (1.0 - 2.0 / a).powi(p as i32));
            assert!((v - want).abs() < 1e-10, "a={a} p={p}: {v} vs {want}");
        }
    }

    #[test]
    fn zero_examples_keep_pairs_equal() {
        let g = CavityGeometry::<f64>::new(3, 2.0);
        let main = pinned_inverse(&g.o_base(1), 0, 0.0).unwrap();
        let leaf = main.v.clone();
        let pair = LocalPair { aux: leaf.clone(), main };
        let (mid, _) = update_pair_local(&g, &[&pair, &pair], &leaf, 3, 0, 0.1).unwrap();
        assert_eq!(mid.aux, mid.main.v);
        let (out, _) = update_pair_local(&g, &[&mid, &pair], &leaf, 3, 0, 0.1).unwrap();
        assert_eq!(out.aux, out.main.v);
    }

    #[test]
    fn primary_update_matches_direct_inverse() {
        let (p, a, sigma2) = (1, 2.0, 0.1);
        let g = CavityGeometry::<f64>::new(p, a);
        // A well-conditioned incoming pair with data on the primary side.
        let aux = update_message_global(&g, &[], 1, 0, 1.0, sigma2).unwrap().v;
        let main = update_message_global(&g, &[], 1, 2, 1.0, sigma2).unwrap();
        let pair = LocalPair { aux: aux.clone(), main: main.clone() };
        let main = main.v;
        let (out, v) = update_pair_local(&g, &[&pair], &aux, 2, 1, sigma2).unwrap();
        let s = (1.0 / sigma2) / (2.0 * v);
        let mut m = g.o_base(2) - g.conjugate(&main);
        m[(0, 0)] += 1.0 / s;
        let direct = m.try_inverse().unwrap();
        assert!((&out.main.v - &direct).amax() < 1e-9 * direct.amax());
    }

    #[test]
    fn unit_error_without_examples() {
        for dist in [DegreeDistribution::poisson(3.0).unwrap(), DegreeDistribution::regular(3)] {
            let solver = LocalSolver::<f64>::new(&dist, &params(2.0, 4), 0.1, 0.0).unwrap();
            let sol = solver.run(&settings(), 5).unwrap();
            assert!((sol.estimate.epsilon - 1.0).abs() < 1e-12);
            for pair in &sol.population.members {
                assert_eq!(pair.aux, pair.main.v);
                assert!(pair.aux.row(0).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn isolated_only_ensemble_is_exact() {
        let solver = LocalSolver::<f64>::new(&DegreeDistribution::regular(0), &params(2.0, 10), 0.1, 1.0).unwrap();
        let est = solver.run(&settings(), 1).unwrap().estimate;
        assert!((est.epsilon - 0.4125034088017899).abs() < 1e-12);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn examples_split_pairs() {
        let dist = DegreeDistribution::poisson(3.0).unwrap();
        let solver = LocalSolver::<f64>::new(&dist, &params(2.0, 4), 0.1, 1.0).unwrap();
        let sol = solver.run(&settings(), 6).unwrap();
        let mut diffs: Vec<f64> =
            sol.population.members.iter().map(|p| (p.main.v[(1, 1)] - p.aux[(1, 1)]).abs()).collect();
        diffs.sort_by(f64::total_cmp);
        assert!(diffs[diffs.len() / 2] > 0.0);
        for pair in &sol.population.members {
            assert!(pair.aux.column(0).iter().all(|&x| x == 0.0));
        }
        let mut rng = TaskRng::seed_from_u64(1);
        assert!(solver.sample_prior_variances(&sol.population, 500, &mut rng).iter().all(|&v| v > 0.0));
        let again = solver.run(&settings(), 6).unwrap();
        assert_eq!(sol.estimate, again.estimate);
    }
    #[test]
    fn disjoint_edges_are_exact() {
        let dist = DegreeDistribution::regular(1);
        let p = params(3.0, 2);
        for nu in [0.1, 1.0, 5.0] {
            let want = crate::exact_gp::disjoint_edges_bayes_error(&p, &crate::exact_gp::NoiseModel::new(0.1).unwrap(), nu).unwrap();
            let est = LocalSolver::<f64>::new(&dist, &p, 0.1, nu).unwrap().run(&settings(), 9).unwrap().estimate;
            // Every message is a leaf, so averaging over the neighbour's
            // example count leaves no sampling noise.
            assert!((est.epsilon - want).abs() < 1e-12 * want, "ν={nu}: {} vs {want}", est.epsilon);
            assert!(est.stderr < 1e-12 * want, "ν={nu}: stderr {}", est.stderr);
        }
    }
}
