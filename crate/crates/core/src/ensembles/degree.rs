//! Degree distributions for the random-graph ensembles.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::quadrature::adaptive_simpson;
use crate::error::{Error, Result};
use crate::stats::sample_poisson;

/// Default neglected tail mass when truncating the degree support.
pub const DEFAULT_TAIL_MASS: f64 = 1e-8;

/// Pareto mass neglected above the upper integration limit of the
/// mixed-Poisson quadrature.
const PARETO_TAIL_MASS: f64 = 1e-10;

/// Hard ceiling on the truncated support, to fail loudly on ensembles whose
/// tail is too heavy to tabulate.
const MAX_SUPPORT: usize = 2_000_000;

/// The family a degree distribution belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegreeKind {
    /// Every vertex has degree `degree`.
    Regular { degree: usize },
    /// Erdős–Rényi limit: Poisson degrees.
    Poisson { mean: f64 },
    /// Poisson degrees whose mean is itself Pareto distributed,
    /// `p(λ) = α λ_min^α / λ^(α+1)` for `λ ≥ λ_min`.
    ParetoMixedPoisson { alpha: f64, lambda_min: f64 },
    /// An explicit table of `(degree, probability)`; renormalized.
    Empirical { table: Vec<(usize, f64)> },
}

impl fmt::Display for DegreeKind {
    /// Compact label used in CSV output; contains no commas.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegreeKind::Regular { degree } => write!(f, "regular({degree})"),
            DegreeKind::Poisson { mean } => write!(f, "poisson({mean})"),
            DegreeKind::ParetoMixedPoisson { alpha, lambda_min } => {
                write!(f, "pareto_mixed_poisson({alpha};{lambda_min})")
            }
            DegreeKind::Empirical { table } => {
                write!(f, "empirical(")?;
                for (i, (d, p)) in table.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{d}:{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A degree distribution together with its truncated, renormalized table.
///
/// The table is what the cavity solvers sample from; graph sampling draws
/// from the untruncated law (see [`DegreeDistribution::sample_degree`]).
#[derive(Debug, Clone)]
pub struct DegreeDistribution {
    kind: DegreeKind,
    tail_mass: f64,
    table: Vec<f64>,
    mean_degree: f64,
    natural: WeightedIndex<f64>,
    size_biased: Option<WeightedIndex<f64>>,
}

impl DegreeDistribution {
    pub fn new(kind: DegreeKind) -> Result<Self> {
        Self::with_tail_mass(kind, DEFAULT_TAIL_MASS)
    }

    pub fn regular(degree: usize) -> Self {
        Self::new(DegreeKind::Regular { degree }).expect("regular distributions are always valid")
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        Self::new(DegreeKind::Poisson { mean })
    }

    pub fn pareto_mixed_poisson(alpha: f64, lambda_min: f64) -> Result<Self> {
        Self::new(DegreeKind::ParetoMixedPoisson { alpha, lambda_min })
    }

    pub fn empirical(table: Vec<(usize, f64)>) -> Result<Self> {
        Self::new(DegreeKind::Empirical { table })
    }

    /// Builds the distribution, truncating the support at the smallest
    /// degree whose cumulative mass reaches `1 - tail_mass`.
    pub fn with_tail_mass(kind: DegreeKind, tail_mass: f64) -> Result<Self> {
        if !(tail_mass > 0.0 && tail_mass < 1e-2) {
            return Err(Error::Config(format!(
                "truncation tail mass must lie in (0, 0.01), got {tail_mass}"
            )));
        }
        validate(&kind)?;
        let mut table = Vec::new();
        match &kind {
            DegreeKind::Regular { degree } => {
                table.resize(degree + 1, 0.0);
                table[*degree] = 1.0;
            }
            DegreeKind::Empirical { table: entries } => {
                let dmax = entries.iter().map(|&(d, _)| d).max().unwrap_or(0);
                table.resize(dmax + 1, 0.0);
                let total: f64 = entries.iter().map(|&(_, p)| p).sum();
                for &(d, p) in entries {
                    table[d] += p / total;
                }
            }
            _ => {
                let mut cumulative = 0.0;
                let mut d = 0;
                while cumulative < 1.0 - tail_mass {
                    if d >= MAX_SUPPORT {
                        return Err(Error::Config(format!(
                            "degree distribution {kind} needs more than {MAX_SUPPORT} degrees \
                             to cover 1-{tail_mass:e} of its mass"
                        )));
                    }
                    let p = analytic_pmf(&kind, d);
                    table.push(p);
                    cumulative += p;
                    d += 1;
                }
                if cumulative < 1.0 - 10.0 * tail_mass || cumulative > 1.0 + 1e-9 {
                    return Err(Error::Config(format!(
                        "pmf of {kind} sums to {cumulative} before renormalization"
                    )));
                }
                table.iter_mut().for_each(|p| *p /= cumulative);
            }
        }
        let mean_degree: f64 = table.iter().enumerate().map(|(d, p)| d as f64 * p).sum();
        if !mean_degree.is_finite() {
            return Err(Error::Config(format!("mean degree of {kind} is not finite")));
        }
        let natural = WeightedIndex::new(&table)
            .map_err(|e| Error::Config(format!("degree table of {kind}: {e}")))?;
        let size_biased = if mean_degree > 0.0 {
            let weights: Vec<f64> =
                table.iter().enumerate().map(|(d, p)| d as f64 * p / mean_degree).collect();
            Some(
                WeightedIndex::new(&weights)
                    .map_err(|e| Error::Config(format!("size-biased table of {kind}: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { kind, tail_mass, table, mean_degree, natural, size_biased })
    }

    pub fn kind(&self) -> &DegreeKind {
        &self.kind
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Mean degree of the truncated table.
    pub fn mean_degree(&self) -> f64 {
        self.mean_degree
    }

    /// Largest degree in the truncated support.
    pub fn max_degree(&self) -> usize {
        self.table.len() - 1
    }

    /// Truncated, renormalized probabilities indexed by degree.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Probability of degree `d` under the truncated table (zero beyond it).
    pub fn table_pmf(&self, d: usize) -> f64 {
        self.table.get(d).copied().unwrap_or(0.0)
    }

    /// Size-biased probability `p(d) d / d̄`.
    pub fn size_biased_pmf(&self, d: usize) -> f64 {
        if self.mean_degree > 0.0 {
            self.table_pmf(d) * d as f64 / self.mean_degree
        } else {
            0.0
        }
    }

    /// Untruncated probability of degree `d`. Negative degrees are a domain
    /// error.
    pub fn pmf(&self, d: i64) -> Result<f64> {
        if d < 0 {
            return Err(Error::Domain(format!("degree must be nonnegative, got {d}")));
        }
        let d = d as usize;
        Ok(match &self.kind {
            DegreeKind::Regular { .. } | DegreeKind::Empirical { .. } => self.table_pmf(d),
            kind => analytic_pmf(kind, d),
        })
    }

    /// Draws a degree from the truncated table.
    pub fn sample_table<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.natural.sample(rng)
    }

    /// Draws a degree with probability `p(d) d / d̄`; never returns 0.
    pub fn size_biased_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        match &self.size_biased {
            Some(index) => Ok(index.sample(rng)),
            None => Err(Error::Config(format!(
                "size-biased sampling needs positive mean degree; {} has all mass at d=0",
                self.kind
            ))),
        }
    }

    /// Draws a degree from the untruncated law, realizing the mixed-Poisson
    /// case per vertex (`λ ~ Pareto`, then `d ~ Poisson(λ)`).
    pub fn sample_degree<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.kind {
            DegreeKind::Regular { degree } => *degree,
            DegreeKind::Poisson { mean } => sample_poisson(*mean, rng),
            DegreeKind::ParetoMixedPoisson { alpha, lambda_min } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let lambda = lambda_min * u.powf(-1.0 / alpha);
                sample_poisson(lambda, rng)
            }
            DegreeKind::Empirical { .. } => self.natural.sample(rng),
        }
    }

    /// `true` when the support (of the untruncated law) contains only odd
    /// degrees, so parity of a degree sum can never be repaired.
    fn odd_support_only(&self) -> bool {
        match &self.kind {
            DegreeKind::Regular { degree } => degree % 2 == 1,
            DegreeKind::Empirical { .. } => {
                self.table.iter().enumerate().all(|(d, &p)| p == 0.0 || d % 2 == 1)
            }
            _ => false,
        }
    }

    /// `true` when every degree in the support is even.
    fn even_support_only(&self) -> bool {
        match &self.kind {
            DegreeKind::Regular { degree } => degree % 2 == 0,
            DegreeKind::Empirical { .. } => {
                self.table.iter().enumerate().all(|(d, &p)| p == 0.0 || d % 2 == 0)
            }
            _ => false,
        }
    }

    /// I.i.d. degrees for `vertex_count` vertices with an even sum. An odd
    /// sum is repaired by redrawing one uniformly chosen entry until the sum
    /// becomes even.
    pub fn sample_degree_sequence<R: Rng + ?Sized>(
        &self,
        vertex_count: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if vertex_count == 0 {
            return Err(Error::Domain("a graph needs at least one vertex".into()));
        }
        if self.odd_support_only() && vertex_count % 2 == 1 {
            return Err(Error::Config(format!(
                "{} has only odd degrees; no even degree sum exists for V={vertex_count}",
                self.kind
            )));
        }
        let mut seq: Vec<usize> = (0..vertex_count).map(|_| self.sample_degree(rng)).collect();
        if self.even_support_only() {
            return Ok(seq);
        }
        let mut sum: usize = seq.iter().sum();
        while sum % 2 == 1 {
            let i = rng.random_range(0..vertex_count);
            let old = seq[i];
            loop {
                let new = self.sample_degree(rng);
                if (new + old) % 2 == 1 {
                    sum = sum - old + new;
                    seq[i] = new;
                    break;
                }
            }
        }
        Ok(seq)
    }
}

fn validate(kind: &DegreeKind) -> Result<()> {
    let bad = |msg: String| Err(Error::Config(msg));
    match kind {
        DegreeKind::Regular { .. } => Ok(()),
        DegreeKind::Poisson { mean } => {
            if !(mean.is_finite() && *mean >= 0.0) {
                return bad(format!("Poisson mean must be finite and nonnegative, got {mean}"));
            }
            Ok(())
        }
        DegreeKind::ParetoMixedPoisson { alpha, lambda_min } => {
            if !(alpha.is_finite() && *alpha > 1.0) {
                return bad(format!("Pareto exponent must exceed 1 for a finite mean, got {alpha}"));
            }
            if !(lambda_min.is_finite() && *lambda_min > 0.0) {
                return bad(format!("Pareto lower cutoff must be positive, got {lambda_min}"));
            }
            Ok(())
        }
        DegreeKind::Empirical { table } => {
            if table.is_empty() {
                return bad("empirical degree table is empty".into());
            }
            if table.iter().any(|&(_, p)| !(p.is_finite() && p >= 0.0)) {
                return bad("empirical probabilities must be finite and nonnegative".into());
            }
            if table.iter().map(|&(_, p)| p).sum::<f64>() <= 0.0 {
                return bad("empirical probabilities sum to zero".into());
            }
            Ok(())
        }
    }
}

fn ln_factorial(d: usize) -> f64 {
    (2..=d).map(|k| (k as f64).ln()).sum()
}

/// Analytic pmf for the parametric families.
fn analytic_pmf(kind: &DegreeKind, d: usize) -> f64 {
    match *kind {
        DegreeKind::Poisson { mean } => {
            if mean == 0.0 {
                return if d == 0 { 1.0 } else { 0.0 };
            }
            (d as f64 * mean.ln() - mean - ln_factorial(d)).exp()
        }
        DegreeKind::ParetoMixedPoisson { alpha, lambda_min } => {
            pareto_mixed_pmf(alpha, lambda_min, d)
        }
        DegreeKind::Regular { degree } => f64::from(u8::from(d == degree)),
        DegreeKind::Empirical { .. } => unreachable!("empirical tables are not analytic"),
    }
}

/// `p(d) = ∫ dλ p(λ) λ^d e^{-λ} / d!` by adaptive quadrature in `t = ln λ`.
fn pareto_mixed_pmf(alpha: f64, lambda_min: f64, d: usize) -> f64 {
    let upper = lambda_min * PARETO_TAIL_MASS.powf(-1.0 / alpha);
    let log_norm = alpha.ln() + alpha * lambda_min.ln() - ln_factorial(d);
    let df = d as f64;
    // With λ = e^t the Jacobian absorbs one power of λ.
    let integrand = |t: f64| (log_norm + (df - alpha) * t - t.exp()).exp();
    let (lo, hi) = (lambda_min.ln(), upper.ln());
    let peak = (df - alpha).max(lambda_min).ln();
    // Tolerance relative to the integrand's peak scale. The exponent is a
    // difference of terms of size ~d·ln d, so the integrand itself carries a
    // relative error of a few 1e-13 at large d; 1e-10 is comfortably above.
    let width = 1.0 / (df - alpha).max(1.0).sqrt();
    let scale = integrand(peak.clamp(lo, hi)) * width.min(hi - lo);
    let breaks = [peak - 4.0 * width, peak, peak + 4.0 * width];
    adaptive_simpson(integrand, lo, hi, &breaks, 32, 1e-10 * scale.max(f64::MIN_POSITIVE))
}
