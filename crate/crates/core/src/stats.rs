//! Small statistics helpers shared by the simulator and the solvers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout. Every independent task gets its own instance
/// derived from the run seed with [`task_rng`].
pub type TaskRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a seed for a task from a base seed and a path of task labels.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix64(base), |acc, &l| mix64(acc ^ mix64(l)))
}

pub fn task_rng(base: u64, labels: &[u64]) -> TaskRng {
    TaskRng::seed_from_u64(derive_seed(base, labels))
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Largest example count kept in exact Poisson averages for mean `nu`.
/// The neglected tail mass is far below 1e-12 for every `nu`.
pub fn poisson_cutoff(nu: f64) -> usize {
    (nu + 10.0 * nu.sqrt() + 30.0).ceil() as usize
}

/// Poisson probabilities `P(k; nu)` for `k = 0..=poisson_cutoff(nu)`,
/// computed in log space so large means do not underflow.
pub fn poisson_weights(nu: f64) -> Vec<f64> {
    assert!(nu >= 0.0 && nu.is_finite(), "Poisson mean must be finite and nonnegative");
    if nu == 0.0 {
        return vec![1.0];
    }
    let kmax = poisson_cutoff(nu);
    let ln_nu = nu.ln();
    let mut ln_fact = 0.0;
    (0..=kmax)
        .map(|k| {
            if k > 0 {
                ln_fact += (k as f64).ln();
            }
            (k as f64 * ln_nu - nu - ln_fact).exp()
        })
        .collect()
}

/// `(k, P(k))` pairs of Poisson(nu) with `P(k)` above `1e-20`; dropped
/// terms are far below roundoff of any expectation of a bounded quantity.
pub fn poisson_support(nu: f64) -> Vec<(usize, f64)> {
    poisson_weights(nu).into_iter().enumerate().filter(|&(_, w)| w > 1e-20).collect()
}

/// `E[f(k)]` for `k ~ Poisson(nu)` by the truncated exact sum.
pub fn poisson_expectation(weights: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    weights.iter().enumerate().map(|(k, w)| w * f(k)).sum()
}

/// Draws from Poisson(nu); `nu = 0` always yields zero.
pub fn sample_poisson<R: rand::Rng + ?Sized>(nu: f64, rng: &mut R) -> usize {
    use rand_distr::{Distribution, Poisson};
    if nu <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(nu).expect("positive finite Poisson mean");
    dist.sample(rng) as usize
}

/// `count` log-spaced values from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (lo, hi) = (min.log10(), max.log10());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        min
                    } else if i == count - 1 {
                        max
                    } else {
                        10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    }
                })
                .collect()
        }
    }
}
