//! Fixed-width histograms of population statistics.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub quantity: String,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    /// Bins `values` into `bins` equal-width bins over `[lo, hi]`; values
    /// outside the range are clamped into the end bins.
    pub fn from_values(quantity: &str, values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let bins = bins.max(1);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &x in values {
            let k = ((x - lo) / width).floor();
            let k = if k.is_nan() { 0 } else { (k.max(0.0) as usize).min(bins - 1) };
            counts[k] += 1;
        }
        Self { quantity: quantity.to_string(), lo, hi, counts, total: values.len() as u64 }
    }

    /// Like [`Histogram::from_values`] with the range `[min(0, min x), max x]`.
    pub fn auto(quantity: &str, values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(0.0f64, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::from_values(quantity, values, bins, lo, if hi.is_finite() { hi } else { 1.0 })
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.lo + k as f64 * w, self.lo + (k + 1) as f64 * w)
    }

    /// Probability density per bin (integrates to one).
    pub fn densities(&self) -> Vec<f64> {
        let norm = self.total.max(1) as f64 * self.bin_width();
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }

    /// Fraction of samples in bins lying entirely within `[lo, hi]`.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        let inside: u64 = (0..self.counts.len())
            .filter(|&k| {
                let (a, b) = self.bin_edges(k);
                a >= lo - 1e-12 && b <= hi + 1e-12
            })
            .map(|k| self.counts[k])
            .sum();
        inside as f64 / self.total.max(1) as f64
    }

    /// Number of isolated modes: maximal runs of bins holding at least
    /// `min_count` samples, separated by bins with fewer.
    pub fn isolated_modes(&self, min_count: u64) -> usize {
        let mut modes = 0;
        let mut inside = false;
        for &c in &self.counts {
            let occupied = c >= min_count;
            if occupied && !inside {
                modes += 1;
            }
            inside = occupied;
        }
        modes
    }

    /// Index of the most populated bin.
    pub fn peak_bin(&self) -> usize {
        (0..self.counts.len()).max_by_key(|&k| (self.counts[k], std::cmp::Reverse(k))).unwrap_or(0)
    }
}
