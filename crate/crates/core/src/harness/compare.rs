//! Relative deviations between two learning-curve files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::curve_csv::{self, CurveRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub sigma2: f64,
    pub nu: f64,
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    /// `|ε_a − ε_b| / ε_b`.
    pub relative: f64,
    pub combined_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Comparison {
    pub deviations: Vec<Deviation>,
}

fn key(sigma2: f64, nu: f64) -> (String, String) {
    (format!("{sigma2:.12e}"), format!("{nu:.12e}"))
}

fn index(rows: &[CurveRow], label: &str) -> Result<BTreeMap<(String, String), CurveRow>> {
    let mut map = BTreeMap::new();
    for row in rows {
        if map.insert(key(row.sigma2, row.nu), row.clone()).is_some() {
            return Err(Error::Config(format!(
                "{label} has more than one row for σ²={}, ν={}",
                row.sigma2, row.nu
            )));
        }
    }
    Ok(map)
}

/// Matches rows by `(σ², ν)`. Every key must be present in both inputs.
pub fn compare_rows(a: &[CurveRow], b: &[CurveRow]) -> Result<Comparison> {
    let ia = index(a, "first input")?;
    let ib = index(b, "second input")?;
    let only = |x: &BTreeMap<_, _>, y: &BTreeMap<_, CurveRow>| -> Vec<String> {
        x.keys()
            .filter(|k| !y.contains_key(*k))
            .map(|(s, n): &(String, String)| format!("(σ²={s}, ν={n})"))
            .collect()
    };
    let (missing_b, missing_a) = (only(&ia, &ib), only(&ib, &ia));
    if !missing_a.is_empty() || !missing_b.is_empty() {
        let mut msg = String::from("inputs do not share (σ², ν) keys");
        if !missing_b.is_empty() {
            msg += &format!("; missing from second: {}", missing_b.join(", "));
        }
        if !missing_a.is_empty() {
            msg += &format!("; missing from first: {}", missing_a.join(", "));
        }
        return Err(Error::Config(msg));
    }
    let mut deviations: Vec<Deviation> = ia
        .values()
        .map(|ra| {
            let rb = &ib[&key(ra.sigma2, ra.nu)];
            let diff = (ra.epsilon - rb.epsilon).abs();
            Deviation {
                sigma2: ra.sigma2,
                nu: ra.nu,
                epsilon_a: ra.epsilon,
                epsilon_b: rb.epsilon,
                relative: if diff == 0.0 { 0.0 } else { diff / rb.epsilon.abs() },
                combined_stderr: ra.stderr.hypot(rb.stderr),
            }
        })
        .collect();
    deviations.sort_by(|x, y| x.sigma2.total_cmp(&y.sigma2).reverse().then(x.nu.total_cmp(&y.nu)));
    Ok(Comparison { deviations })
}

pub fn compare_outputs(a: &Path, b: &Path) -> Result<Comparison> {
    compare_rows(&curve_csv::load(a)?, &curve_csv::load(b)?)
}

impl Comparison {
    pub fn len(&self) -> usize {
        self.deviations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deviations.is_empty()
    }

    /// Restriction to one noise level.
    pub fn for_sigma2(&self, sigma2: f64) -> Comparison {
        let k = format!("{sigma2:.12e}");
        Comparison {
            deviations: self.deviations.iter().filter(|d| format!("{:.12e}", d.sigma2) == k).cloned().collect(),
        }
    }

    /// Restriction to `ν ∈ [lo, hi]`.
    pub fn for_nu_range(&self, lo: f64, hi: f64) -> Comparison {
        Comparison { deviations: self.deviations.iter().filter(|d| d.nu >= lo && d.nu <= hi).cloned().collect() }
    }

    pub fn max_relative(&self) -> f64 {
        self.deviations.iter().map(|d| d.relative).fold(0.0, f64::max)
    }

    pub fn median_relative(&self) -> f64 {
        let mut r: Vec<f64> = self.deviations.iter().map(|d| d.relative).collect();
        if r.is_empty() {
            return 0.0;
        }
        r.sort_by(f64::total_cmp);
        let n = r.len();
        if n % 2 == 1 {
            r[n / 2]
        } else {
            0.5 * (r[n / 2 - 1] + r[n / 2])
        }
    }

    /// The tolerance gate: every relative deviation at most `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative() <= tol
    }

    pub fn sigma2_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for d in &self.deviations {
            if !out.iter().any(|s| format!("{s:.12e}") == format!("{:.12e}", d.sigma2)) {
                out.push(d.sigma2);
            }
        }
        out
    }

    /// Aligned text table followed by per-σ² and overall summaries.
    pub fn write_report<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{:>12} {:>12} {:>14} {:>14} {:>10} {:>12}", "sigma2", "nu", "epsilon_a", "epsilon_b", "rel_dev", "comb_stderr")?;
        for d in &self.deviations {
            writeln!(
                out,
                "{:>12.4e} {:>12.4e} {:>14.6e} {:>14.6e} {:>10.4} {:>12.4e}",
                d.sigma2, d.nu, d.epsilon_a, d.epsilon_b, d.relative, d.combined_stderr
            )?;
        }
        for s in self.sigma2_values() {
            let sub = self.for_sigma2(s);
            writeln!(out, "sigma2={s:e}: max rel dev {:.4}, median {:.4}", sub.max_relative(), sub.median_relative())?;
        }
        writeln!(out, "overall: max rel dev {:.4}, median {:.4}, {} keys", self.max_relative(), self.median_relative(), self.len())
    }
}
