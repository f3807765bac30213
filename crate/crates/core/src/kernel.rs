//! Random-walk kernels on graphs.
//!
//! The raw kernel is `C₀ = (I − L/a)^p` with `L` the normalized Laplacian.
//! Writing `Â = D^{-1/2} A D^{-1/2}`, the walk matrix is
//! `B = I − L/a = (1 − 1/a) I + Â/a`, so `C₀ = Σ_q c_q Â^q` with the
//! binomial walk coefficients `c_q` of [`walk_coefficients`]. Isolated
//! vertices have `L_ii = 1` and therefore raw prior variance `c₀`.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensembles::Graph;
use crate::error::{Error, NumericalError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Unnormalized,
    Global,
    Local,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Unnormalized => "unnormalized",
            Normalization::Global => "global",
            Normalization::Local => "local",
        })
    }
}

/// Random-walk kernel hyperparameters: `p` lazy-walk steps, each moving
/// with probability `1/a`. `p/a` acts as a lengthscale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub a: f64,
    pub p: usize,
    pub normalization: Normalization,
}

impl KernelParams {
    pub fn new(a: f64, p: usize, normalization: Normalization) -> Result<Self> {
        let params = Self { a, p, normalization };
        params.validate()?;
        Ok(params)
    }

    /// Checks `a > 0`, `p ≥ 1`, and the positive-semidefiniteness
    /// condition `a ≥ 2 or p even`.
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::Config(format!("kernel parameter a must be positive, got {}", self.a)));
        }
        if self.p == 0 {
            return Err(Error::Config("kernel parameter p must be at least 1".into()));
        }
        if self.a < 2.0 && self.p % 2 == 1 {
            return Err(Error::Config(format!(
                "kernel with a={} < 2 and odd p={} is not positive semidefinite",
                self.a, self.p
            )));
        }
        Ok(())
    }

    pub fn with_normalization(self, normalization: Normalization) -> Self {
        Self { normalization, ..self }
    }
}

/// Binomial walk coefficients `c_q = C(p,q) a^{-q} (1 − 1/a)^{p−q}`,
/// `q = 0..=p`.
pub fn walk_coefficients(p: usize, a: f64) -> Vec<f64> {
    let (step, stay) = (1.0 / a, 1.0 - 1.0 / a);
    let mut binom = 1.0;
    (0..=p)
        .map(|q| {
            if q > 0 {
                binom = binom * (p + 1 - q) as f64 / q as f64;
            }
            binom * step.powi(q as i32) * stay.powi((p - q) as i32)
        })
        .collect()
}

/// Dense kernel matrix with its per-vertex normalizers `κ_i`, so that
/// `C_ij = C₀_ij / √(κ_i κ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T: Real> {
    matrix: DMatrix<T>,
    normalizers: Vec<f64>,
    params: KernelParams,
}

impl<T: Real> KernelMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn vertex_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn normalization(&self) -> Normalization {
        self.params.normalization
    }

    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    /// The global normalizer `κ`; `None` unless globally normalized.
    pub fn kappa(&self) -> Option<f64> {
        match self.params.normalization {
            Normalization::Global => self.normalizers.first().copied(),
            _ => None,
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        self.matrix.diagonal().iter().copied().collect()
    }

    pub fn mean_diagonal(&self) -> f64 {
        let n = self.vertex_count();
        self.matrix.diagonal().iter().map(|x| x.as_f64()).sum::<f64>() / n as f64
    }

    /// Text dump: header `V a p mode`, then one whitespace-separated row per
    /// line.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let v = self.vertex_count();
        writeln!(out, "{} {} {} {}", v, self.params.a, self.params.p, self.params.normalization)?;
        for i in 0..v {
            let row: Vec<String> =
                (0..v).map(|j| format!("{:.17e}", self.matrix[(i, j)].as_f64())).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_text(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

/// `L = I − D^{-1/2} A D^{-1/2}`, with unit diagonal on isolated vertices.
pub fn normalized_laplacian<T: Real>(g: &Graph) -> DMatrix<T> {
    let v = g.vertex_count();
    let mut l = DMatrix::<T>::identity(v, v);
    for (i, j) in g.edges() {
        let w = T::of(-1.0 / ((g.degree(i) * g.degree(j)) as f64).sqrt());
        l[(i, j)] = w;
        l[(j, i)] = w;
    }
    l
}

/// Applies `B = (1 − 1/a) I + Â/a` to every column of `x` using the
/// adjacency lists, in O(E·cols).
fn apply_walk<T: Real>(g: &Graph, a: f64, x: &DMatrix<T>) -> DMatrix<T> {
    let stay = T::of(1.0 - 1.0 / a);
    let scale: Vec<f64> =
        g.degrees().iter().map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 }).collect();
    let weights: Vec<Vec<(usize, T)>> = (0..g.vertex_count())
        .map(|i| g.neighbors(i).iter().map(|&j| (j, T::of(scale[i] * scale[j] / a))).collect())
        .collect();
    let mut out = x * stay;
    for (src, mut dst) in x.column_iter().zip(out.column_iter_mut()) {
        for (i, row) in weights.iter().enumerate() {
            let mut acc = T::zero();
            for &(j, w) in row {
                acc += w * src[j];
            }
            dst[i] += acc;
        }
    }
    out
}

/// `B^k` as a dense matrix.
fn walk_power<T: Real>(g: &Graph, a: f64, k: usize) -> DMatrix<T> {
    let v = g.vertex_count();
    (0..k).fold(DMatrix::<T>::identity(v, v), |w, _| apply_walk(g, a, &w))
}

fn ensure_finite<T: Real>(m: &DMatrix<T>) -> Result<()> {
    if m.iter().all(|x| x.finite()) {
        Ok(())
    } else {
        Err(NumericalError::NonFinite.into())
    }
}

/// Unnormalized kernel `C₀ = (I − L/a)^p`.
///
/// With `W = B^{⌊p/2⌋}` (symmetric), `C₀ = W W` for even `p` and `W B W`
/// for odd `p`; the result is symmetric by construction.
pub fn raw_kernel<T: Real>(g: &Graph, params: &KernelParams) -> Result<KernelMatrix<T>> {
    params.validate()?;
    let w = walk_power::<T>(g, params.a, params.p / 2);
    let mut c0 = if params.p % 2 == 0 { &w * &w } else { &w * apply_walk(g, params.a, &w) };
    symmetrize(&mut c0);
    ensure_finite(&c0)?;
    Ok(KernelMatrix {
        matrix: c0,
        normalizers: vec![1.0; g.vertex_count()],
        params: params.with_normalization(Normalization::Unnormalized),
    })
}

/// Diagonal of `C₀` without forming the full product: `C₀_ii = ‖W e_i‖²`
/// (even `p`) or `(W e_i)ᵀ B (W e_i)` (odd `p`).
pub fn raw_kernel_diagonal(g: &Graph, params: &KernelParams) -> Result<Vec<f64>> {
    params.validate()?;
    let w = walk_power::<f64>(g, params.a, params.p / 2);
    let diag: Vec<f64> = if params.p % 2 == 0 {
        w.column_iter().map(|c| c.norm_squared()).collect()
    } else {
        let bw = apply_walk(g, params.a, &w);
        w.column_iter().zip(bw.column_iter()).map(|(c, bc)| c.dot(&bc)).collect()
    };
    if diag.iter().all(|x| x.is_finite()) {
        Ok(diag)
    } else {
        Err(NumericalError::NonFinite.into())
    }
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::of(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

/// Rescales a kernel so its average (global) or every (local) prior
/// variance is one. `Unnormalized` returns the input unchanged.
pub fn normalize_kernel<T: Real>(
    kernel: &KernelMatrix<T>,
    mode: Normalization,
) -> Result<KernelMatrix<T>> {
    let v = kernel.vertex_count();
    let c = &kernel.matrix;
    let (matrix, factors) = match mode {
        Normalization::Unnormalized => return Ok(kernel.clone()),
        Normalization::Global => {
            let kappa = kernel.mean_diagonal();
            if !(kappa > 0.0 && kappa.is_finite()) {
                return Err(Error::Normalization(format!("mean prior variance is {kappa}")));
            }
            (c / T::of(kappa), vec![kappa; v])
        }
        Normalization::Local => {
            let diag: Vec<f64> = c.diagonal().iter().map(|x| x.as_f64()).collect();
            if let Some((i, d)) = diag.iter().enumerate().find(|(_, &d)| !(d > 0.0 && d.is_finite())) {
                return Err(Error::Normalization(format!(
                    "local normalization needs positive prior variances; C₀[{i},{i}] = {d}"
                )));
            }
            let inv_sqrt: Vec<T> = diag.iter().map(|d| T::of(1.0 / d.sqrt())).collect();
            let mut m = DMatrix::from_fn(v, v, |i, j| {
                let (a, b) = (i.min(j), i.max(j));
                c[(a, b)] * inv_sqrt[a] * inv_sqrt[b]
            });
            for i in 0..v {
                m[(i, i)] = T::one();
            }
            (m, diag)
        }
    };
    let normalizers = kernel.normalizers.iter().zip(&factors).map(|(a, b)| a * b).collect();
    Ok(KernelMatrix { matrix, normalizers, params: kernel.params.with_normalization(mode) })
}

/// Raw kernel followed by the normalization requested in `params`.
pub fn build_kernel<T: Real>(g: &Graph, params: &KernelParams) -> Result<KernelMatrix<T>> {
    normalize_kernel(&raw_kernel(g, params)?, params.normalization)
}
