//! Matrix machinery shared by both cavity solvers.
//!
//! A cavity message is the `(2p+1)×(2p+1)` covariance of the fields
//! `(h⁰, h¹…h^p, ĥ¹…ĥ^p)` at a vertex with one neighbour removed. The
//! natural interaction matrices are complex (entries `−i·d` and `+i`);
//! conjugating with `T = diag(1,…,1,i,…,i)` (plain transpose, `T M T`)
//! makes them real without changing any `(0,0)` entry of an inverse, so
//! the hot loop uses real arithmetic only.
//!
//! Index layout: `0 ↦ h⁰`, `q ↦ h^q`, `p+q ↦ ĥ^q` for `q = 1..=p`.

use nalgebra::{DMatrix, DVector};

use crate::error::NumericalError;
use crate::kernel::walk_coefficients;
use crate::scalar::Real;

/// A cavity message in the real representation.
pub type CavityMessage<T> = DMatrix<T>;

/// A message `V = R(M, γ r)` that remembers how it depends on the example
/// count `γ` of the vertex emitting it: with `W = M⁻¹` and `w = W e₀`,
/// `V(γ') = W − c(γ') w wᵀ`, `c(γ') = 1/(γ' r + w₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedMessage<T: Real> {
    pub v: CavityMessage<T>,
    pub w: DVector<T>,
    /// Shift `s` per example.
    pub rate: f64,
    pub gamma: usize,
}

impl<T: Real> PinnedMessage<T> {
    /// `c(γ')`.
    pub fn coefficient(&self, gamma: usize) -> f64 {
        1.0 / (gamma as f64 * self.rate + self.w[0].as_f64())
    }
}

/// The λ- and κ-independent part of `O` together with `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrices<T: Real> {
    pub o_base: DMatrix<T>,
    pub x: DMatrix<T>,
}

/// `O_base(d)` and `X` for walk length `p`, step parameter `a`, degree `d`.
pub fn build_interaction_matrices<T: Real>(p: usize, a: f64, d: usize) -> InteractionMatrices<T> {
    let geometry = CavityGeometry::<T>::new(p, a);
    InteractionMatrices { o_base: geometry.o_base(d), x: geometry.x_matrix() }
}

/// Precomputed structure for a fixed `(p, a)`.
///
/// `X` is minus a partial permutation exchanging `q−1 ↔ p+q`, so
/// `X V X` is an index permutation of `V` with row and column `p` zero;
/// it is applied as such rather than by matrix products.
#[derive(Debug, Clone)]
pub struct CavityGeometry<T: Real> {
    p: usize,
    coefficients: Vec<f64>,
    o_unit: DMatrix<T>,
    partner: Vec<Option<usize>>,
}

impl<T: Real> CavityGeometry<T> {
    pub fn new(p: usize, a: f64) -> Self {
        assert!(p >= 1, "walk length must be positive");
        let n = 2 * p + 1;
        let c = walk_coefficients(p, a);
        let mut o_unit = DMatrix::<T>::zeros(n, n);
        o_unit[(0, 0)] = T::of(c[0]);
        for q in 1..=p {
            let half = T::of(c[q] / 2.0);
            o_unit[(0, q)] = half;
            o_unit[(q, 0)] = half;
            o_unit[(q, p + q)] = T::one();
            o_unit[(p + q, q)] = T::one();
        }
        let partner = (0..n)
            .map(|j| match j {
                j if j < p => Some(p + 1 + j),
                j if j > p => Some(j - p - 1),
                _ => None,
            })
            .collect();
        Self { p, coefficients: c, o_unit, partner }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        2 * self.p + 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Raw prior variance of an isolated vertex, `c₀`.
    pub fn isolated_prior_variance(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn o_base(&self, d: usize) -> DMatrix<T> {
        &self.o_unit * T::of_usize(d)
    }

    pub fn x_matrix(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut x = DMatrix::<T>::zeros(n, n);
        for (j, k) in self.partner.iter().enumerate() {
            if let Some(k) = *k {
                x[(j, k)] = -T::one();
            }
        }
        x
    }

    /// `X V X`.
    pub fn conjugate(&self, v: &DMatrix<T>) -> DMatrix<T> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| match (self.partner[i], self.partner[j]) {
            (Some(a), Some(b)) => v[(a, b)],
            _ => T::zero(),
        })
    }

    /// `X w`.
    pub fn conjugate_vector(&self, w: &DVector<T>) -> DVector<T> {
        DVector::from_fn(self.dim(), |i, _| match self.partner[i] {
            Some(a) => -w[a],
            None => T::zero(),
        })
    }

    /// `O_base(d) − X (Σ Vᵢ) X` given the summed incoming messages.
    pub fn precision(&self, d: usize, incoming_sum: &DMatrix<T>) -> DMatrix<T> {
        let n = self.dim();
        let scale = T::of_usize(d);
        DMatrix::from_fn(n, n, |i, j| {
            let coupling = match (self.partner[i], self.partner[j]) {
                (Some(a), Some(b)) => incoming_sum[(a, b)],
                _ => T::zero(),
            };
            self.o_unit[(i, j)] * scale - coupling
        })
    }

    /// Sum of messages, zero for an empty iterator.
    pub fn sum<'a, I>(&self, messages: I) -> DMatrix<T>
    where
        I: IntoIterator<Item = &'a DMatrix<T>>,
        T: 'a,
    {
        let n = self.dim();
        messages.into_iter().fold(DMatrix::<T>::zeros(n, n), |mut acc, m| {
            acc += m;
            acc
        })
    }
}

/// `(M⁻¹)₀₀` by an LU solve against `e₀`.
pub fn inverse_00<T: Real>(m: &DMatrix<T>) -> Result<T, NumericalError> {
    let n = m.nrows();
    let mut e0 = nalgebra::DVector::<T>::zeros(n);
    e0[0] = T::one();
    let x = m.clone().lu().solve(&e0).ok_or(NumericalError::Singular)?;
    if x[0].finite() {
        Ok(x[0])
    } else {
        Err(NumericalError::NonFinite)
    }
}

/// `(M + e₀e₀ᵀ/s)⁻¹` via the rank-one Woodbury identity,
/// `M⁻¹ − M⁻¹e₀ e₀ᵀM⁻¹ / (s + (M⁻¹)₀₀)`.
///
/// `s = 0` is the limit of an infinitely strong pin on `h⁰`: the result
/// then annihilates `e₀`, and its first row and column are set to exactly
/// zero. LU with partial pivoting is used throughout since `M` is
/// symmetric but indefinite.
pub fn rank_one_regularized_inverse<T: Real>(
    m: &DMatrix<T>,
    s: T,
) -> Result<DMatrix<T>, NumericalError> {
    inverse_with_column(m, s).map(|(out, _)| out)
}

/// `R(M, γ r)` together with its dependence on `γ`.
pub fn pinned_inverse<T: Real>(
    m: &DMatrix<T>,
    gamma: usize,
    rate: f64,
) -> Result<PinnedMessage<T>, NumericalError> {
    let (v, w) = inverse_with_column(m, T::of(gamma as f64 * rate))?;
    Ok(PinnedMessage { v, w, rate, gamma })
}

/// `R(M, s)` and `M⁻¹e₀`.
pub(crate) fn inverse_with_column<T: Real>(
    m: &DMatrix<T>,
    s: T,
) -> Result<(DMatrix<T>, DVector<T>), NumericalError> {
    let n = m.nrows();
    let inv = m.clone().lu().try_inverse().ok_or(NumericalError::Singular)?;
    let m00 = inv[(0, 0)];
    let denom = s + m00;
    let scale = s.abs().max(m00.abs());
    if !denom.finite() || denom.abs() <= T::default_epsilon() * T::of(16.0) * scale || denom == T::zero() {
        return Err(NumericalError::VanishingDenominator(denom.as_f64()));
    }
    let col = inv.column(0).clone_owned();
    let row = inv.row(0).clone_owned();
    let mut out = inv - (&col * row) / denom;
    let half = T::of(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (out[(i, j)] + out[(j, i)]) * half;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    if s == T::zero() {
        out.row_mut(0).fill(T::zero());
        out.column_mut(0).fill(T::zero());
    }
    if out.iter().all(|x| x.finite()) {
        Ok((out, col))
    } else {
        Err(NumericalError::NonFinite)
    }
}

/// `(P(γ)⁻¹)₀₀` for each `γ` in `support`, where `P(γ)` is the precision
/// `p` with its incoming message `msg` re-pinned at `γ`.
///
/// Re-pinning changes `−X V X` by `δ u uᵀ` with `u = X w` and
/// `δ = c(γ) − c(γ_msg)`, so one factorization of `p` serves every `γ`
/// through Sherman–Morrison.
pub fn inverse_00_over_examples<T: Real>(
    geometry: &CavityGeometry<T>,
    p: &DMatrix<T>,
    msg: &PinnedMessage<T>,
    support: &[(usize, f64)],
) -> Result<Vec<f64>, NumericalError> {
    let n = p.nrows();
    let lu = p.clone().lu();
    let mut e0 = DVector::<T>::zeros(n);
    e0[0] = T::one();
    let a = lu.solve(&e0).ok_or(NumericalError::Singular)?;
    let u = geometry.conjugate_vector(&msg.w);
    let b = lu.solve(&u).ok_or(NumericalError::Singular)?;
    let (a0, b0, ub) = (a[0].as_f64(), b[0].as_f64(), u.dot(&b).as_f64());
    let reference = msg.coefficient(msg.gamma);
    support
        .iter()
        .map(|&(g, _)| {
            let delta = msg.coefficient(g) - reference;
            let out = if delta == 0.0 { a0 } else { a0 - delta * b0 * b0 / (1.0 + delta * ub) };
            if out.is_finite() { Ok(out) } else { Err(NumericalError::NonFinite) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use nalgebra::Complex;
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::stats::TaskRng;

    type C64 = Complex<f64>;

    fn random_symmetric(n: usize, rng: &mut TaskRng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        // Diagonal shift keeps it well conditioned but indefinite.
        let sign = DMatrix::from_fn(n, n, |i, j| if i == j { if i % 2 == 0 { 3.0 } else { -3.0 } } else { 0.0 });
        &a + a.transpose() + sign
    }

    #[test]
    fn interaction_example() {
        let im = build_interaction_matrices::<f64>(1, 2.0, 3);
        let o = DMatrix::from_row_slice(3, 3, &[1.5, 0.75, 0.0, 0.75, 0.0, 3.0, 0.0, 3.0, 0.0]);
        let x = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        assert_eq!(im.o_base, o);
        assert_eq!(im.x, x);
    }

    #[test]
    fn x_is_degree_independent_and_o_linear() {
        let a = build_interaction_matrices::<f64>(4, 2.0, 1);
        let b = build_interaction_matrices::<f64>(4, 2.0, 7);
        assert_eq!(a.x, b.x);
        assert_eq!(a.o_base * 7.0, b.o_base);
        assert_eq!(a.x, a.x.transpose());
        assert_eq!(b.o_base, b.o_base.transpose());
    }

    #[test]
    fn conjugate_matches_matrix_products() {
        let mut rng = TaskRng::seed_from_u64(1);
        let g = CavityGeometry::<f64>::new(3, 2.0);
        let v = random_symmetric(7, &mut rng);
        let x = g.x_matrix();
        assert_eq!(g.conjugate(&v), &x * &v * &x);
        let want = g.o_base(3) - &x * &v * &x;
        assert!((g.precision(3, &v) - want).camax() < 1e-15);
    }

    #[test]
    fn identity_with_unit_shift() {
        let out = rank_one_regularized_inverse(&DMatrix::<f64>::identity(2, 2), 1.0).unwrap();
        assert_eq!(out, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn zero_shift_annihilates_e0() {
        let mut rng = TaskRng::seed_from_u64(2);
        for n in [2, 5, 21] {
            let m = random_symmetric(n, &mut rng);
            let out = rank_one_regularized_inverse(&m, 0.0).unwrap();
            assert!(out.column(0).iter().all(|&x| x == 0.0));
            assert!(out.row(0).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn finite_shift_matches_direct_inverse() {
        let mut rng = TaskRng::seed_from_u64(3);
        let m = random_symmetric(5, &mut rng);
        let s = 0.37;
        let mut shifted = m.clone();
        shifted[(0, 0)] += 1.0 / s;
        let direct = shifted.try_inverse().unwrap();
        let out = rank_one_regularized_inverse(&m, s).unwrap();
        assert!((&out - &direct).amax() / direct.amax() < 1e-9);
    }

    #[test]
    fn singular_input_reported() {
        let m = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(rank_one_regularized_inverse(&m, 1.0), Err(NumericalError::Singular));
        // (M⁻¹)₀₀ = −s makes the correction blow up.
        let m = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            rank_one_regularized_inverse(&m, -1.0),
            Err(NumericalError::VanishingDenominator(_))
        ));
    }

    /// The complex form used as a reference: entries `−i·d` in `O`, `+i` in `X`.
    fn complex_matrices(p: usize, a: f64, d: usize) -> (DMatrix<C64>, DMatrix<C64>) {
        let im = build_interaction_matrices::<f64>(p, a, d);
        let n = 2 * p + 1;
        let mut o = im.o_base.map(|x| C64::new(x, 0.0));
        let mut x = DMatrix::<C64>::zeros(n, n);
        for q in 1..=p {
            o[(q, p + q)] = C64::new(0.0, -(d as f64));
            o[(p + q, q)] = C64::new(0.0, -(d as f64));
            x[(q - 1, p + q)] = C64::new(0.0, 1.0);
            x[(p + q, q - 1)] = C64::new(0.0, 1.0);
        }
        (o, x)
    }

    fn transform(p: usize) -> DMatrix<C64> {
        let n = 2 * p + 1;
        DMatrix::from_fn(n, n, |i, j| match (i == j, i > p) {
            (true, false) => C64::new(1.0, 0.0),
            (true, true) => C64::new(0.0, 1.0),
            _ => C64::new(0.0, 0.0),
        })
    }

    #[test]
    fn real_form_is_conjugated_complex_form() {
        let (p, a, d) = (3, 2.0, 4);
        let (o, x) = complex_matrices(p, a, d);
        let t = transform(p);
        let im = build_interaction_matrices::<f64>(p, a, d);
        assert!((&t * &o * &t - im.o_base.map(|v| C64::new(v, 0.0))).camax() < 1e-15);
        assert!((&t * &x * &t - im.x.map(|v| C64::new(v, 0.0))).camax() < 1e-15);
    }

    fn complex_regularized_inverse(m: &DMatrix<C64>, s: f64) -> DMatrix<C64> {
        let inv = m.clone().lu().try_inverse().unwrap();
        let denom = C64::new(s, 0.0) + inv[(0, 0)];
        let col = inv.column(0).clone_owned();
        let row = inv.row(0).clone_owned();
        inv - (col * row) / denom
    }

    #[test]
    fn complex_and_real_recursions_agree() {
        // Drive the same randomized message recursion in both
        // representations and compare (M⁻¹)₀₀ and V₀₀ at every step.
        let (p, a, sigma2) = (3, 2.0, 0.1);
        let geometry = CavityGeometry::<f64>::new(p, a);
        let mut rng = TaskRng::seed_from_u64(4);
        let leaf = rank_one_regularized_inverse(&geometry.o_base(1), 0.0).unwrap();
        let mut real = vec![leaf; 20];
        // Real V corresponds to the complex covariance T V T.
        let t = transform(p);
        let mut complex: Vec<DMatrix<C64>> =
            real.iter().map(|v| &t * v.map(|x| C64::new(x, 0.0)) * &t).collect();
        for _ in 0..100 {
            let d = rng.random_range(1..=4);
            let gamma = rng.random_range(0..3) as f64;
            let picks: Vec<usize> = (0..d - 1).map(|_| rng.random_range(0..real.len())).collect();
            let target = rng.random_range(0..real.len());
            let s = (gamma / sigma2) / d as f64;

            let m = geometry.precision(d, &geometry.sum(picks.iter().map(|&i| &real[i])));
            let (oc, xc) = complex_matrices(p, a, d);
            let mut mc = oc;
            for &i in &picks {
                mc -= &xc * &complex[i] * &xc;
            }
            let m00 = inverse_00(&m).unwrap();
            let mc00 = mc.clone().lu().try_inverse().unwrap()[(0, 0)];
            assert!((m00 - mc00.re).abs() < 1e-8 && mc00.im.abs() < 1e-8);

            real[target] = rank_one_regularized_inverse(&m, s).unwrap();
            complex[target] = if s == 0.0 {
                let mut v = complex_regularized_inverse(&mc, 0.0);
                v.row_mut(0).fill(C64::new(0.0, 0.0));
                v.column_mut(0).fill(C64::new(0.0, 0.0));
                v
            } else {
                complex_regularized_inverse(&mc, s)
            };
            let (vr, vc) = (real[target][(0, 0)], complex[target][(0, 0)]);
            assert!((vr - vc.re).abs() < 1e-8 && vc.im.abs() < 1e-8);
        }
    }

    #[test]
    fn inverse_00_matches_full_inverse() {
        let mut rng = TaskRng::seed_from_u64(5);
        let m = random_symmetric(9, &mut rng);
        let full = m.clone().try_inverse().unwrap();
        assert!((inverse_00(&m).unwrap() - full[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn repinning_matches_direct_inverse() {
        let mut rng = TaskRng::seed_from_u64(5);
        let g = CavityGeometry::<f64>::new(3, 2.0);
        let leaf = pinned_inverse(&g.o_base(1), 0, 0.0).unwrap();
        let other = pinned_inverse(&(g.o_base(2) - g.conjugate(&leaf.v)), 2, 0.7).unwrap();
        let support: Vec<(usize, f64)> = (0..6).map(|k| (k, 1.0)).collect();
        for _ in 0..20 {
            let m = random_symmetric(7, &mut rng) * 0.2 + g.o_base(3);
            let gamma = rng.random_range(0..4);
            let msg = pinned_inverse(&m, gamma, rng.random_range(0.1..3.0)).unwrap();
            let p = g.o_base(3) - g.conjugate(&(&msg.v + &other.v));
            let fast = inverse_00_over_examples(&g, &p, &msg, &support).unwrap();
            for (&(k, _), f) in support.iter().zip(fast) {
                let repinned = rank_one_regularized_inverse(&m, k as f64 * msg.rate).unwrap();
                let direct = inverse_00(&(g.o_base(3) - g.conjugate(&(&repinned + &other.v)))).unwrap();
                assert!((f - direct).abs() < 1e-9 * direct.abs().max(1.0), "γ={k}: {f} vs {direct}");
            }
        }
    }
}
