//! Adaptive Simpson quadrature, used for the mixed-Poisson degree law.

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first split at `breaks` (sorted or not, points outside
/// `[a, b]` are ignored) and into `panels` uniform pieces, so narrow peaks
/// at known locations cannot be stepped over.
pub fn adaptive_simpson(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    panels: usize,
    tol: f64,
) -> f64 {
    let mut nodes: Vec<f64> = (0..=panels.max(1))
        .map(|i| a + (b - a) * i as f64 / panels.max(1) as f64)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .collect();
    nodes.sort_by(|x, y| x.partial_cmp(y).expect("finite break points"));
    nodes.dedup();
    let per_panel = tol / (nodes.len() - 1) as f64;
    nodes
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let (flo, fhi) = (f(lo), f(hi));
            let mid = 0.5 * (lo + hi);
            let fmid = f(mid);
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            refine(&f, lo, hi, flo, fmid, fhi, whole, per_panel, 48)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // The floor stops refinement once differences are at roundoff level.
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
        left + right + delta / 15.0
    } else {
        refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}
