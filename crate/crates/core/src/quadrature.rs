//! Adaptive trapezoid quadrature.

/// Local refinement threshold: an interval is accepted once bisecting it
/// changes its trapezoid estimate by less than this.
pub const INTERVAL_TOLERANCE: f64 = 1e-10;

const MAX_DEPTH: u32 = 48;

/// Outcome of [`adaptive_trapezoid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub evaluations: usize,
    /// False if some interval hit the depth limit before converging.
    pub converged: bool,
}

/// Integrates `f` over `[a, b]` by recursive bisection of trapezoids.
///
/// Non-finite samples make the result non-finite; callers detect that.
pub fn adaptive_trapezoid<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Quadrature {
    let fa = f(a);
    let fb = f(b);
    let mut q = Quadrature {
        value: 0.0,
        evaluations: 2,
        converged: true,
    };
    if a == b {
        return q;
    }
    q.value = refine(&mut f, a, b, fa, fb, 0.5 * (b - a) * (fa + fb), tol, 0, &mut q);
    q
}

#[allow(clippy::too_many_arguments)]
fn refine<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    q: &mut Quadrature,
) -> f64 {
    let m = 0.5 * (a + b);
    let fm = f(m);
    q.evaluations += 1;
    let half = 0.5 * (m - a);
    let left = half * (fa + fm);
    let right = half * (fm + fb);
    let split = left + right;
    if !split.is_finite() {
        return split;
    }
    if (split - whole).abs() < tol {
        return split;
    }
    if depth >= MAX_DEPTH {
        q.converged = false;
        return split;
    }
    refine(f, a, m, fa, fm, left, tol, depth + 1, q) + refine(f, m, b, fm, fb, right, tol, depth + 1, q)
}
