//! Scalar numerical kernels: adaptive Simpson quadrature and bracketed
//! root finding for increasing functions.

use crate::error::{Error, Result};

/// Result of an adaptive quadrature run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// False when some panel hit the depth or evaluation budget before
    /// meeting its tolerance.
    pub converged: bool,
    pub evaluations: usize,
}

impl Integral {
    pub fn into_result(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::QuadratureNotConverged { estimate: self.value })
        }
    }
}

/// Hard cap on integrand evaluations per call. Smooth integrands use a few
/// hundred; the cap only matters for pathological input.
const MAX_EVALUATIONS: usize = 5_000_000;

/// Panels are always split at least this many times before the error test
/// is trusted, so a lucky coarse estimate cannot end the recursion early.
const MIN_DEPTH: u32 = 3;

struct State {
    evaluations: usize,
    converged: bool,
    max_depth: u32,
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance
/// `rtol` (relative to the coarse whole-interval estimate), with Richardson
/// correction on accepted panels.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rtol: f64, max_depth: u32) -> Integral {
    if a == b {
        return Integral { value: 0.0, converged: true, evaluations: 0 };
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut eps = (rtol * whole.abs()).max(f64::MIN_POSITIVE);
    let mut state = State { evaluations: 3, converged: true, max_depth };
    let mut value = refine(&f, a, b, fa, fm, fb, whole, eps, 0, &mut state);
    // A coarse estimate far above the converged value leaves the absolute
    // tolerance too loose; redo the pass with the tolerance re-anchored.
    for _ in 0..3 {
        let wanted = (rtol * value.abs()).max(f64::MIN_POSITIVE);
        if !value.is_finite() || !state.converged || eps <= 2.0 * wanted {
            break;
        }
        eps = wanted;
        state.converged = true;
        value = refine(&f, a, b, fa, fm, fb, whole, eps, 0, &mut state);
    }
    if !value.is_finite() {
        state.converged = false;
    }
    Integral { value, converged: state.converged, evaluations: state.evaluations }
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
    state: &mut State,
) -> f64 {
    if state.evaluations >= MAX_EVALUATIONS {
        state.converged = false;
        return whole;
    }
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    state.evaluations += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;

    if !delta.is_finite() {
        state.converged = false;
        return left + right;
    }
    let accepted = depth >= MIN_DEPTH && delta.abs() <= 15.0 * eps;
    let collapsed = !(a < lm && lm < m && m < rm && rm < b);
    if accepted || collapsed || depth >= state.max_depth || state.evaluations >= MAX_EVALUATIONS {
        if !accepted && delta.abs() > 15.0 * eps {
            state.converged = false;
        }
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * eps, depth + 1, state)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * eps, depth + 1, state)
}

/// Find `x >= 0` with `g(x) ≈ target` for a non-decreasing `g` with
/// `g(0) <= target`. The upper end of the bracket starts at `guess` and is
/// doubled until it covers the target; bisection then runs until
/// `|g(x) - target| <= rtol * target` or the bracket collapses to adjacent
/// floats.
pub fn solve_increasing<G: Fn(f64) -> f64>(g: G, target: f64, guess: f64, rtol: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 };
    let mut g_hi = g(hi);
    let mut doublings = 0;
    while g_hi < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if !hi.is_finite() || doublings > 2100 {
            return Err(Error::NoBracket(format!("target {target} not reached by doubling")));
        }
        g_hi = g(hi);
        if g_hi.is_nan() {
            return Err(Error::NoBracket("function returned NaN during bracket expansion".into()));
        }
    }
    if (g_hi - target).abs() <= rtol * target {
        return Ok(hi);
    }
    for _ in 0..2200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if (g_mid - target).abs() <= rtol * target {
            return Ok(mid);
        }
        if g_mid < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
