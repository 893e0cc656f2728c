//! Adaptive Simpson quadrature on a finite interval.

/// Outcome of an adaptive integration: the value and an estimate of the
/// remaining error (sum of the accepted panel estimates).
#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
}

/// Integrate `f` over [a, b] by adaptive Simpson with Richardson control.
///
/// The per-panel acceptance test is |S2 - S1|/15 <= tol_panel, with the
/// tolerance split proportionally to panel width. Recursion depth is capped;
/// panels that hit the cap are accepted with their error recorded so the
/// caller can decide whether the result is usable.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> QuadOutcome {
    if a == b {
        return QuadOutcome {
            value: 0.0,
            error_estimate: 0.0,
            converged: true,
        };
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let tol = abs_tol.max(rel_tol * whole.abs());
    let mut acc = Accum {
        value: 0.0,
        error: 0.0,
        converged: true,
    };
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut acc);
    // One refinement pass with the now-known magnitude, if the first guess
    // of the scale was far off.
    let tol2 = abs_tol.max(rel_tol * acc.value.abs());
    if tol2 < 0.1 * tol {
        let mut acc2 = Accum {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
        recurse(f, a, b, fa, fm, fb, whole, tol2, MAX_DEPTH, &mut acc2);
        acc = acc2;
    }
    QuadOutcome {
        value: acc.value,
        error_estimate: acc.error,
        converged: acc.converged,
    }
}

const MAX_DEPTH: u32 = 48;

struct Accum {
    value: f64,
    error: f64,
    converged: bool,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    acc: &mut Accum,
) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = (left + right - whole) / 15.0;
    // panels whose estimate sits at the rounding floor of their own sum are
    // as converged as f64 allows
    let floor = 4.0 * f64::EPSILON * (left.abs() + right.abs());
    if err.abs() <= tol.max(floor) || depth == 0 {
        acc.value += left + right + err;
        acc.error += err.abs();
        if depth == 0 && err.abs() > tol.max(floor) {
            acc.converged = false;
        }
        return;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, acc);
    recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, acc);
}
