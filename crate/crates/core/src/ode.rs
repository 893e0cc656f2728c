//! Embedded Dormand-Prince 5(4) integrator with dense output and
//! terminal-event location.
//!
//! The solver keeps every accepted step (values and derivatives at both
//! ends), so the solution can be sampled anywhere by cubic Hermite
//! interpolation. When an event function crosses zero from above, the
//! crossing is located on the Hermite interpolant and the final segment is
//! re-anchored at the located root, which keeps interpolation error near
//! the terminal point at roundoff level.

#[derive(Debug, thiserror::Error)]
pub enum OdeError {
    #[error("integration exceeded {0} steps before reaching the stop condition")]
    TooManySteps(usize),
    #[error("integration reached t = {0} without the event firing")]
    EventNotReached(f64),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
}

pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub t_max: f64,
    pub max_steps: usize,
}

/// Piecewise cubic Hermite representation of an accepted solution.
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    pub ts: Vec<f64>,
    pub ys: Vec<[f64; N]>,
    pub fs: Vec<[f64; N]>,
    pub event_fired: bool,
    /// Sum of accepted local error-estimate norms, a proxy for the
    /// accumulated global error.
    pub error_accum: f64,
}

impl<const N: usize> DenseSolution<N> {
    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn y_end(&self) -> [f64; N] {
        *self.ys.last().unwrap()
    }

    fn segment_for(&self, t: f64) -> usize {
        match self.ts.binary_search_by(|a| a.partial_cmp(&t).unwrap()) {
            Ok(k) => k.min(self.ts.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.ts.len() - 2),
        }
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let k = self.segment_for(t);
        hermite(
            self.ts[k],
            self.ts[k + 1],
            &self.ys[k],
            &self.ys[k + 1],
            &self.fs[k],
            &self.fs[k + 1],
            t,
        )
    }

    pub fn eval_deriv(&self, t: f64) -> [f64; N] {
        let k = self.segment_for(t);
        hermite_deriv(
            self.ts[k],
            self.ts[k + 1],
            &self.ys[k],
            &self.ys[k + 1],
            &self.fs[k],
            &self.fs[k + 1],
            t,
        )
    }
}

fn hermite<const N: usize>(
    t0: f64,
    t1: f64,
    y0: &[f64; N],
    y1: &[f64; N],
    f0: &[f64; N],
    f1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let h = t1 - t0;
    if h == 0.0 {
        return *y0;
    }
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h * h10 * f0[i] + h01 * y1[i] + h * h11 * f1[i];
    }
    out
}

fn hermite_deriv<const N: usize>(
    t0: f64,
    t1: f64,
    y0: &[f64; N],
    y1: &[f64; N],
    f0: &[f64; N],
    f1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let h = t1 - t0;
    if h == 0.0 {
        return *f0;
    }
    let s = (t - t0) / h;
    let d00 = (6.0 * s * s - 6.0 * s) / h;
    let d10 = 3.0 * s * s - 4.0 * s + 1.0;
    let d01 = (-6.0 * s * s + 6.0 * s) / h;
    let d11 = 3.0 * s * s - 2.0 * s;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = d00 * y0[i] + d10 * f0[i] + d01 * y1[i] + d11 * f1[i];
    }
    out
}

/// Integrate dy/dt = rhs(t, y) from (t0, y0) until `event` (evaluated on y)
/// crosses from positive to non-positive, or until t_max.
///
/// Returns the dense solution; `event_fired` records which stop occurred.
pub fn integrate_to_event<const N: usize>(
    rhs: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    event: &dyn Fn(&[f64; N]) -> f64,
    opts: &OdeOptions,
) -> Result<DenseSolution<N>, OdeError> {
    let mut sol = DenseSolution {
        ts: vec![t0],
        ys: vec![y0],
        fs: vec![rhs(t0, &y0)],
        event_fired: false,
        error_accum: 0.0,
    };
    let mut t = t0;
    let mut y = y0;
    let mut f = sol.fs[0];
    let mut h = opts.h_init.min(opts.h_max);
    let mut steps = 0usize;

    while t < opts.t_max {
        if steps >= opts.max_steps {
            return Err(OdeError::TooManySteps(opts.max_steps));
        }
        steps += 1;
        h = h.min(opts.h_max).min(opts.t_max - t);
        if h <= f64::EPSILON * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow(t));
        }

        let (y_new, f_new, err) = dopri5_step(rhs, t, &y, &f, h, opts);
        if err <= 1.0 {
            let t_new = t + h;
            let scale = y_new
                .iter()
                .map(|v| opts.atol + opts.rtol * v.abs())
                .fold(0.0f64, f64::max);
            sol.error_accum += err * scale;
            sol.ts.push(t_new);
            sol.ys.push(y_new);
            sol.fs.push(f_new);

            if event(&y_new) <= 0.0 {
                locate_event(rhs, event, &mut sol);
                sol.event_fired = true;
                return Ok(sol);
            }
            t = t_new;
            y = y_new;
            f = f_new;
        }
        let fac = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= fac.clamp(0.2, 5.0);
    }
    Ok(sol)
}

/// One Dormand-Prince 5(4) step; returns (y5, f(t+h, y5), scaled error norm).
fn dopri5_step<const N: usize>(
    rhs: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
    opts: &OdeOptions,
) -> ([f64; N], [f64; N], f64) {
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // b - b* (5th minus embedded 4th order weights)
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let k1 = *f0;
    let mut yt = [0.0; N];
    for i in 0..N {
        yt[i] = y[i] + h * A21 * k1[i];
    }
    let k2 = rhs(t + h / 5.0, &yt);
    for i in 0..N {
        yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    let k3 = rhs(t + 3.0 * h / 10.0, &yt);
    for i in 0..N {
        yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    let k4 = rhs(t + 4.0 * h / 5.0, &yt);
    for i in 0..N {
        yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    let k5 = rhs(t + 8.0 * h / 9.0, &yt);
    for i in 0..N {
        yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    let k6 = rhs(t + h, &yt);
    let mut y_new = [0.0; N];
    for i in 0..N {
        y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    let k7 = rhs(t + h, &y_new);

    let mut err_sq = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        err_sq += (e / sc) * (e / sc);
    }
    (y_new, k7, (err_sq / N as f64).sqrt())
}

/// Replace the last stored segment endpoint by the located root of the
/// event function (component assumed monotone across the segment).
fn locate_event<const N: usize>(
    rhs: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    event: &dyn Fn(&[f64; N]) -> f64,
    sol: &mut DenseSolution<N>,
) {
    let n = sol.ts.len();
    let (t0, t1) = (sol.ts[n - 2], sol.ts[n - 1]);
    let y0 = sol.ys[n - 2];
    let y1 = sol.ys[n - 1];
    let f0 = sol.fs[n - 2];
    let f1 = sol.fs[n - 1];
    let g = |t: f64| event(&hermite(t0, t1, &y0, &y1, &f0, &f1, t));

    let (mut lo, mut hi) = (t0, t1);
    let mut glo = g(lo);
    // bisection with a secant improvement; 80 rounds pins the root to 1 ulp
    let mut root = hi;
    for _ in 0..80 {
        let mid = if glo.abs() > 0.0 {
            let ghi = g(hi);
            if (ghi - glo).abs() > 0.0 {
                let sec = lo - glo * (hi - lo) / (ghi - glo);
                if sec > lo && sec < hi {
                    sec
                } else {
                    0.5 * (lo + hi)
                }
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        let gm = g(mid);
        if gm > 0.0 {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
        root = hi;
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }

    let mut y_root = hermite(t0, t1, &y0, &y1, &f0, &f1, root);
    // anchor the event component exactly at zero
    let g_root = event(&y_root);
    if g_root != 0.0 {
        // the event is a coordinate projection in all our uses; zero the
        // matching component when subtracting reproduces the projection
        for i in 0..N {
            let mut probe = y_root;
            probe[i] = 0.0;
            if event(&probe) == g_root - y_root[i] {
                y_root[i] = 0.0;
                break;
            }
        }
    }
    let f_root = rhs(root, &y_root);
    sol.ts[n - 1] = root;
    sol.ys[n - 1] = y_root;
    sol.fs[n - 1] = f_root;
}
