//! Implicit Lagrangian evolution of the perturbed star on the fixed
//! reference interval [0, Rbar].
//!
//! The momentum equation is advanced in the transformed form in which the
//! background pressure gradient replaces the gravity integral,
//!
//! ```text
//! rhobar (x^2/r^2) v_t + [p(varrho)]_x - (x^4/r^4) [p(rhobar)]_x
//!     = [nu (v_x/r_x + 2 v/r)]_x,        varrho = x^2 rhobar/(r^2 r_x),
//! ```
//!
//! with v(0,t) = 0 and the boundary stress B(Rbar,t) = 0,
//! B = (4/3) nu1 (v_x/r_x - v/r) + nu2 (v_x/r_x + 2 v/r).
//!
//! Both pressure terms are discretized with the same midpoint-difference
//! stencil, so at (r, v) = (x, 0) they cancel node by node and the discrete
//! equilibrium is an exact steady state (well-balanced scheme); the
//! arithmetic is arranged so the cancellation is exact in floating point,
//! not merely to truncation order.
//!
//! Time stepping is backward Euler with a full Newton iteration on v
//! (r = r^n + dt v inside the iteration) and an analytic
//! tridiagonal-plus-boundary Jacobian; the viscous operator is arbitrarily
//! stiff near the vacuum boundary, which rules out explicit or split
//! treatments.

use std::sync::Arc;

use crate::diagnostics::{self, DiagnosticsConfig, EnergyReport};
use crate::eos::{EosError, EquationOfState};
use crate::equilibrium::EquilibriumProfile;
use crate::grid::Grid;
use crate::linalg::solve_tridiag_corner;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error("state invalid: {0}")]
    InvalidState(String),
    #[error("initial data inadmissible: {0}")]
    Admissibility(String),
    #[error("Newton iteration did not converge within {iters} iterations at t = {t}")]
    NewtonDiverged { t: f64, iters: usize },
    #[error("step rejected {rejections} times in a row at t = {t}; giving up")]
    TooManyRejections { t: f64, rejections: usize },
    #[error("linear solve failed at t = {t}: {msg}")]
    LinearSolve { t: f64, msg: String },
    #[error("initial energy E(0) = {frak_e0:.3e} exceeds the configured bound {bound:.3e}")]
    InitialEnergyTooLarge { frak_e0: f64, bound: f64 },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Time-stepping controls.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_cells: usize,
    pub grading_q: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    pub cfl: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub snapshot_every: f64,
    /// Reject runs whose initial energy functional exceeds this bound.
    pub max_frak_e0: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_cells: 512,
            grading_q: 2.0,
            dt_init: 1e-5,
            dt_max: 0.05,
            cfl: 0.9,
            t_final: 10.0,
            newton_tol: 1e-11,
            newton_max: 30,
            snapshot_every: 0.5,
            max_frak_e0: 1.0,
        }
    }
}

/// Immutable per-run data: the grid, the sampled equilibrium and the
/// viscosity coefficients. Shared by every state of a trajectory.
#[derive(Debug)]
pub struct SimSetup {
    pub eos: EquationOfState,
    pub profile: Arc<EquilibriumProfile>,
    pub grid: Grid,
    /// rhobar at nodes.
    pub rho_node: Vec<f64>,
    /// p(rhobar) at nodes.
    pub p_node: Vec<f64>,
    /// i(rhobar) at nodes.
    pub i_node: Vec<f64>,
    /// rhobar at cell midpoints.
    pub rho_mid: Vec<f64>,
    /// p(rhobar) at cell midpoints.
    pub p_mid: Vec<f64>,
    /// Cell widths h[m] = x_{m+1} - x_m.
    pub h: Vec<f64>,
    /// mids[m]^2, precomputed for the geometry factor.
    xm2: Vec<f64>,
    pub nu1: f64,
    pub nu2: f64,
    /// nu = 4 nu1/3 + nu2.
    pub nu: f64,
}

impl SimSetup {
    pub fn new(
        eos: EquationOfState,
        profile: Arc<EquilibriumProfile>,
        n_cells: usize,
        grading_q: f64,
        nu1: f64,
        nu2: f64,
    ) -> Result<Arc<SimSetup>, SimError> {
        if !(nu1 > 0.0 && nu2 > 0.0) {
            return Err(SimError::Invalid(format!(
                "viscosities must be positive, got {nu1}, {nu2}"
            )));
        }
        let grid = Grid::graded(profile.r_bar, n_cells, grading_q);
        let n = n_cells;
        let mut rho_node = Vec::with_capacity(n + 1);
        let mut p_node = Vec::with_capacity(n + 1);
        let mut i_node = Vec::with_capacity(n + 1);
        for (j, &x) in grid.xs.iter().enumerate() {
            let i = if j == n { 0.0 } else { profile.sample_i(x) };
            let rho = eos.rho_from_enthalpy(i);
            i_node.push(i);
            p_node.push(eos.pressure(rho)?);
            rho_node.push(rho);
        }
        let mut rho_mid = Vec::with_capacity(n);
        let mut p_mid = Vec::with_capacity(n);
        for &xm in &grid.mids {
            let rho = profile.sample_rho(xm);
            p_mid.push(eos.pressure(rho)?);
            rho_mid.push(rho);
        }
        let h: Vec<f64> = (0..n).map(|m| grid.xs[m + 1] - grid.xs[m]).collect();
        let xm2 = grid.mids.iter().map(|&x| x * x).collect();
        Ok(Arc::new(SimSetup {
            eos,
            profile,
            grid,
            rho_node,
            p_node,
            i_node,
            rho_mid,
            p_mid,
            h,
            xm2,
            nu1,
            nu2,
            nu: 4.0 * nu1 / 3.0 + nu2,
        }))
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }
}

/// Lagrangian dynamic state: flow map and velocity at the grid nodes.
#[derive(Debug, Clone)]
pub struct SimState {
    pub setup: Arc<SimSetup>,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl SimState {
    pub fn equilibrium(setup: Arc<SimSetup>) -> SimState {
        let r = setup.grid.xs.clone();
        let v = vec![0.0; r.len()];
        SimState {
            setup,
            r,
            v,
            t: 0.0,
        }
    }

    /// r_x at nodes (3-point stencils).
    pub fn r_x(&self) -> Vec<f64> {
        self.setup.grid.deriv(&self.r)
    }

    /// v_x at nodes.
    pub fn v_x(&self) -> Vec<f64> {
        self.setup.grid.deriv(&self.v)
    }

    /// r/x with the x -> 0 limit r_x(0) at the centre node.
    pub fn r_over_x(&self) -> Vec<f64> {
        let mut q: Vec<f64> = self
            .setup
            .grid
            .xs
            .iter()
            .zip(&self.r)
            .map(|(&x, &r)| if x > 0.0 { r / x } else { 0.0 })
            .collect();
        q[0] = self.r_x()[0];
        q
    }

    /// v/x with the centre limit v_x(0).
    pub fn v_over_x(&self) -> Vec<f64> {
        let mut q: Vec<f64> = self
            .setup
            .grid
            .xs
            .iter()
            .zip(&self.v)
            .map(|(&x, &v)| if x > 0.0 { v / x } else { 0.0 })
            .collect();
        q[0] = self.v_x()[0];
        q
    }

    /// Check the structural invariants r(0) = 0, v(0) = 0, r_x > 0.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.r[0] != 0.0 || self.v[0] != 0.0 {
            return Err(SimError::InvalidState("r(0) and v(0) must vanish".into()));
        }
        for (m, pair) in self.r.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(SimError::InvalidState(format!(
                    "flow map not increasing across cell {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Eulerian density pulled back to the reference nodes,
/// rho = x^2 rhobar / (r^2 r_x), with the centre limit rhobar_0 / r_x(0)^3.
pub fn density_field(state: &SimState) -> Result<Vec<f64>, SimError> {
    state.validate()?;
    let s = &state.setup;
    let n = s.n_cells();
    let rx = state.r_x();
    if rx.iter().any(|&v| v <= 0.0) {
        return Err(SimError::InvalidState("nonpositive r_x".into()));
    }
    let mut rho = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let g = if j == 0 {
            1.0 / (rx[0] * rx[0] * rx[0])
        } else {
            let xr = s.grid.xs[j] / state.r[j];
            xr * xr / rx[j]
        };
        rho.push(s.rho_node[j] * g);
    }
    Ok(rho)
}

// ---------------------------------------------------------------------------
// spatial operators
// ---------------------------------------------------------------------------

/// Midpoint fluxes of the current (r, v): for each cell m,
/// s_m = r_x, rm = r at midpoint, varrho_m, p(varrho_m), and the viscous
/// flux Phi_m = nu (v_x/r_x + 2 v/r).
struct MidFluxes {
    s: Vec<f64>,
    rm: Vec<f64>,
    varrho: Vec<f64>,
    p_varrho: Vec<f64>,
    dp_varrho: Vec<f64>,
    vx: Vec<f64>,
    vv: Vec<f64>,
    phi: Vec<f64>,
}

fn mid_fluxes(setup: &SimSetup, r: &[f64], v: &[f64]) -> Result<MidFluxes, SimError> {
    let n = setup.n_cells();
    let mut out = MidFluxes {
        s: Vec::with_capacity(n),
        rm: Vec::with_capacity(n),
        varrho: Vec::with_capacity(n),
        p_varrho: Vec::with_capacity(n),
        dp_varrho: Vec::with_capacity(n),
        vx: Vec::with_capacity(n),
        vv: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
    };
    for m in 0..n {
        let s = (r[m + 1] - r[m]) / setup.h[m];
        if s <= 0.0 {
            return Err(SimError::InvalidState(format!("r_x <= 0 in cell {m}")));
        }
        let rm = 0.5 * (r[m] + r[m + 1]);
        // geometry factor equals exactly 1.0 at the discrete equilibrium
        let geom = setup.xm2[m] / (rm * rm * s);
        let varrho = setup.rho_mid[m] * geom;
        let p = setup.eos.pressure(varrho)?;
        let dp = setup.eos.dp(varrho)?;
        let vx = (v[m + 1] - v[m]) / setup.h[m];
        let vv = (v[m] + v[m + 1]) / (r[m] + r[m + 1]);
        let phi = setup.nu * (vx / s + 2.0 * vv);
        out.s.push(s);
        out.rm.push(rm);
        out.varrho.push(varrho);
        out.p_varrho.push(p);
        out.dp_varrho.push(dp);
        out.vx.push(vx);
        out.vv.push(vv);
        out.phi.push(phi);
    }
    Ok(out)
}

/// Discrete boundary stress at x = Rbar with second-order one-sided
/// derivatives: B = (4/3) nu1 (v_x/r_x - v/r) + nu2 (v_x/r_x + 2 v/r).
pub fn boundary_stress(setup: &SimSetup, r: &[f64], v: &[f64]) -> f64 {
    let n = setup.n_cells();
    let c = setup.grid.end_deriv_coeffs();
    let vxn = c[0] * v[n - 2] + c[1] * v[n - 1] + c[2] * v[n];
    let rxn = c[0] * r[n - 2] + c[1] * r[n - 1] + c[2] * r[n];
    let u = vxn / rxn;
    let w = v[n] / r[n];
    4.0 / 3.0 * setup.nu1 * (u - w) + setup.nu2 * (u + 2.0 * w)
}

/// Acceleration field v_t from the momentum equation (never from time
/// differencing). Zero at the centre; quadratically extrapolated at the
/// boundary node, where the stress condition replaces the momentum row.
pub fn momentum_rhs(state: &SimState) -> Result<Vec<f64>, SimError> {
    let s = &state.setup;
    let n = s.n_cells();
    let mf = mid_fluxes(s, &state.r, &state.v)?;
    let mut vt = vec![0.0; n + 1];
    for j in 1..n {
        let x = s.grid.xs[j];
        let rj = state.r[j];
        let xr = x / rj;
        let beta2 = xr * xr;
        let beta4 = beta2 * beta2;
        let dm = s.grid.mids[j] - s.grid.mids[j - 1];
        let qp = mf.p_varrho[j] - beta4 * s.p_mid[j];
        let qm = mf.p_varrho[j - 1] - beta4 * s.p_mid[j - 1];
        let pressure = (qp - qm) / dm;
        let viscous = (mf.phi[j] - mf.phi[j - 1]) / dm;
        vt[j] = (viscous - pressure) / (beta2 * s.rho_node[j]);
    }
    // quadratic extrapolation from the last three interior nodes
    let (x0, x1, x2) = (s.grid.xs[n - 3], s.grid.xs[n - 2], s.grid.xs[n - 1]);
    let xb = s.grid.xs[n];
    let (f0, f1, f2) = (vt[n - 3], vt[n - 2], vt[n - 1]);
    vt[n] = f0 * (xb - x1) * (xb - x2) / ((x0 - x1) * (x0 - x2))
        + f1 * (xb - x0) * (xb - x2) / ((x1 - x0) * (x1 - x2))
        + f2 * (xb - x0) * (xb - x1) / ((x2 - x0) * (x2 - x1));
    Ok(vt)
}

// ---------------------------------------------------------------------------
// implicit step
// ---------------------------------------------------------------------------

/// Residual of the backward-Euler system for the unknown nodal velocities
/// v_1..v_n (v_0 = 0): interior momentum rows plus the boundary-stress row.
/// Also returns, per row, the magnitude sum of the terms entering the
/// residual: epsilon times that sum is the evaluation-noise floor of the
/// row, below which no iteration can push it.
fn be_residual(
    setup: &SimSetup,
    r: &[f64],
    v: &[f64],
    v_prev: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let n = setup.n_cells();
    let mf = mid_fluxes(setup, r, v)?;
    let mut f = vec![0.0; n];
    let mut mag = vec![0.0; n];
    for j in 1..n {
        let x = setup.grid.xs[j];
        let xr = x / r[j];
        let beta2 = xr * xr;
        let beta4 = beta2 * beta2;
        let dm = setup.grid.mids[j] - setup.grid.mids[j - 1];
        let qp = mf.p_varrho[j] - beta4 * setup.p_mid[j];
        let qm = mf.p_varrho[j - 1] - beta4 * setup.p_mid[j - 1];
        let inertia = setup.rho_node[j] * beta2 * (v[j] - v_prev[j]) / dt;
        f[j - 1] = inertia + (qp - qm) / dm - (mf.phi[j] - mf.phi[j - 1]) / dm;
        mag[j - 1] = inertia.abs()
            + (mf.p_varrho[j]
                + beta4 * setup.p_mid[j]
                + mf.p_varrho[j - 1]
                + beta4 * setup.p_mid[j - 1]
                + mf.phi[j].abs()
                + mf.phi[j - 1].abs())
                / dm;
    }
    f[n - 1] = boundary_stress(setup, r, v);
    {
        let c = setup.grid.end_deriv_coeffs();
        let vxn = (c[0] * v[n - 2]).abs() + (c[1] * v[n - 1]).abs() + (c[2] * v[n]).abs();
        let rxn = c[0] * r[n - 2] + c[1] * r[n - 1] + c[2] * r[n];
        let u = vxn / rxn.abs().max(f64::MIN_POSITIVE);
        let w = (v[n] / r[n]).abs();
        mag[n - 1] = 4.0 / 3.0 * setup.nu1 * (u + w) + setup.nu2 * (u + 2.0 * w);
    }
    Ok((f, mag))
}

/// Analytic Jacobian dF/dv of `be_residual` (r = r_prev + dt v inside the
/// iteration). Returns (sub, diag, sup, corner) for the banded solver.
#[allow(clippy::type_complexity)]
fn be_jacobian(
    setup: &SimSetup,
    r: &[f64],
    v: &[f64],
    v_prev: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, f64), SimError> {
    let n = setup.n_cells();
    let mf = mid_fluxes(setup, r, v)?;
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];

    // per-cell derivatives of p(varrho) and Phi w.r.t. the two nodal
    // velocities (lower = node m, upper = node m+1)
    let mut dp_lo = vec![0.0; n];
    let mut dp_hi = vec![0.0; n];
    let mut dphi_lo = vec![0.0; n];
    let mut dphi_hi = vec![0.0; n];
    for m in 0..n {
        let h = setup.h[m];
        let s = mf.s[m];
        let rm = mf.rm[m];
        let rsum = r[m] + r[m + 1];
        // d varrho = varrho (-1/rm ± 1/(s h)) * dt
        dp_lo[m] = mf.dp_varrho[m] * mf.varrho[m] * (-1.0 / rm + 1.0 / (s * h)) * dt;
        dp_hi[m] = mf.dp_varrho[m] * mf.varrho[m] * (-1.0 / rm - 1.0 / (s * h)) * dt;
        // Phi = nu (vx/s + 2 vv)
        let nu = setup.nu;
        dphi_lo[m] = nu * (-1.0 / (h * s) + mf.vx[m] * dt / (s * s * h))
            + 2.0 * nu * (1.0 - mf.vv[m] * dt) / rsum;
        dphi_hi[m] = nu * (1.0 / (h * s) - mf.vx[m] * dt / (s * s * h))
            + 2.0 * nu * (1.0 - mf.vv[m] * dt) / rsum;
    }

    for j in 1..n {
        let i = j - 1;
        let x = setup.grid.xs[j];
        let xr = x / r[j];
        let beta2 = xr * xr;
        let beta4 = beta2 * beta2;
        let dm = setup.grid.mids[j] - setup.grid.mids[j - 1];
        let rho = setup.rho_node[j];

        // inertia: rho beta2 (v - v_prev)/dt, with d beta2/d r_j = -2 beta2/r_j
        let dv_inertia =
            rho * beta2 / dt + rho * (v[j] - v_prev[j]) / dt * (-2.0 * beta2 / r[j]) * dt;
        // beta4 factor multiplies both background-pressure midpoint values
        let dbeta4 = -4.0 * beta4 / r[j] * dt;
        let dq_beta = -dbeta4 * (setup.p_mid[j] - setup.p_mid[j - 1]);

        // row j couples v_{j-1} (cell j-1 lower), v_j (both cells), v_{j+1}
        diag[i] = dv_inertia + (dp_lo[j] - dp_hi[j - 1] + dq_beta) / dm
            - (dphi_lo[j] - dphi_hi[j - 1]) / dm;
        if j >= 2 {
            sub[i] = (-dp_lo[j - 1]) / dm - (-dphi_lo[j - 1]) / dm;
        }
        sup[i] = dp_hi[j] / dm - dphi_hi[j] / dm;
    }

    // boundary-stress row: F_n = nu u + mu w, u = vxN/rxN, w = v_n/r_n
    let c = setup.grid.end_deriv_coeffs();
    let vxn = c[0] * v[n - 2] + c[1] * v[n - 1] + c[2] * v[n];
    let rxn = c[0] * r[n - 2] + c[1] * r[n - 1] + c[2] * r[n];
    let u = vxn / rxn;
    let w = v[n] / r[n];
    let mu = 2.0 * setup.nu2 - 4.0 * setup.nu1 / 3.0;
    let du = |ck: f64| ck * (1.0 - u * dt) / rxn;
    let corner = setup.nu * du(c[0]);
    sub[n - 1] = setup.nu * du(c[1]);
    diag[n - 1] = setup.nu * du(c[2]) + mu * (1.0 - w * dt) / r[n];

    Ok((sub, diag, sup, corner))
}

/// Advance one backward-Euler step of size dt. The previous state is left
/// untouched; a converged new state is returned, or the reason the step must
/// be rejected.
pub fn step(state: &SimState, dt: f64) -> Result<SimState, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::Invalid(format!("dt must be positive, got {dt}")));
    }
    let setup = state.setup.clone();
    let cfg_tol = 1e-11; // overridden by run(); standalone calls use this
    step_inner(&setup, state, dt, cfg_tol, 30)
}

fn step_inner(
    setup: &Arc<SimSetup>,
    state: &SimState,
    dt: f64,
    newton_tol: f64,
    newton_max: usize,
) -> Result<SimState, SimError> {
    let n = setup.n_cells();
    let mut v = state.v.clone();
    let mut r = vec![0.0; n + 1];
    let update_r = |r: &mut [f64], v: &[f64]| {
        r[0] = 0.0;
        for j in 1..=n {
            r[j] = state.r[j] + dt * v[j];
        }
    };
    update_r(&mut r, &v);

    // absolute velocity floor for the convergence scale, so the criterion
    // stays attainable once the solution has decayed toward roundoff
    let v_floor = 1e-10 * setup.profile.r_bar;
    let mut prev_fmax = f64::INFINITY;
    let mut stall_count = 0usize;
    for _iter in 0..newton_max {
        let (f, mag) = be_residual(setup, &r, &v, &state.v, dt)?;
        let fmax = f.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if fmax == 0.0 {
            // exact root (the well-balanced equilibrium); nothing to solve
            return Ok(SimState {
                setup: setup.clone(),
                r,
                v,
                t: state.t + dt,
            });
        }
        let (sub, diag, sup, corner) = be_jacobian(setup, &r, &v, &state.v, dt)?;
        // row-scaled convergence: every residual entry is below what a
        // velocity perturbation of size newton_tol * (|v| + floor) could
        // generate through the Jacobian row, allowing each row its own
        // floating-point evaluation floor eps * mag
        let vmax = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let vscale = newton_tol * (vmax + v_floor);
        let converged = (0..n).all(|i| {
            let mut rowsum = sub[i].abs() + diag[i].abs() + sup[i].abs();
            if i == n - 1 {
                rowsum += corner.abs();
            }
            f[i].abs() <= rowsum * vscale + 32.0 * f64::EPSILON * mag[i]
        });
        if converged {
            return Ok(SimState {
                setup: setup.clone(),
                r,
                v,
                t: state.t + dt,
            });
        }
        // stall: the residual stopped improving because the iterate is
        // already the working-precision solution; accept provided every row
        // sits within a loose multiple of its own evaluation floor
        if fmax > 0.75 * prev_fmax {
            stall_count += 1;
            if stall_count >= 2 && (0..n).all(|i| f[i].abs() <= 32_768.0 * f64::EPSILON * mag[i]) {
                return Ok(SimState {
                    setup: setup.clone(),
                    r,
                    v,
                    t: state.t + dt,
                });
            }
        } else {
            stall_count = 0;
        }
        prev_fmax = fmax;
        let mut delta: Vec<f64> = f.iter().map(|&x| -x).collect();
        solve_tridiag_corner(&sub, &diag, &sup, corner, &mut delta).map_err(|e| {
            SimError::LinearSolve {
                t: state.t,
                msg: e.to_string(),
            }
        })?;
        for j in 1..=n {
            v[j] += delta[j - 1];
        }
        update_r(&mut r, &v);
        // reject as soon as the map folds over
        for m in 0..n {
            if r[m + 1] <= r[m] {
                return Err(SimError::InvalidState(format!(
                    "r_x <= 0 in cell {m} during Newton iteration"
                )));
            }
        }
    }
    Err(SimError::NewtonDiverged {
        t: state.t,
        iters: newton_max,
    })
}

/// Acoustic time-step limit cfl * min_m (h_m / c_s) with c_s = sqrt(p'(varrho)).
fn cfl_limit(setup: &SimSetup, r: &[f64], v: &[f64], cfl: f64) -> Result<f64, SimError> {
    let mf = mid_fluxes(setup, r, v)?;
    let mut dt = f64::INFINITY;
    for m in 0..setup.n_cells() {
        let cs = mf.dp_varrho[m].sqrt();
        if cs > 0.0 {
            dt = dt.min(setup.h[m] / cs);
        }
    }
    Ok(cfl * dt)
}

// ---------------------------------------------------------------------------
// initial data
// ---------------------------------------------------------------------------

/// Admissible initial density profiles for the Lagrangian map construction.
#[derive(Debug, Clone)]
pub enum InitialDensity {
    /// rho_0 = rhobar: the identity map.
    Equilibrium,
    /// Mass-preserving dilation rho_0(s) = rhobar(s/lambda)/lambda^3 on
    /// [0, lambda Rbar].
    Dilation { lambda: f64 },
    /// Sampled density on its own radial grid (vanishing at the last node).
    Sampled { rs: Vec<f64>, rho: Vec<f64> },
}

/// Construct the initial flow map r_0 on the reference nodes by inverting
/// the cumulative-mass relation
/// int_0^{r0(x)} s^2 rho_0 ds = int_0^x s^2 rhobar ds
/// with bracketed root finding on the monotone cumulative interpolants.
pub fn initial_map(
    rho0: &InitialDensity,
    profile: &EquilibriumProfile,
    xs: &[f64],
    mass_tol: f64,
) -> Result<Vec<f64>, SimError> {
    let four_pi = 4.0 * std::f64::consts::PI;
    // cumulative mass of the equilibrium, Q(x) = int_0^x s^2 rhobar ds
    let q_eq = |x: f64| profile.sample_m(x) / four_pi;
    let q_total = q_eq(profile.r_bar);

    // cumulative mass of rho_0 and its outer radius
    let (q0, q0_deriv, r0_max): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>, f64) = match rho0
    {
        InitialDensity::Equilibrium => (
            Box::new(q_eq),
            Box::new(|r: f64| r * r * profile.sample_rho(r)),
            profile.r_bar,
        ),
        InitialDensity::Dilation { lambda } => {
            let l = *lambda;
            if !(l > 0.0) {
                return Err(SimError::Invalid(format!(
                    "dilation factor must be > 0, got {l}"
                )));
            }
            (
                Box::new(move |r: f64| q_eq(r / l)),
                Box::new(move |r: f64| (r / l) * (r / l) * profile.sample_rho(r / l) / l),
                l * profile.r_bar,
            )
        }
        InitialDensity::Sampled { rs, rho } => {
            if rs.len() != rho.len() || rs.len() < 2 {
                return Err(SimError::Invalid(
                    "sampled density needs matching grids".into(),
                ));
            }
            let rs = rs.clone();
            let rho = rho.clone();
            // cumulative trapezoid of s^2 rho_0
            let mut cum = vec![0.0; rs.len()];
            for k in 1..rs.len() {
                cum[k] = cum[k - 1]
                    + 0.5
                        * (rs[k] - rs[k - 1])
                        * (rs[k] * rs[k] * rho[k] + rs[k - 1] * rs[k - 1] * rho[k - 1]);
            }
            let r_last = *rs.last().unwrap();
            let rs2 = rs.clone();
            let rho2 = rho.clone();
            let interp = move |r: f64| -> f64 {
                let k = rs.partition_point(|&a| a < r).clamp(1, rs.len() - 1);
                let (a, b) = (rs[k - 1], rs[k]);
                let t = ((r - a) / (b - a)).clamp(0.0, 1.0);
                // quadratic-in-r correction is not needed at mass_tol level
                cum[k - 1] + t * (cum[k] - cum[k - 1])
            };
            let deriv = move |r: f64| -> f64 {
                let k = rs2.partition_point(|&a| a < r).clamp(1, rs2.len() - 1);
                let t = ((r - rs2[k - 1]) / (rs2[k] - rs2[k - 1])).clamp(0.0, 1.0);
                let rho_r = rho2[k - 1] + t * (rho2[k] - rho2[k - 1]);
                r * r * rho_r
            };
            (Box::new(interp), Box::new(deriv), r_last)
        }
    };

    let q0_total = q0(r0_max);
    let rel_mismatch = ((q0_total - q_total) / q_total).abs();
    if rel_mismatch > mass_tol {
        return Err(SimError::Admissibility(format!(
            "total mass of rho_0 differs from the equilibrium mass by {rel_mismatch:.3e} (tolerance {mass_tol:.1e})"
        )));
    }

    let n = xs.len() - 1;
    let mut r0 = vec![0.0; n + 1];
    r0[n] = r0_max;
    for j in 1..n {
        let target = q_eq(xs[j]);
        // bracketed bisection on the monotone cumulative mass
        let (mut lo, mut hi) = (0.0f64, r0_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q0(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * r0_max {
                break;
            }
        }
        let mut root = 0.5 * (lo + hi);
        // one Newton polish with Q0' = r^2 rho_0, trust-bounded by the
        // bisection bracket so value-space noise near the flat boundary
        // cannot be amplified into position noise
        let d = q0_deriv(root);
        if d > 0.0 {
            let corr = (q0(root) - target) / d;
            if corr.is_finite() && corr.abs() <= 4.0 * (hi - lo) {
                root -= corr;
            }
        }
        r0[j] = root;
    }
    // strict monotonicity check
    for m in 0..n {
        if r0[m + 1] <= r0[m] {
            return Err(SimError::Admissibility(format!(
                "initial map not increasing across cell {m}"
            )));
        }
    }
    Ok(r0)
}

/// Kinds of compatible initial perturbations.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    VelocityBump,
    MapDilation,
    None,
}

/// Perturbation descriptor: kind and amplitude, plus the solved shape
/// parameter that enforces the discrete boundary-stress compatibility.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub epsilon: f64,
    /// Coefficient of the correction shape solved so that B(Rbar, 0) = 0
    /// holds exactly for the discrete stress (velocity bumps only).
    pub bump_correction: f64,
}

/// Build initial data (r_0, v_0) satisfying the compatibility conditions
/// v_0(0) = 0 and B(Rbar, 0) = 0 exactly in the discrete sense.
///
/// velocity_bump: v_0 = eps x (g0 + a g1) with g0 = (1 - xi^2)^4,
/// g1 = xi^2, xi = x/Rbar; a is solved from the affine dependence of the
/// discrete stress on v. map_dilation: r_0 from the mass-preserving
/// dilation with lambda = 1 + eps and v_0 = 0.
pub fn make_compatible_perturbation(
    setup: &SimSetup,
    kind: PerturbationKind,
    epsilon: f64,
) -> Result<(Vec<f64>, Vec<f64>, Perturbation), SimError> {
    let xs = &setup.grid.xs;
    let n = setup.n_cells();
    let r_bar = setup.profile.r_bar;
    if epsilon == 0.0 || kind == PerturbationKind::None {
        return Ok((
            xs.clone(),
            vec![0.0; n + 1],
            Perturbation {
                kind,
                epsilon,
                bump_correction: 0.0,
            },
        ));
    }
    match kind {
        PerturbationKind::None => unreachable!(),
        PerturbationKind::VelocityBump => {
            let shape0: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let xi = x / r_bar;
                    let b = 1.0 - xi * xi;
                    epsilon * x * b * b * b * b
                })
                .collect();
            let shape1: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let xi = x / r_bar;
                    epsilon * x * xi * xi
                })
                .collect();
            // B is linear in v at fixed r = x: solve base + a * slope = 0
            let base = boundary_stress(setup, xs, &shape0);
            let slope = boundary_stress(setup, xs, &shape1);
            if slope == 0.0 {
                return Err(SimError::Invalid(
                    "degenerate boundary-stress correction".into(),
                ));
            }
            let a = -base / slope;
            let v0: Vec<f64> = shape0
                .iter()
                .zip(&shape1)
                .map(|(&s0, &s1)| s0 + a * s1)
                .collect();
            Ok((
                xs.clone(),
                v0,
                Perturbation {
                    kind,
                    epsilon,
                    bump_correction: a,
                },
            ))
        }
        PerturbationKind::MapDilation => {
            let lambda = 1.0 + epsilon;
            let r0 = initial_map(
                &InitialDensity::Dilation { lambda },
                &setup.profile,
                xs,
                1e-6,
            )?;
            Ok((
                r0,
                vec![0.0; n + 1],
                Perturbation {
                    kind,
                    epsilon,
                    bump_correction: 0.0,
                },
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// trajectory driver
// ---------------------------------------------------------------------------

/// One stored snapshot of the dynamic fields.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Result of a run: diagnostic series at the sampling cadence, stored
/// snapshots, and bookkeeping for the a priori smallness monitor.
#[derive(Debug)]
pub struct Trajectory {
    pub reports: Vec<EnergyReport>,
    /// Number of accepted steps between consecutive reports.
    pub steps_between: Vec<usize>,
    pub snapshots: Vec<Snapshot>,
    /// First time the a priori smallness bounds were exceeded, if ever.
    pub small_regime_exit: Option<f64>,
    /// Step failure that ended the run early, if any.
    pub failure: Option<(f64, String)>,
    pub frak_e0: f64,
    pub total_steps: usize,
    pub total_rejections: usize,
}

/// Advance from the given initial data to t_final, sampling diagnostics
/// every `snapshot_every` time units. dt grows by 1.2x after 5 consecutive
/// accepted steps, capped by dt_max and the acoustic limit; rejected steps
/// halve dt (at most 20 rejections in a row).
pub fn run(
    setup: &Arc<SimSetup>,
    r0: Vec<f64>,
    v0: Vec<f64>,
    cfg: &SimConfig,
    diag: &DiagnosticsConfig,
) -> Result<Trajectory, SimError> {
    let mut state = SimState {
        setup: setup.clone(),
        r: r0,
        v: v0,
        t: 0.0,
    };
    state.validate()?;
    let report0 = diagnostics::energy_report(&state, diag)
        .map_err(|e| SimError::Invalid(format!("initial diagnostics failed: {e}")))?;
    let frak_e0 = report0.frak_e;
    if frak_e0 > cfg.max_frak_e0 {
        return Err(SimError::InitialEnergyTooLarge {
            frak_e0,
            bound: cfg.max_frak_e0,
        });
    }

    let mut traj = Trajectory {
        reports: vec![report0],
        steps_between: vec![0],
        snapshots: vec![make_snapshot(&state)?],
        small_regime_exit: None,
        failure: None,
        frak_e0,
        total_steps: 0,
        total_rejections: 0,
    };
    {
        let p = &traj.reports[0].sup;
        if p.rx_minus_1.max(p.r_over_x_minus_1) > 0.125 || p.vx.max(p.v_over_x) > 1.0 {
            traj.small_regime_exit = Some(0.0);
        }
    }

    let mut dt = cfg.dt_init.min(cfg.dt_max);
    let mut accepted_in_row = 0usize;
    let mut steps_since_report = 0usize;
    let mut next_sample = cfg.snapshot_every;

    while state.t < cfg.t_final {
        let dt_cap = cfg
            .dt_max
            .min(cfl_limit(setup, &state.r, &state.v, cfg.cfl)?)
            .min(cfg.t_final - state.t);
        dt = dt.min(dt_cap).max(1e-300);

        let mut rejections = 0usize;
        let new_state = loop {
            match step_inner(setup, &state, dt, cfg.newton_tol, cfg.newton_max) {
                Ok(s) => break Some(s),
                Err(SimError::NewtonDiverged { .. }) | Err(SimError::InvalidState(_)) => {
                    rejections += 1;
                    traj.total_rejections += 1;
                    accepted_in_row = 0;
                    if rejections > 20 {
                        traj.failure = Some((
                            state.t,
                            format!("step rejected {rejections} times at t = {}", state.t),
                        ));
                        break None;
                    }
                    dt *= 0.5;
                    if dt < 1e-14 * cfg.t_final.max(1.0) {
                        traj.failure = Some((state.t, "time step underflow".into()));
                        break None;
                    }
                }
                Err(e) => {
                    traj.failure = Some((state.t, e.to_string()));
                    break None;
                }
            }
        };
        let Some(new_state) = new_state else {
            return Ok(traj);
        };
        state = new_state;
        traj.total_steps += 1;
        steps_since_report += 1;
        accepted_in_row += 1;
        if accepted_in_row >= 5 {
            dt *= 1.2;
            accepted_in_row = 0;
        }

        if state.t >= next_sample - 1e-12 || state.t >= cfg.t_final {
            let report = diagnostics::energy_report(&state, diag)
                .map_err(|e| SimError::Invalid(format!("diagnostics failed: {e}")))?;
            if traj.small_regime_exit.is_none() {
                let p = &report.sup;
                // priori bounds: |(r_x-1, r/x-1)| <= 1/8 and |(v_x, v/x)| <= 1
                if p.rx_minus_1.max(p.r_over_x_minus_1) > 0.125 || p.vx.max(p.v_over_x) > 1.0 {
                    traj.small_regime_exit = Some(state.t);
                }
            }
            traj.reports.push(report);
            traj.steps_between.push(steps_since_report);
            traj.snapshots.push(make_snapshot(&state)?);
            steps_since_report = 0;
            while next_sample <= state.t + 1e-12 {
                next_sample += cfg.snapshot_every;
            }
        }
    }
    Ok(traj)
}

fn make_snapshot(state: &SimState) -> Result<Snapshot, SimError> {
    Ok(Snapshot {
        t: state.t,
        r: state.r.clone(),
        v: state.v.clone(),
        rho: density_field(state)?,
    })
}
