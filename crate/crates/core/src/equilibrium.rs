//! Stationary star profiles: hydrostatic balance integrated in enthalpy
//! form, mass shooting, and critical-mass scans.
//!
//! The balance p(rho)_r = -G m(r) rho / r^2 is integrated as the regular
//! system
//!
//! ```text
//! di/dr = -G m / r^2,     dm/dr = 4 pi r^2 rho(i),
//! ```
//!
//! where i is the specific enthalpy and rho(i) its monotone inverse. Near
//! the centre the 0/0 in G m / r^2 is removed by a second-order series
//! start; the vacuum radius Rbar is the located root of i = 0. Integrating
//! in i rather than rho keeps the system Lipschitz up to the boundary,
//! where i is equivalent to the distance Rbar - r.

use std::sync::Arc;

use rayon::prelude::*;

use crate::eos::{EosError, EquationOfState};
use crate::grid::Grid;
use crate::ode::{integrate_to_event, DenseSolution, OdeError, OdeOptions};

#[derive(Debug, thiserror::Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error("enthalpy failed to reach zero within r_max = {r_max:.3e} (unbound profile)")]
    Unbound { r_max: f64 },
    #[error("ODE integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error("bracket [{lo:.6e}, {hi:.6e}] with masses [{m_lo:.6e}, {m_hi:.6e}] does not straddle target {target:.6e}")]
    BracketError {
        lo: f64,
        hi: f64,
        m_lo: f64,
        m_hi: f64,
        target: f64,
    },
    #[error("target mass {target:.6e} exceeds the scanned maximum {scanned_max:.6e} (exceeds critical mass)")]
    ExceedsCriticalMass { target: f64, scanned_max: f64 },
    #[error(
        "mass shooting did not converge in {iters} iterations (best relative miss {best:.3e})"
    )]
    NoConvergence { iters: usize, best: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Discretized stationary star.
///
/// Node arrays live on a grid graded toward the vacuum radius; the dense
/// ODE representation is kept so that enthalpy, mass and density can be
/// sampled anywhere in [0, Rbar] (the simulator samples cell midpoints).
#[derive(Debug, Clone)]
pub struct EquilibriumProfile {
    pub eos: EquationOfState,
    pub g: f64,
    pub rho_c: f64,
    pub r_bar: f64,
    pub mass: f64,
    pub xs: Vec<f64>,
    pub rho_bar: Vec<f64>,
    pub phi: Vec<f64>,
    pub i_bar: Vec<f64>,
    pub p_bar: Vec<f64>,
    /// Accumulated local-error proxy for (Rbar, M).
    pub error_estimate: f64,
    dense: Arc<DenseSolution<2>>,
}

impl EquilibriumProfile {
    /// Enthalpy at any x in [0, Rbar], clamped to be nonnegative.
    pub fn sample_i(&self, x: f64) -> f64 {
        if x >= self.r_bar {
            return 0.0;
        }
        self.dense.eval(x)[0].max(0.0)
    }

    /// Cumulative mass m(x) = 4 pi int_0^x s^2 rho ds.
    pub fn sample_m(&self, x: f64) -> f64 {
        if x >= self.r_bar {
            return self.mass;
        }
        self.dense.eval(x)[1]
    }

    /// d i / d r from the dense representation.
    pub fn sample_di_dr(&self, x: f64) -> f64 {
        let xq = x.min(self.r_bar);
        self.dense.eval_deriv(xq)[0]
    }

    pub fn sample_rho(&self, x: f64) -> f64 {
        self.eos.rho_from_enthalpy(self.sample_i(x))
    }

    /// phi(x) = 4 pi G x^-3 int_0^x s^2 rho ds = G m(x)/x^3, with the
    /// central limit 4 pi G rho_c / 3.
    pub fn phi_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 4.0 * std::f64::consts::PI * self.g * self.rho_c / 3.0;
        }
        self.g * self.sample_m(x) / (x * x * x)
    }

    /// Lower enthalpy-distance constant K8 = M G / (2 Rbar^2).
    pub fn k8(&self) -> f64 {
        self.mass * self.g / (2.0 * self.r_bar * self.r_bar)
    }

    /// Upper enthalpy-distance constant K9 = 4 pi G rho_c Rbar / 3.
    pub fn k9(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.g * self.rho_c * self.r_bar / 3.0
    }

    /// Build a profile from analytic enthalpy/mass functions (plus the
    /// enthalpy derivative) sampled on a dense grid. Intended for
    /// closed-form solutions and synthetic test profiles.
    pub fn from_analytic(
        eos: EquationOfState,
        g: f64,
        rho_c: f64,
        r_bar: f64,
        n_dense: usize,
        i_of_r: &dyn Fn(f64) -> f64,
        m_of_r: &dyn Fn(f64) -> f64,
        di_dr: &dyn Fn(f64) -> f64,
        n_cells: usize,
    ) -> Result<Self, EquilibriumError> {
        let mut ts = Vec::with_capacity(n_dense + 1);
        let mut ys = Vec::with_capacity(n_dense + 1);
        let mut fs = Vec::with_capacity(n_dense + 1);
        for k in 0..=n_dense {
            let r = r_bar * k as f64 / n_dense as f64;
            ts.push(r);
            ys.push([i_of_r(r), m_of_r(r)]);
            // dm/dr = 4 pi r^2 rho
            let rho = eos.rho_from_enthalpy(i_of_r(r).max(0.0));
            fs.push([di_dr(r), 4.0 * std::f64::consts::PI * r * r * rho]);
        }
        let dense = DenseSolution {
            ts,
            ys,
            fs,
            event_fired: true,
            error_accum: 0.0,
        };
        Self::assemble(eos, g, rho_c, Arc::new(dense), n_cells)
    }

    fn assemble(
        eos: EquationOfState,
        g: f64,
        rho_c: f64,
        dense: Arc<DenseSolution<2>>,
        n_cells: usize,
    ) -> Result<Self, EquilibriumError> {
        let r_bar = dense.t_end();
        let mass = dense.y_end()[1];
        let grid = Grid::graded(r_bar, n_cells, 2.0);
        let mut profile = EquilibriumProfile {
            eos,
            g,
            rho_c,
            r_bar,
            mass,
            xs: grid.xs.clone(),
            rho_bar: Vec::new(),
            phi: Vec::new(),
            i_bar: Vec::new(),
            p_bar: Vec::new(),
            error_estimate: dense.error_accum,
            dense,
        };
        let n = profile.xs.len();
        let mut rho = Vec::with_capacity(n);
        let mut phi = Vec::with_capacity(n);
        let mut ib = Vec::with_capacity(n);
        let mut pb = Vec::with_capacity(n);
        for (k, &x) in profile.xs.iter().enumerate() {
            let i = if k + 1 == n { 0.0 } else { profile.sample_i(x) };
            let r = eos.rho_from_enthalpy(i);
            ib.push(i);
            rho.push(r);
            phi.push(profile.phi_at(x));
            pb.push(eos.pressure(r)?);
        }
        profile.rho_bar = rho;
        profile.phi = phi;
        profile.i_bar = ib;
        profile.p_bar = pb;
        Ok(profile)
    }
}

/// Integrate the hydrostatic profile for a given central density.
pub fn integrate_profile(
    eos: EquationOfState,
    rho_c: f64,
    g: f64,
    ode_tol: f64,
    n_cells: usize,
) -> Result<EquilibriumProfile, EquilibriumError> {
    if !(rho_c > 0.0) {
        return Err(EquilibriumError::Invalid(format!(
            "rho_c must be > 0, got {rho_c}"
        )));
    }
    if !(g > 0.0) {
        return Err(EquilibriumError::Invalid(format!("G must be > 0, got {g}")));
    }
    let i_c = eos.enthalpy(rho_c)?;
    let pi = std::f64::consts::PI;

    // length scale from the central curvature i ~ i_c - (2 pi G /3) rho_c r^2
    let r_scale = (3.0 * i_c / (2.0 * pi * g * rho_c)).sqrt();
    let r_max = 1e4 * r_scale;

    // second-order series start removing the central 0/0:
    // i(r)  = i_c - (2 pi G/3) rho_c r^2 + (2 pi^2 G^2/15)(rho_c^2/p'(rho_c)) r^4
    // m(r)  = (4 pi/3) rho_c r^3 - (8 pi^2 G/15)(rho_c^2/p'(rho_c)) r^5
    let r0 = 1e-3 * r_scale;
    let dpc = eos.dp(rho_c)?;
    let c2 = 2.0 * pi * g * rho_c / 3.0;
    let c4 = 2.0 * pi * pi * g * g * rho_c * rho_c / (15.0 * dpc);
    let i0 = i_c - c2 * r0 * r0 + c4 * r0.powi(4);
    let m0 = 4.0 * pi / 3.0 * rho_c * r0.powi(3)
        - 8.0 * pi * pi * g / 15.0 * rho_c * rho_c / dpc * r0.powi(5);

    let rhs = move |r: f64, y: &[f64; 2]| {
        let rho = eos.rho_from_enthalpy(y[0].max(0.0));
        [-g * y[1] / (r * r), 4.0 * pi * r * r * rho]
    };
    let opts = OdeOptions {
        rtol: ode_tol,
        atol: ode_tol * i_c.max(1.0),
        h_init: r0,
        h_max: r_scale / 64.0,
        t_max: r_max,
        max_steps: 2_000_000,
    };
    let sol = integrate_to_event(&rhs, r0, [i0, m0], &|y| y[0], &opts)?;
    if !sol.event_fired {
        return Err(EquilibriumError::Unbound { r_max });
    }

    // prepend the series segment [0, r0] so sampling covers the centre
    let mut ts = vec![0.0];
    let mut ys = vec![[i_c, 0.0]];
    let mut fs = vec![[0.0, 0.0]];
    ts.extend_from_slice(&sol.ts);
    ys.extend_from_slice(&sol.ys);
    fs.extend_from_slice(&sol.fs);
    let dense = DenseSolution {
        ts,
        ys,
        fs,
        event_fired: true,
        // conservative global proxy: accumulated local estimates with an
        // amplification allowance
        error_accum: 20.0 * sol.error_accum,
    };
    EquilibriumProfile::assemble(eos, g, rho_c, Arc::new(dense), n_cells)
}

/// Controls for the mass-shooting solve.
#[derive(Debug, Clone)]
pub struct ShootingConfig {
    pub target_mass: f64,
    pub rho_c_bracket: (f64, f64),
    pub tol_mass: f64,
    pub ode_tol: f64,
    pub max_iter: usize,
    pub n_cells: usize,
}

/// Find the central density whose profile carries the prescribed total
/// mass, by safeguarded secant/bisection on the monotone stable branch.
pub fn solve_for_mass(
    eos: EquationOfState,
    cfg: &ShootingConfig,
    g: f64,
) -> Result<EquilibriumProfile, EquilibriumError> {
    let (lo, hi) = cfg.rho_c_bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(EquilibriumError::Invalid(format!(
            "bad bracket ({lo}, {hi})"
        )));
    }
    if !(cfg.target_mass > 0.0 && cfg.tol_mass > 0.0) {
        return Err(EquilibriumError::Invalid(
            "target mass and tolerance must be positive".into(),
        ));
    }
    let coarse_cells = 64; // profile nodes are only assembled for the final solve
    let mass_at = |rho_c: f64| -> Result<f64, EquilibriumError> {
        Ok(integrate_profile(eos, rho_c, g, cfg.ode_tol, coarse_cells)?.mass)
    };
    let m_lo = mass_at(lo)?;
    let m_hi = mass_at(hi)?;
    let target = cfg.target_mass;
    if (m_lo - target) * (m_hi - target) > 0.0 {
        if target > m_lo.max(m_hi) {
            return Err(EquilibriumError::ExceedsCriticalMass {
                target,
                scanned_max: m_lo.max(m_hi),
            });
        }
        return Err(EquilibriumError::BracketError {
            lo,
            hi,
            m_lo,
            m_hi,
            target,
        });
    }

    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (m_lo - target, m_hi - target);
    let mut best = (a, fa.abs());
    for iter in 0..cfg.max_iter {
        // secant proposal, safeguarded by the bracket midpoint
        let mid = 0.5 * (a + b);
        let sec = if (fb - fa).abs() > 0.0 {
            a - fa * (b - a) / (fb - fa)
        } else {
            mid
        };
        let x = if sec > a && sec < b { sec } else { mid };
        let fx = mass_at(x)? - target;
        if fx.abs() < best.1 {
            best = (x, fx.abs());
        }
        if fx.abs() <= cfg.tol_mass * target {
            return integrate_profile(eos, x, g, cfg.ode_tol, cfg.n_cells);
        }
        if fa * fx <= 0.0 {
            b = x;
            fb = fx;
        } else {
            a = x;
            fa = fx;
        }
        if (b - a) <= f64::EPSILON * b {
            let _ = iter;
            break;
        }
    }
    let final_rel = best.1 / target;
    if final_rel <= cfg.tol_mass {
        return integrate_profile(eos, best.0, g, cfg.ode_tol, cfg.n_cells);
    }
    Err(EquilibriumError::NoConvergence {
        iters: cfg.max_iter,
        best: final_rel,
    })
}

/// One point of the mass curve M(rho_c).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MassCurvePoint {
    pub rho_c: f64,
    pub mass: f64,
    pub radius: f64,
}

/// Result of scanning M(rho_c) over a grid of central densities.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MassCurve {
    pub points: Vec<MassCurvePoint>,
    pub failures: Vec<(f64, String)>,
    /// Running maximum over the scanned grid: a lower estimate of M_c.
    pub m_c_estimate: f64,
    /// True when the last successful sample still attains the running
    /// maximum, i.e. the curve has not turned over inside the grid.
    pub rising_at_edge: bool,
}

/// Scan the mass curve over increasing central densities. Points run
/// concurrently; per-point failures are recorded and the scan continues.
pub fn critical_mass_scan(
    eos: EquationOfState,
    rho_c_grid: &[f64],
    g: f64,
    ode_tol: f64,
) -> MassCurve {
    let results: Vec<(f64, Result<(f64, f64), EquilibriumError>)> = rho_c_grid
        .par_iter()
        .map(|&rc| {
            let r = integrate_profile(eos, rc, g, ode_tol, 16).map(|p| (p.mass, p.r_bar));
            (rc, r)
        })
        .collect();

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (rc, r) in results {
        match r {
            Ok((m, rad)) => points.push(MassCurvePoint {
                rho_c: rc,
                mass: m,
                radius: rad,
            }),
            Err(e) => failures.push((rc, e.to_string())),
        }
    }
    let m_c_estimate = points.iter().map(|p| p.mass).fold(0.0, f64::max);
    let rising_at_edge = points
        .last()
        .map(|p| p.mass >= m_c_estimate * (1.0 - 1e-12))
        .unwrap_or(false);
    MassCurve {
        points,
        failures,
        m_c_estimate,
        rising_at_edge,
    }
}

/// Hydrostatic-balance residual of a profile.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ResidualReport {
    /// Discrete L2 norm of p(rho)_r + G rho m / r^2 over interior nodes.
    pub l2: f64,
    pub max_abs: f64,
    /// Scale for normalization: max |p(rho)_r| over interior nodes.
    pub max_dp_dr: f64,
}

/// Evaluate the balance residual using the integrator's own representation:
/// the pressure gradient as rho * di/dr with di/dr from the dense solution,
/// and the cumulative mass from the integrated m(r).
pub fn equilibrium_residual(profile: &EquilibriumProfile) -> ResidualReport {
    let n = profile.xs.len() - 1;
    let mut sum = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut max_dpdr: f64 = 0.0;
    for j in 1..n {
        let x = profile.xs[j];
        let rho = profile.rho_bar[j];
        let dp_dr = rho * profile.sample_di_dr(x);
        let grav = profile.g * rho * profile.sample_m(x) / (x * x);
        let res = dp_dr + grav;
        let w = 0.5 * (profile.xs[j + 1] - profile.xs[j - 1]);
        sum += res * res * w;
        max_abs = max_abs.max(res.abs());
        max_dpdr = max_dpdr.max(dp_dr.abs());
    }
    ResidualReport {
        l2: sum.sqrt(),
        max_abs,
        max_dp_dr: max_dpdr,
    }
}

/// Two-sided enthalpy-distance bound K8 (Rbar - x) <= i(rho(x)) <= K9 (Rbar - x).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EnthalpyDistanceCheck {
    pub k8: f64,
    pub k9: f64,
    pub pass: bool,
    /// Most negative slack of i - K8 (Rbar - x) over the nodes.
    pub worst_lower: f64,
    /// Most negative slack of K9 (Rbar - x) - i over the nodes.
    pub worst_upper: f64,
    pub tol: f64,
}

pub fn enthalpy_distance_check(profile: &EquilibriumProfile) -> EnthalpyDistanceCheck {
    let tol = 1e-9;
    let k8 = profile.k8();
    let k9 = profile.k9();
    let mut worst_lower = f64::INFINITY;
    let mut worst_upper = f64::INFINITY;
    for (j, &x) in profile.xs.iter().enumerate() {
        let d = profile.r_bar - x;
        let i = profile.i_bar[j];
        worst_lower = worst_lower.min(i - k8 * d);
        worst_upper = worst_upper.min(k9 * d - i);
    }
    EnthalpyDistanceCheck {
        k8,
        k9,
        pass: worst_lower >= -tol && worst_upper >= -tol,
        worst_lower,
        worst_upper,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gamma2_eos() -> EquationOfState {
        EquationOfState::polytrope(1.0, 2.0).unwrap()
    }

    /// Closed-form gamma = 2 solution: rho = rho_c sin(a r)/(a r), a^2 = 2 pi G/kappa.
    fn gamma2_closed_form(rho_c: f64) -> (f64, f64, f64) {
        let a = (2.0 * PI).sqrt();
        let r_bar = PI / a;
        let mass = 4.0 * PI * PI * rho_c / a.powi(3);
        (a, r_bar, mass)
    }

    #[test]
    fn gamma2_radius_and_mass() {
        let (_, r_exact, m_exact) = gamma2_closed_form(1.0);
        let p = integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-10, 256).unwrap();
        assert!(
            ((p.r_bar - r_exact) / r_exact).abs() < 1e-7,
            "Rbar = {}",
            p.r_bar
        );
        assert!(
            ((p.mass - m_exact) / m_exact).abs() < 1e-7,
            "M = {}",
            p.mass
        );
    }

    #[test]
    fn gamma2_radius_independent_of_central_density() {
        let (_, r_exact, _) = gamma2_closed_form(4.0);
        let p = integrate_profile(gamma2_eos(), 4.0, 1.0, 1e-10, 64).unwrap();
        assert!(((p.r_bar - r_exact) / r_exact).abs() < 1e-7);
        assert!(((p.mass - 4.0 * (2.0 * PI).sqrt()) / p.mass).abs() < 1e-7);
    }

    #[test]
    fn central_density_is_initial_condition() {
        for eos in [
            gamma2_eos(),
            EquationOfState::white_dwarf(1.0, 1.0).unwrap(),
        ] {
            let p = integrate_profile(eos, 2.5, 1.0, 1e-10, 64).unwrap();
            assert!(((p.rho_bar[0] - 2.5) / 2.5).abs() < 1e-10);
        }
    }

    #[test]
    fn nodal_density_matches_closed_form() {
        // sin(a x) evaluated as sin(a (Rbar_cf - x)) near the boundary keeps
        // the closed form cancellation-free; error is measured relative to
        // rho_c everywhere and pointwise where the profile is not vanishing
        let (a, r_cf, _) = gamma2_closed_form(1.0);
        let p = integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-10, 512).unwrap();
        let mut worst_central = 0.0f64;
        let mut worst_pointwise = 0.0f64;
        for (j, &x) in p.xs.iter().enumerate() {
            let exact = if x == 0.0 {
                1.0
            } else {
                (a * (r_cf - x)).sin() / (a * x)
            };
            let diff = (p.rho_bar[j] - exact).abs();
            worst_central = worst_central.max(diff);
            if exact > 1e-3 {
                worst_pointwise = worst_pointwise.max(diff / exact);
            }
        }
        assert!(
            worst_central < 1e-7,
            "worst error/rho_c = {worst_central:.3e}"
        );
        assert!(
            worst_pointwise < 1e-7,
            "worst pointwise = {worst_pointwise:.3e}"
        );
    }

    #[test]
    fn central_density_slope_vanishes() {
        let p = integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-10, 128).unwrap();
        // one-sided derivative of rho at x=0, normalized by rho_c/Rbar
        let (x1, x2) = (p.xs[1], p.xs[2]);
        let d = (p.rho_bar[1] - p.rho_bar[0]) / x1;
        let scale = p.rho_c / p.r_bar;
        // rho is even in r: slope is O(x1), small against the profile scale
        assert!((d / scale).abs() < 0.05, "slope ratio {}", d / scale);
        let _ = x2;
    }

    #[test]
    fn enthalpy_identity_against_phi_quadrature() {
        // i(rho(x)) = int_x^Rbar s phi(s) ds to 1e-8 relative
        let p = integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-11, 64).unwrap();
        let n_fine = 20_000;
        for &x in &[0.0, 0.3, 0.7, 1.0] {
            let mut acc = 0.0;
            let h = (p.r_bar - x) / n_fine as f64;
            for k in 0..n_fine {
                let s0 = x + k as f64 * h;
                let s1 = s0 + h;
                acc += 0.5 * h * (s0 * p.phi_at(s0) + s1 * p.phi_at(s1));
            }
            let i = p.sample_i(x);
            assert!(
                ((acc - i) / i.max(1e-300)).abs() < 1e-8,
                "x = {x}: {acc} vs {i}"
            );
        }
    }

    #[test]
    fn mass_monotone_in_central_density() {
        let eos = gamma2_eos();
        let masses: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&rc| integrate_profile(eos, rc, 1.0, 1e-9, 16).unwrap().mass)
            .collect();
        assert!(masses.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn refinement_within_error_estimate() {
        let p1 = integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-8, 16).unwrap();
        let p2 = integrate_profile(gamma2_eos(), 1.0, 1.0, 0.5e-8, 16).unwrap();
        assert!((p1.r_bar - p2.r_bar).abs() <= p1.error_estimate.max(1e-12) * p1.r_bar);
        assert!((p1.mass - p2.mass).abs() <= p1.error_estimate.max(1e-12) * p1.mass);
    }

    #[test]
    fn shooting_recovers_central_density() {
        let eos = gamma2_eos();
        let target = (2.0 * PI).sqrt();
        let cfg = ShootingConfig {
            target_mass: target,
            rho_c_bracket: (0.2, 5.0),
            tol_mass: 1e-8,
            ode_tol: 1e-10,
            max_iter: 60,
            n_cells: 64,
        };
        let p = solve_for_mass(eos, &cfg, 1.0).unwrap();
        assert!(((p.rho_c - 1.0) / 1.0).abs() < 1e-6, "rho_c = {}", p.rho_c);

        let cfg2 = ShootingConfig {
            target_mass: 2.0 * target,
            ..cfg
        };
        let p2 = solve_for_mass(eos, &cfg2, 1.0).unwrap();
        assert!(
            ((p2.rho_c - 2.0) / 2.0).abs() < 1e-6,
            "rho_c = {}",
            p2.rho_c
        );
    }

    #[test]
    fn shooting_error_paths() {
        let eos = EquationOfState::white_dwarf(1.0, 1.0).unwrap();
        // white-dwarf masses on this bracket stay below the plateau; a target
        // above it reports the critical-mass error
        let cfg = ShootingConfig {
            target_mass: 1e9,
            rho_c_bracket: (1.0, 100.0),
            tol_mass: 1e-6,
            ode_tol: 1e-8,
            max_iter: 40,
            n_cells: 32,
        };
        match solve_for_mass(eos, &cfg, 1.0) {
            Err(EquilibriumError::ExceedsCriticalMass { .. }) => {}
            other => panic!("expected ExceedsCriticalMass, got {other:?}"),
        }
        // a target below both bracket masses is a plain bracket error
        let m_lo = integrate_profile(eos, 1.0, 1.0, 1e-8, 16).unwrap().mass;
        let cfg = ShootingConfig {
            target_mass: 0.1 * m_lo,
            ..cfg
        };
        match solve_for_mass(eos, &cfg, 1.0) {
            Err(EquilibriumError::BracketError { .. }) => {}
            other => panic!("expected BracketError, got {other:?}"),
        }
    }

    #[test]
    fn scan_gamma2_is_linear_and_unbounded_at_edge() {
        let eos = gamma2_eos();
        let grid = [1.0, 2.0, 4.0, 8.0];
        let curve = critical_mass_scan(eos, &grid, 1.0, 1e-10);
        assert_eq!(curve.points.len(), 4);
        for w in curve.points.windows(2) {
            let ratio = w[1].mass / w[0].mass;
            assert!((ratio - 2.0).abs() < 1e-7, "ratio = {ratio}");
        }
        assert!(curve.rising_at_edge);
        assert!(curve.failures.is_empty());
    }

    #[test]
    fn scan_empty_grid() {
        let curve = critical_mass_scan(gamma2_eos(), &[], 1.0, 1e-8);
        assert!(curve.points.is_empty());
        assert!(!curve.rising_at_edge);
    }

    #[test]
    fn residual_small_for_solved_profile() {
        let p = integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-10, 4096).unwrap();
        let r = equilibrium_residual(&p);
        assert!(
            r.l2 <= 1e-6 * r.max_dp_dr,
            "l2 = {:e}, scale = {:e}",
            r.l2,
            r.max_dp_dr
        );
    }

    #[test]
    fn residual_drops_when_tolerance_halves() {
        // at 1e-10 the error controller (not the step cap) picks the step
        // size, so the dense-representation residual tracks the tolerance
        let r1 =
            equilibrium_residual(&integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-10, 256).unwrap());
        let r2 =
            equilibrium_residual(&integrate_profile(gamma2_eos(), 1.0, 1.0, 0.5e-10, 256).unwrap());
        assert!(r2.l2 < r1.l2, "r1 = {:e}, r2 = {:e}", r1.l2, r2.l2);
    }

    #[test]
    fn residual_pattern_for_constant_density_fake_profile() {
        // rho = rho0 constant: p_r = 0, so the residual must equal
        // 4 pi G rho0^2 r / 3 pointwise
        let eos = gamma2_eos();
        let rho0 = 1.0;
        let i0 = eos.enthalpy(rho0).unwrap();
        let r_bar = 1.0;
        let p = EquilibriumProfile::from_analytic(
            eos,
            1.0,
            rho0,
            r_bar,
            400,
            &|_r| i0,
            &|r| 4.0 * PI / 3.0 * rho0 * r.powi(3),
            &|_r| 0.0,
            64,
        )
        .unwrap();
        let rep = equilibrium_residual(&p);
        assert!(rep.max_dp_dr.abs() < 1e-12);
        // max over interior nodes of 4 pi G rho0^2 x/3 at the largest interior node
        let x_last = p.xs[p.xs.len() - 2];
        let expect = 4.0 * PI / 3.0 * rho0 * rho0 * x_last;
        assert!((rep.max_abs - expect).abs() / expect < 1e-12);
        assert!(rep.l2 > 0.0);
    }

    #[test]
    fn residual_analytic_gamma2_profile() {
        // closed form sampled analytically: residual only from the dense
        // Hermite representation; bound by its interpolation error
        let (a, r_bar, _) = gamma2_closed_form(1.0);
        let eos = gamma2_eos();
        let n_dense = 2000;
        let p = EquilibriumProfile::from_analytic(
            eos,
            1.0,
            1.0,
            r_bar,
            n_dense,
            &|r| {
                if r == 0.0 {
                    2.0
                } else {
                    2.0 * (a * r).sin() / (a * r)
                }
            },
            &|r| {
                if r == 0.0 {
                    0.0
                } else {
                    4.0 * PI * ((a * r).sin() - a * r * (a * r).cos()) / a.powi(3)
                }
            },
            &|r| {
                if r == 0.0 {
                    0.0
                } else {
                    2.0 * (a * (a * r).cos() / (a * r) - (a * r).sin() / (a * r * r))
                }
            },
            64,
        )
        .unwrap();
        let rep = equilibrium_residual(&p);
        // Hermite derivative error ~ h^3 |i''''| with h = Rbar/2000
        assert!(
            rep.l2 / rep.max_dp_dr < 1e-8,
            "l2/scale = {:e}",
            rep.l2 / rep.max_dp_dr
        );
    }

    #[test]
    fn har1_bounds_hold() {
        for (eos, rho_c) in [
            (gamma2_eos(), 1.0),
            (EquationOfState::polytrope(1.0, 1.5).unwrap(), 1.0),
            (EquationOfState::white_dwarf(1.0, 1.0).unwrap(), 1.0),
            (EquationOfState::white_dwarf(1.0, 1.0).unwrap(), 100.0),
        ] {
            let p = integrate_profile(eos, rho_c, 1.0, 1e-10, 512).unwrap();
            let chk = enthalpy_distance_check(&p);
            assert!(
                chk.pass,
                "worst lower {:e}, worst upper {:e}",
                chk.worst_lower, chk.worst_upper
            );
        }
    }

    #[test]
    fn har1_boundary_node_trivial() {
        let p = integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-10, 64).unwrap();
        let n = p.xs.len() - 1;
        assert_eq!(p.i_bar[n], 0.0);
        let d = p.r_bar - p.xs[n];
        assert_eq!(d, 0.0);
    }

    #[test]
    fn density_strictly_decreasing() {
        for eos in [gamma2_eos(), EquationOfState::white_dwarf(1.0, 1.0).unwrap()] {
            let p = integrate_profile(eos, 1.0, 1.0, 1e-10, 256).unwrap();
            assert!(p.rho_bar.windows(2).all(|w| w[1] < w[0]));
            let n = p.rho_bar.len() - 1;
            assert_eq!(p.rho_bar[n], 0.0);
        }
    }

    #[test]
    fn phi_within_analytic_bounds() {
        let p = integrate_profile(gamma2_eos(), 1.0, 1.0, 1e-10, 128).unwrap();
        let lo = p.mass * p.g / p.r_bar.powi(3);
        let hi = 4.0 * PI * p.g * p.rho_c / 3.0;
        for &ph in &p.phi {
            assert!(ph >= lo * (1.0 - 1e-9) && ph <= hi * (1.0 + 1e-9));
        }
    }
}
