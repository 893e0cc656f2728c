//! Energy functionals, weighted norms, sup-norm panel and decay-rate fits.
//!
//! Everything the stability theory bounds is computed here from a state
//! snapshot:
//!
//! - the top-level functional
//!   E(t) = ||(r_x-1, v_x)||^2_inf + ||rhobar^{1/2} v_t||^2_2
//!          + ||rhobar^{-1/2} p(rhobar) ((r/x)_x, r_xx)||^2_2;
//! - the lower-order pairs E_0..E_2, D_0..D_2;
//! - the weighted functionals scrE_0, scrD_0, scrD_1 with the singular
//!   weight i(rhobar)^{-alpha}, alpha = 1 - theta;
//! - the pointwise functionals eta (pressure part of the Lyapunov
//!   functional) and eta_0 (viscous Bregman-type terms), and the Lyapunov
//!   function E_1/2 + int x^2 eta dx, which decays along solutions;
//! - the sup-norm panel of the decay theorems, including the measured
//!   vacuum-equivalence ratio between i(rho) and the distance to the
//!   moving boundary;
//! - predicted decay exponents (zeta = 1 - 1/(2 gamma_bar) - theta/2 and
//!   friends) and one-sided log-log decay fits of measured series.
//!
//! v_t always comes from the momentum equation, never from differencing
//! snapshots in time: the fits would otherwise inherit step-size noise.

use std::collections::BTreeMap;

use crate::eos::EosError;
use crate::simulator::{momentum_rhs, SimError, SimState};

#[derive(Debug, thiserror::Error)]
pub enum DiagError {
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("theta = {theta} outside the admissible interval (0, {max:.6}]")]
    ThetaOutOfRange { theta: f64, max: f64 },
    #[error("gamma_bar = {0} must exceed 4/3")]
    GammaBarTooSmall(f64),
    #[error("decay fit needs at least {need} samples in the window, found {found}")]
    TooFewSamples { need: usize, found: usize },
    #[error("decay fit window must start at t >= 1, got {0}")]
    WindowTooEarly(f64),
    #[error("nonpositive series value {value:.3e} at t = {t} cannot be log-fitted")]
    NonpositiveValue { t: f64, value: f64 },
}

/// Sampling controls for the diagnostic series.
#[derive(Debug, Clone)]
pub struct DiagnosticsConfig {
    /// Weight exponent parameter theta in (0, 1 - 5/(4 gamma_bar)].
    pub theta: f64,
    /// Interior margin l for the D^{i,j} subinterval [0, Rbar - l];
    /// None means Rbar/4.
    pub l: Option<f64>,
    pub fit_t_lo: f64,
    pub fit_t_hi: f64,
    pub slack: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            theta: 0.1,
            l: None,
            fit_t_lo: 10.0,
            fit_t_hi: 100.0,
            slack: 0.15,
        }
    }
}

/// Nodal maxima of the quantities the decay theorems bound.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SupNormPanel {
    pub r_minus_x: f64,
    pub v: f64,
    pub x12_v: f64,
    pub x32_vx: f64,
    pub vx: f64,
    pub v_over_x: f64,
    pub rx_minus_1: f64,
    pub r_over_x_minus_1: f64,
    /// sup of rhobar^{(3 gamma_bar - 2)/4} |Q|, Q = x^2/(r^2 r_x) - 1.
    pub rho_pow_q: f64,
    /// sup of rhobar |Q|.
    pub rho_q: f64,
    /// Measured vacuum-equivalence constant: worst two-sided ratio between
    /// i(rho) and the distance R(t) - r to the moving boundary.
    pub vacuum_ratio: f64,
}

impl SupNormPanel {
    pub const COLUMNS: [&'static str; 11] = [
        "sup_r_minus_x",
        "sup_v",
        "sup_x12_v",
        "sup_x32_vx",
        "sup_vx",
        "sup_v_over_x",
        "sup_rx_minus_1",
        "sup_r_over_x_minus_1",
        "sup_rho_pow_q",
        "sup_rho_q",
        "vac_ratio_c",
    ];

    pub fn as_row(&self) -> [f64; 11] {
        [
            self.r_minus_x,
            self.v,
            self.x12_v,
            self.x32_vx,
            self.vx,
            self.v_over_x,
            self.rx_minus_1,
            self.r_over_x_minus_1,
            self.rho_pow_q,
            self.rho_q,
            self.vacuum_ratio,
        ]
    }

    pub fn as_map(&self) -> BTreeMap<&'static str, f64> {
        Self::COLUMNS.iter().copied().zip(self.as_row()).collect()
    }
}

/// One time slice of every diagnostic functional.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub frak_e: f64,
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub scr_e0: f64,
    pub scr_d0: f64,
    pub scr_d1: f64,
    pub eta_total: f64,
    pub lyapunov: f64,
    pub sup: SupNormPanel,
}

/// Nodal perturbation fields. Everything downstream is built from the
/// departures dr = r - x, b = r_x - 1 and e = r/x - 1 rather than from r
/// and r_x directly: the functionals are quadratic in these departures, and
/// forming them first keeps the evaluation free of the O(1) cancellations
/// that would otherwise floor the decayed signal at absolute roundoff.
struct Fields {
    /// r - x.
    dr: Vec<f64>,
    /// r_x - 1 (stencil applied to dr).
    b: Vec<f64>,
    /// r/x - 1, centre limit b[0].
    e: Vec<f64>,
    vx: Vec<f64>,
    /// v/x, centre limit v_x(0).
    vox: Vec<f64>,
}

fn fields(state: &SimState) -> Fields {
    let xs = &state.setup.grid.xs;
    let dr: Vec<f64> = state.r.iter().zip(xs).map(|(&r, &x)| r - x).collect();
    let b = state.setup.grid.deriv(&dr);
    let mut e: Vec<f64> = dr
        .iter()
        .zip(xs)
        .map(|(&d, &x)| if x > 0.0 { d / x } else { 0.0 })
        .collect();
    e[0] = b[0];
    Fields {
        dr,
        b,
        e,
        vx: state.v_x(),
        vox: state.v_over_x(),
    }
}

/// Relative density defect Q = x^2/(r^2 r_x) - 1 at the nodes, evaluated in
/// perturbation form:
/// Q = -(2e + b + e^2 + 2eb + e^2 b) / ((1+e)^2 (1+b)).
fn density_defect(f: &Fields) -> Vec<f64> {
    f.e.iter()
        .zip(&f.b)
        .map(|(&e, &b)| {
            let num = 2.0 * e + b + e * e + 2.0 * e * b + e * e * b;
            -num / ((1.0 + e) * (1.0 + e) * (1.0 + b))
        })
        .collect()
}

/// The top-level energy functional. `v_t` must come from [`momentum_rhs`].
pub fn frak_e(state: &SimState, v_t: &[f64]) -> f64 {
    let s = &state.setup;
    let f = fields(state);
    let n = s.n_cells();

    let sup: f64 = (0..=n)
        .map(|j| f.b[j] * f.b[j] + f.vx[j] * f.vx[j])
        .fold(0.0, f64::max);

    let vt_sq: Vec<f64> = (0..=n).map(|j| s.rho_node[j] * v_t[j] * v_t[j]).collect();
    let l2_vt = s.grid.trapz(&vt_sq);

    // weight rhobar^{-1} p(rhobar)^2 vanishes at the boundary
    let rox_x = s.grid.deriv(&f.e);
    let rxx = s.grid.second_deriv(&f.dr);
    let third: Vec<f64> = (0..=n)
        .map(|j| {
            if s.rho_node[j] == 0.0 {
                0.0
            } else {
                s.p_node[j] * s.p_node[j] / s.rho_node[j] * (rox_x[j] * rox_x[j] + rxx[j] * rxx[j])
            }
        })
        .collect();
    sup + l2_vt + s.grid.trapz(&third)
}

/// The lower-order functional family of the basic energy lemma.
#[derive(Debug, Clone, Copy)]
pub struct LowerEnergies {
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn lower_energies(state: &SimState, v_t: &[f64]) -> LowerEnergies {
    let s = &state.setup;
    let f = fields(state);
    let n = s.n_cells();
    let xs = &s.grid.xs;

    let mut e0 = vec![0.0; n + 1];
    let mut d0 = vec![0.0; n + 1];
    let mut e1 = vec![0.0; n + 1];
    let mut e2 = vec![0.0; n + 1];
    let mut d1 = vec![0.0; n + 1];
    let mut d2 = vec![0.0; n + 1];
    let vtx = s.grid.deriv(v_t);
    for j in 0..=n {
        let x = xs[j];
        let dr = f.dr[j];
        let drx = f.b[j];
        let base = dr * dr + x * x * drx * drx;
        e0[j] = base;
        d0[j] = s.p_node[j] * base;
        e1[j] = x * x * s.rho_node[j] * state.v[j] * state.v[j];
        e2[j] = x * x * s.rho_node[j] * v_t[j] * v_t[j];
        d1[j] = state.v[j] * state.v[j] + x * x * f.vx[j] * f.vx[j];
        d2[j] = v_t[j] * v_t[j] + x * x * vtx[j] * vtx[j];
    }
    LowerEnergies {
        e0: s.grid.trapz(&e0),
        e1: s.grid.trapz(&e1),
        e2: s.grid.trapz(&e2),
        d0: s.grid.trapz(&d0),
        d1: s.grid.trapz(&d1),
        d2: s.grid.trapz(&d2),
    }
}

/// Integrate W(x) f(x) dx with the singular weight W = i(rhobar)^{-alpha}:
/// plain trapezoid on the inner half, and trapezoid in the substituted
/// variable u = (Rbar - x)^{1-alpha} on the boundary half, where
/// i^{-alpha} = [i/(Rbar-x)]^{-alpha} (Rbar-x)^{-alpha} and the bracketed
/// ratio extends continuously to G M / Rbar^2 at the boundary.
fn weighted_integral(state: &SimState, alpha: f64, f_nodes: &[f64]) -> f64 {
    let s = &state.setup;
    let n = s.n_cells();
    let xs = &s.grid.xs;
    let r_bar = s.profile.r_bar;
    let js = xs.partition_point(|&x| x < 0.5 * r_bar).min(n - 1);

    // inner part: nodes 0..=js, ordinary trapezoid
    let mut inner = 0.0;
    for j in 0..js {
        let w0 = s.i_node[j].powf(-alpha) * f_nodes[j];
        let w1 = s.i_node[j + 1].powf(-alpha) * f_nodes[j + 1];
        inner += 0.5 * (w0 + w1) * (xs[j + 1] - xs[j]);
    }

    // boundary part in u = (Rbar - x)^{1-alpha}
    let c_end = s.profile.g * s.profile.mass / (r_bar * r_bar);
    let one_m_alpha = 1.0 - alpha;
    let g_of = |j: usize| -> f64 {
        let d = r_bar - xs[j];
        let c = if j == n { c_end } else { s.i_node[j] / d };
        c.powf(-alpha) * f_nodes[j] / one_m_alpha
    };
    let mut outer = 0.0;
    for j in js..n {
        let u0 = (r_bar - xs[j]).powf(one_m_alpha);
        let u1 = (r_bar - xs[j + 1]).powf(one_m_alpha);
        outer += 0.5 * (g_of(j) + g_of(j + 1)) * (u0 - u1);
    }
    inner + outer
}

/// Weighted functionals (scrE_0, scrD_0, scrD_1) at the given theta.
pub fn weighted_energies(state: &SimState, theta: f64) -> Result<(f64, f64, f64), DiagError> {
    let gb = state.setup.eos.gamma_bar();
    check_theta(gb, theta)?;
    let alpha = 1.0 - theta;
    let s = &state.setup;
    let f = fields(state);
    let n = s.n_cells();
    let xs = &s.grid.xs;

    let mut base = vec![0.0; n + 1];
    let mut pbase = vec![0.0; n + 1];
    let mut vterm = vec![0.0; n + 1];
    for j in 0..=n {
        let x = xs[j];
        let dr = f.dr[j];
        let drx = f.b[j];
        base[j] = dr * dr + x * x * drx * drx;
        pbase[j] = s.p_node[j] * base[j];
        vterm[j] = state.v[j] * state.v[j] + x * x * f.vx[j] * f.vx[j];
    }
    Ok((
        weighted_integral(state, alpha, &base),
        weighted_integral(state, alpha, &pbase),
        weighted_integral(state, alpha, &vterm),
    ))
}

/// eta, eta_0 and the Lyapunov function.
#[derive(Debug, Clone, Copy)]
pub struct EtaFunctionals {
    /// int x^2 eta dx.
    pub eta_total: f64,
    /// int x^2 eta_0 dx.
    pub eta0_total: f64,
    /// E_1/2 + int x^2 eta dx; nonincreasing along solutions.
    pub lyapunov: f64,
}

// 8-point Gauss-Legendre nodes/weights on [0, 1].
const GL8: [(f64, f64); 8] = [
    (0.019855071751231884, 0.050614268145188130),
    (0.101666761293186630, 0.111190517226687235),
    (0.237233795041835507, 0.156853322938943644),
    (0.408282678752175098, 0.181341891689180991),
    (0.591717321247824902, 0.181341891689180991),
    (0.762766204958164493, 0.156853322938943644),
    (0.898333238706813370, 0.111190517226687235),
    (0.980144928248768116, 0.050614268145188130),
];

/// Second-order Taylor remainder of the pressure potential,
/// R_A(s, d) = A(s+d) - A(s) - A'(s) d = d^2 int_0^1 (1-th) A''(s + th d) dth,
/// with A''(t) = p'(t)/t^2 - 2 p(t)/t^3. Quadrature keeps the remainder
/// accurate when |d| << s, where the direct difference would cancel.
fn pressure_potential_remainder(
    eos: &crate::eos::EquationOfState,
    s: f64,
    d: f64,
) -> Result<f64, DiagError> {
    let mut acc = 0.0;
    for (th, w) in GL8 {
        let tau = s + th * d;
        let a2 = eos.dp(tau)? / (tau * tau) - 2.0 * eos.pressure(tau)? / (tau * tau * tau);
        acc += w * (1.0 - th) * a2;
    }
    Ok(d * d * acc)
}

/// Pointwise eta at the nodes:
/// eta = rhobar A(varrho) + p(rhobar)(x^2 r_x/r^2 - 4x/r) - rhobar A(rhobar) + 3 p(rhobar).
///
/// Evaluated in the algebraically equivalent remainder form
/// eta = rhobar R_A(rhobar, rhobar Q) + p(rhobar) (2a^2 + w^2 b^2/(1+b)),
/// a = -e/(1+e), w = 1/(1+e), which is exact in the perturbation fields and
/// avoids the O(p) cancellations of the defining expression.
pub fn eta_nodes(state: &SimState) -> Result<Vec<f64>, DiagError> {
    let s = &state.setup;
    let f = fields(state);
    let q = density_defect(&f);
    let n = s.n_cells();
    let mut eta = vec![0.0; n + 1];
    for j in 0..=n {
        let rho = s.rho_node[j];
        if rho == 0.0 {
            continue;
        }
        let e = f.e[j];
        let b = f.b[j];
        let a = -e / (1.0 + e);
        let w2 = 1.0 / ((1.0 + e) * (1.0 + e));
        let quad = 2.0 * a * a + w2 * b * b / (1.0 + b);
        let rem = pressure_potential_remainder(&s.eos, rho, rho * q[j])?;
        eta[j] = rho * rem + s.p_node[j] * quad;
    }
    Ok(eta)
}

/// w - ln w - 1 at w = 1 + z, accurate for small z.
fn bregman(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        // z^2/2 - z^3/3 + z^4/4 - z^5/5
        z * z * (0.5 + z * (-1.0 / 3.0 + z * (0.25 - 0.2 * z)))
    } else {
        (1.0 + z) - (1.0 + z).ln() - 1.0
    }
}

/// Pointwise eta_0 (viscous Bregman terms), nonnegative whenever r_x > 0
/// and r/x > 0:
/// eta_0 = 4 nu1 [ln(r/(x r_x)) + x r_x/r - 1]
///       + 3 nu2 [r^2 r_x/x^2 - ln(r^2 r_x/x^2) - 1].
pub fn eta0_nodes(state: &SimState) -> Vec<f64> {
    let s = &state.setup;
    let f = fields(state);
    let n = s.n_cells();
    let mut eta0 = vec![0.0; n + 1];
    for j in 0..=n {
        let e = f.e[j];
        let b = f.b[j];
        // x r_x / r = 1 + z1, z1 = (b - e)/(1 + e)
        let z1 = (b - e) / (1.0 + e);
        // r^2 r_x / x^2 = 1 + z2
        let z2 = 2.0 * e + b + e * e + 2.0 * e * b + e * e * b;
        eta0[j] = 4.0 * s.nu1 * bregman(z1) + 3.0 * s.nu2 * bregman(z2);
    }
    eta0
}

pub fn eta_functionals(state: &SimState) -> Result<EtaFunctionals, DiagError> {
    let s = &state.setup;
    let xs = &s.grid.xs;
    let eta = eta_nodes(state)?;
    let eta0 = eta0_nodes(state);
    let x2eta: Vec<f64> = xs.iter().zip(&eta).map(|(&x, &e)| x * x * e).collect();
    let x2eta0: Vec<f64> = xs.iter().zip(&eta0).map(|(&x, &e)| x * x * e).collect();
    let eta_total = s.grid.trapz(&x2eta);
    let eta0_total = s.grid.trapz(&x2eta0);

    let e1: Vec<f64> = (0..xs.len())
        .map(|j| xs[j] * xs[j] * s.rho_node[j] * state.v[j] * state.v[j])
        .collect();
    let lyapunov = 0.5 * s.grid.trapz(&e1) + eta_total;
    Ok(EtaFunctionals {
        eta_total,
        eta0_total,
        lyapunov,
    })
}

/// Nodal maxima of the theorem quantities plus the measured
/// vacuum-equivalence ratio.
pub fn sup_norm_panel(state: &SimState) -> Result<SupNormPanel, DiagError> {
    let s = &state.setup;
    let f = fields(state);
    let n = s.n_cells();
    let xs = &s.grid.xs;
    let q = density_defect(&f);
    let gb = s.eos.gamma_bar();
    let w_exp = (3.0 * gb - 2.0) / 4.0;

    let mut p = SupNormPanel {
        r_minus_x: 0.0,
        v: 0.0,
        x12_v: 0.0,
        x32_vx: 0.0,
        vx: 0.0,
        v_over_x: 0.0,
        rx_minus_1: 0.0,
        r_over_x_minus_1: 0.0,
        rho_pow_q: 0.0,
        rho_q: 0.0,
        vacuum_ratio: 0.0,
    };
    for j in 0..=n {
        let x = xs[j];
        p.r_minus_x = p.r_minus_x.max(f.dr[j].abs());
        p.v = p.v.max(state.v[j].abs());
        p.x12_v = p.x12_v.max(x.sqrt() * state.v[j].abs());
        p.x32_vx = p.x32_vx.max(x.powf(1.5) * f.vx[j].abs());
        p.vx = p.vx.max(f.vx[j].abs());
        p.v_over_x = p.v_over_x.max(f.vox[j].abs());
        p.rx_minus_1 = p.rx_minus_1.max(f.b[j].abs());
        p.r_over_x_minus_1 = p.r_over_x_minus_1.max(f.e[j].abs());
        p.rho_pow_q = p.rho_pow_q.max(s.rho_node[j].powf(w_exp) * q[j].abs());
        p.rho_q = p.rho_q.max(s.rho_node[j] * q[j].abs());
    }

    // vacuum-equivalence ratio over interior nodes (the boundary node is
    // the moving boundary itself)
    let rho = crate::simulator::density_field(state)?;
    let r_t = state.r[n];
    let mut c: f64 = 0.0;
    for j in 0..n {
        let d = r_t - state.r[j];
        let i = s.eos.enthalpy(rho[j])?;
        if d > 0.0 && i > 0.0 {
            c = c.max((i / d).max(d / i));
        }
    }
    p.vacuum_ratio = c;
    Ok(p)
}

/// Full diagnostic slice at the current state.
pub fn energy_report(state: &SimState, cfg: &DiagnosticsConfig) -> Result<EnergyReport, DiagError> {
    let v_t = momentum_rhs(state)?;
    let low = lower_energies(state, &v_t);
    let (scr_e0, scr_d0, scr_d1) = weighted_energies(state, cfg.theta)?;
    let etas = eta_functionals(state)?;
    let sup = sup_norm_panel(state)?;
    Ok(EnergyReport {
        t: state.t,
        frak_e: frak_e(state, &v_t),
        e0: low.e0,
        e1: low.e1,
        e2: low.e2,
        d0: low.d0,
        d1: low.d1,
        d2: low.d2,
        scr_e0,
        scr_d0,
        scr_d1,
        eta_total: etas.eta_total,
        lyapunov: etas.lyapunov,
        sup,
    })
}

/// D^{i,j} norm quantities; the j = 1 integrals live on [0, Rbar - l].
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DijReport {
    pub l: f64,
    pub sup_d00: f64,
    pub sup_d10: f64,
    /// sup of D^{0,0} over the interior subinterval [0, Rbar - l].
    pub sup_d00_sub: f64,
    /// int_0^{Rbar-l} D^{0,1} dx.
    pub int_d01_sub: f64,
    /// int_0^{Rbar-l} D^{1,1} dx.
    pub int_d11_sub: f64,
}

pub fn dij_quantities(state: &SimState, l: Option<f64>) -> DijReport {
    let s = &state.setup;
    let f = fields(state);
    let n = s.n_cells();
    let xs = &s.grid.xs;
    let r_bar = s.profile.r_bar;
    let l = l.unwrap_or(r_bar / 4.0);
    let x_cut = r_bar - l;

    let rox_x = s.grid.deriv(&f.e);
    let rxx = s.grid.second_deriv(&f.dr);
    let vox_x = s.grid.deriv(&f.vox);
    let vxx = s.grid.second_deriv(&state.v);

    let mut sup_d00: f64 = 0.0;
    let mut sup_d10: f64 = 0.0;
    let mut sup_d00_sub: f64 = 0.0;
    let mut d01 = Vec::new();
    let mut d11 = Vec::new();
    let mut sub_xs = Vec::new();
    for j in 0..=n {
        let d00 = f.e[j].powi(2) + f.b[j].powi(2);
        let d10 = f.vox[j].powi(2) + f.vx[j].powi(2);
        sup_d00 = sup_d00.max(d00);
        sup_d10 = sup_d10.max(d10);
        if xs[j] <= x_cut {
            sup_d00_sub = sup_d00_sub.max(d00);
            d01.push(rox_x[j].powi(2) + rxx[j].powi(2));
            d11.push(vox_x[j].powi(2) + vxx[j].powi(2));
            sub_xs.push(xs[j]);
        }
    }
    let trapz_sub = |f: &[f64]| -> f64 {
        let mut acc = 0.0;
        for k in 1..f.len() {
            acc += 0.5 * (f[k] + f[k - 1]) * (sub_xs[k] - sub_xs[k - 1]);
        }
        acc
    };
    DijReport {
        l,
        sup_d00,
        sup_d10,
        sup_d00_sub,
        int_d01_sub: trapz_sub(&d01),
        int_d11_sub: trapz_sub(&d11),
    }
}

// ---------------------------------------------------------------------------
// theorem rates and decay fits
// ---------------------------------------------------------------------------

fn check_theta(gamma_bar: f64, theta: f64) -> Result<(), DiagError> {
    if !(gamma_bar > 4.0 / 3.0) {
        return Err(DiagError::GammaBarTooSmall(gamma_bar));
    }
    let max = 1.0 - 5.0 / (4.0 * gamma_bar);
    if !(theta > 0.0 && theta <= max + 1e-15) {
        return Err(DiagError::ThetaOutOfRange { theta, max });
    }
    Ok(())
}

/// Predicted decay exponents of the stability theorem for a given
/// (gamma_bar, theta). Entries whose side conditions fail are absent.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TheoremRates {
    pub gamma_bar: f64,
    pub theta: f64,
    /// zeta = 1 - 1/(2 gamma_bar) - theta/2.
    pub zeta: f64,
    /// Upsilon = 1 for gamma_bar <= 2, else 0.
    pub upsilon: u8,
    pub rates: BTreeMap<String, f64>,
}

pub fn theorem_rates(gamma_bar: f64, theta: f64) -> Result<TheoremRates, DiagError> {
    check_theta(gamma_bar, theta)?;
    let zeta = 1.0 - 1.0 / (2.0 * gamma_bar) - theta / 2.0;
    let upsilon = if gamma_bar <= 2.0 { 1u8 } else { 0u8 };
    let mut rates = BTreeMap::new();
    rates.insert("two_zeta".into(), 2.0 * zeta);
    rates.insert("two_zeta_minus_one".into(), 2.0 * zeta - 1.0);
    rates.insert("two_zeta_minus_half".into(), 2.0 * zeta - 0.5);
    if upsilon == 1 {
        rates.insert(
            "displacement_upsilon".into(),
            2.0 - 2.0 / gamma_bar - 1.5 * theta,
        );
    }
    if gamma_bar > 2.0 && gamma_bar < 4.0 && theta < (4.0 - gamma_bar) / (gamma_bar - 1.0) {
        let first = (4.0 - gamma_bar) / (2.0 * gamma_bar)
            - theta
                * ((gamma_bar - 1.0) / (2.0 * gamma_bar)
                    + (4.0 - gamma_bar - theta * (gamma_bar - 1.0)) / (4.0 * gamma_bar - 2.0));
        rates.insert("density_defect_min".into(), first.min(2.0 * zeta - 1.0));
    }
    Ok(TheoremRates {
        gamma_bar,
        theta,
        zeta,
        upsilon,
        rates,
    })
}

/// Fitted algebraic decay exponent of a measured series against the
/// theorem's prediction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DecayFit {
    pub quantity: String,
    pub window: (f64, f64),
    pub fitted_exponent: f64,
    pub r_squared: f64,
    pub predicted_exponent: f64,
    pub slack: f64,
    /// One-sided verdict: the series decays at least as fast as predicted,
    /// fitted <= -predicted + slack.
    pub verdict: bool,
    pub n_samples: usize,
    /// Fitted log-prefactor (intercept); reported, never judged.
    pub log_prefactor: f64,
}

/// Least-squares slope of log(value) against log(1 + t) over the window.
pub fn fit_decay(
    quantity: &str,
    series: &[(f64, f64)],
    window: (f64, f64),
    predicted: f64,
    slack: f64,
) -> Result<DecayFit, DiagError> {
    if window.0 < 1.0 {
        return Err(DiagError::WindowTooEarly(window.0));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .copied()
        .collect();
    if pts.len() < 10 {
        return Err(DiagError::TooFewSamples {
            need: 10,
            found: pts.len(),
        });
    }
    for &(t, v) in &pts {
        if !(v > 0.0) {
            return Err(DiagError::NonpositiveValue { t, value: v });
        }
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let nf = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    Ok(DecayFit {
        quantity: quantity.to_string(),
        window,
        fitted_exponent: slope,
        r_squared,
        predicted_exponent: predicted,
        slack,
        verdict: slope <= -predicted + slack,
        n_samples: pts.len(),
        log_prefactor: my - slope * mx,
    })
}
