//! Barotropic pressure laws and derived thermodynamic quantities.
//!
//! Two families are implemented behind one enum:
//!
//! - polytropes, p(s) = kappa s^gamma;
//! - the degenerate-electron white-dwarf law, given parametrically by
//!   p(x) = Gamma1 (x (2x^2 - 3) sqrt(x^2 + 1) + 3 asinh x), rho(x) = Gamma2 x^3.
//!
//! Besides p, p' and p'', the module evaluates the specific enthalpy
//! i(s) = int_0^s p'(tau)/tau dtau, the pressure potential
//! A(s) = int_0^s tau^-2 p(tau) dtau, the vacuum exponent
//! gamma_bar = lim_{s->0+} s p'(s)/p(s), and the high-density limit
//! K = lim_{s->inf} s^{-4/3} p(s) that decides whether the critical mass is
//! finite. Structure conditions (s p'/p >= 4/3 and the value of gamma_bar)
//! can be sampled and reported for any instance.
//!
//! All quantities are pure functions of the parameters; instances are Copy
//! and safe to share across threads.

use crate::quad::adaptive_simpson;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EosError {
    #[error("density must be nonnegative, got {0}")]
    NegativeDensity(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("quadrature failed to converge (residual estimate {residual:.3e})")]
    QuadratureFailure { residual: f64 },
}

/// Polytrope parameters: p = kappa rho^gamma.
///
/// The constructor requires kappa > 0 and gamma > 1 (finite enthalpy). The
/// stability range gamma > 4/3 is enforced where it matters: by
/// [`EquationOfState::verify_structure_conditions`] and by the run-config
/// validation, so that sub-critical exponents remain constructible for
/// structure-condition reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolytropeParams {
    pub kappa: f64,
    pub gamma: f64,
}

/// White-dwarf parameters: Gamma1 scales the pressure, Gamma2 the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteDwarfParams {
    pub gamma1: f64,
    pub gamma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquationOfState {
    Polytrope(PolytropeParams),
    WhiteDwarf(WhiteDwarfParams),
}

/// Small-x series of the parametric white-dwarf pressure,
/// p/Gamma1 = 8/5 x^5 - 4/7 x^7 + 1/3 x^9 - 5/22 x^11 + 35/208 x^13 - 21/160 x^15,
/// used below x = 0.1 where the closed form loses digits to cancellation.
const WD_SERIES: [(i32, f64); 6] = [
    (5, 8.0 / 5.0),
    (7, -4.0 / 7.0),
    (9, 1.0 / 3.0),
    (11, -5.0 / 22.0),
    (13, 35.0 / 208.0),
    (15, -21.0 / 160.0),
];
const WD_SERIES_SWITCH: f64 = 0.1;

fn wd_pressure_of_x(x: f64) -> f64 {
    if x < WD_SERIES_SWITCH {
        WD_SERIES.iter().map(|&(k, c)| c * x.powi(k)).sum()
    } else {
        x * (2.0 * x * x - 3.0) * (x * x + 1.0).sqrt() + 3.0 * x.asinh()
    }
}

impl EquationOfState {
    pub fn polytrope(kappa: f64, gamma: f64) -> Result<Self, EosError> {
        if !(kappa > 0.0) {
            return Err(EosError::InvalidParams(format!(
                "kappa must be > 0, got {kappa}"
            )));
        }
        if !(gamma > 1.0) {
            return Err(EosError::InvalidParams(format!(
                "gamma must be > 1, got {gamma}"
            )));
        }
        Ok(Self::Polytrope(PolytropeParams { kappa, gamma }))
    }

    pub fn white_dwarf(gamma1: f64, gamma2: f64) -> Result<Self, EosError> {
        if !(gamma1 > 0.0 && gamma2 > 0.0) {
            return Err(EosError::InvalidParams(format!(
                "white dwarf scales must be > 0, got Gamma1 = {gamma1}, Gamma2 = {gamma2}"
            )));
        }
        Ok(Self::WhiteDwarf(WhiteDwarfParams { gamma1, gamma2 }))
    }

    fn check_density(s: f64) -> Result<(), EosError> {
        if s < 0.0 || s.is_nan() {
            Err(EosError::NegativeDensity(s))
        } else {
            Ok(())
        }
    }

    /// p(s).
    pub fn pressure(&self, s: f64) -> Result<f64, EosError> {
        Self::check_density(s)?;
        Ok(match *self {
            Self::Polytrope(p) => p.kappa * s.powf(p.gamma),
            Self::WhiteDwarf(w) => {
                let x = (s / w.gamma2).cbrt();
                w.gamma1 * wd_pressure_of_x(x)
            }
        })
    }

    /// p'(s) = dp/ds.
    pub fn dp(&self, s: f64) -> Result<f64, EosError> {
        Self::check_density(s)?;
        Ok(match *self {
            Self::Polytrope(p) => {
                if s == 0.0 {
                    0.0
                } else {
                    p.kappa * p.gamma * s.powf(p.gamma - 1.0)
                }
            }
            Self::WhiteDwarf(w) => {
                // dp/drho = (dp/dx)/(drho/dx) = (8/3)(Gamma1/Gamma2) x^2/sqrt(1+x^2)
                let x = (s / w.gamma2).cbrt();
                8.0 / 3.0 * (w.gamma1 / w.gamma2) * x * x / (1.0 + x * x).sqrt()
            }
        })
    }

    /// p''(s); +infinity at s = 0 when the local exponent is below 2.
    pub fn d2p(&self, s: f64) -> Result<f64, EosError> {
        Self::check_density(s)?;
        Ok(match *self {
            Self::Polytrope(p) => {
                if s == 0.0 {
                    if p.gamma > 2.0 {
                        0.0
                    } else if p.gamma == 2.0 {
                        2.0 * p.kappa
                    } else {
                        f64::INFINITY
                    }
                } else {
                    p.kappa * p.gamma * (p.gamma - 1.0) * s.powf(p.gamma - 2.0)
                }
            }
            Self::WhiteDwarf(w) => {
                if s == 0.0 {
                    f64::INFINITY
                } else {
                    let x = (s / w.gamma2).cbrt();
                    8.0 / 9.0 * (w.gamma1 / (w.gamma2 * w.gamma2)) * (2.0 + x * x)
                        / (x * (1.0 + x * x).powf(1.5))
                }
            }
        })
    }

    /// Specific enthalpy i(s) = int_0^s p'(tau)/tau dtau.
    ///
    /// Closed form for polytropes; for the white dwarf the integral is done
    /// adaptively, split at tau = s/2 with the power-law substitution
    /// tau = sigma^{3/2} on the inner half (the integrand behaves like
    /// tau^{-1/3} there, matching the rho^{5/3} small-density asymptote).
    pub fn enthalpy(&self, s: f64) -> Result<f64, EosError> {
        Self::check_density(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        match *self {
            Self::Polytrope(p) => Ok(p.kappa * p.gamma / (p.gamma - 1.0) * s.powf(p.gamma - 1.0)),
            Self::WhiteDwarf(_) => {
                let integrand = |tau: f64| self.dp(tau).unwrap() / tau;
                self.singular_integral(s, &integrand, &|sig: f64| {
                    // (3/2) p'(sigma^{3/2}) / sigma, finite at 0
                    if sig == 0.0 {
                        let d1 = self.wd_d1();
                        1.5 * (5.0 / 3.0) * d1
                    } else {
                        1.5 * self.dp(sig * sig.sqrt()).unwrap() / sig
                    }
                })
            }
        }
    }

    /// Pressure potential A(s) = int_0^s tau^-2 p(tau) dtau; satisfies
    /// A = i - p/s.
    pub fn pressure_potential(&self, s: f64) -> Result<f64, EosError> {
        Self::check_density(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        match *self {
            Self::Polytrope(p) => Ok(p.kappa / (p.gamma - 1.0) * s.powf(p.gamma - 1.0)),
            Self::WhiteDwarf(_) => {
                let integrand = |tau: f64| self.pressure(tau).unwrap() / (tau * tau);
                self.singular_integral(s, &integrand, &|sig: f64| {
                    // (3/2) p(sigma^{3/2}) / sigma^{5/2}, finite at 0
                    if sig == 0.0 {
                        1.5 * self.wd_d1()
                    } else {
                        let tau = sig * sig.sqrt();
                        1.5 * self.pressure(tau).unwrap() / (sig * sig * sig.sqrt())
                    }
                })
            }
        }
    }

    /// Leading small-density coefficient d1 in p ~ d1 rho^{5/3} for the
    /// white dwarf: d1 = (8/5) Gamma1 Gamma2^{-5/3}.
    fn wd_d1(&self) -> f64 {
        match *self {
            Self::WhiteDwarf(w) => 1.6 * w.gamma1 * w.gamma2.powf(-5.0 / 3.0),
            Self::Polytrope(_) => unreachable!("white-dwarf helper"),
        }
    }

    /// int_0^s f(tau) dtau for integrands with an integrable tau^{-1/3}-type
    /// singularity at 0: substituted inner half plus direct outer half.
    fn singular_integral(
        &self,
        s: f64,
        direct: &dyn Fn(f64) -> f64,
        substituted: &dyn Fn(f64) -> f64,
    ) -> Result<f64, EosError> {
        let split = 0.5 * s;
        let sigma_split = split.powf(2.0 / 3.0);
        let inner = adaptive_simpson(&|sig| substituted(sig), 0.0, sigma_split, 1e-12, 1e-300);
        let outer = adaptive_simpson(&|tau| direct(tau), split, s, 1e-12, 1e-300);
        let total = inner.value + outer.value;
        let residual = inner.error_estimate + outer.error_estimate;
        let ok = (inner.converged && outer.converged) || residual <= 1e-10 * total.abs();
        if !ok || !total.is_finite() {
            return Err(EosError::QuadratureFailure { residual });
        }
        Ok(total)
    }

    /// gamma_bar = lim_{s->0+} s p'(s)/p(s); analytic per variant.
    pub fn gamma_bar(&self) -> f64 {
        match *self {
            Self::Polytrope(p) => p.gamma,
            Self::WhiteDwarf(_) => 5.0 / 3.0,
        }
    }

    /// K = lim_{s->inf} s^{-4/3} p(s); +infinity for polytropes above 4/3,
    /// 2 Gamma1 Gamma2^{-4/3} for the white dwarf.
    pub fn kappa_limit(&self) -> f64 {
        match *self {
            Self::Polytrope(p) => {
                if p.gamma > 4.0 / 3.0 {
                    f64::INFINITY
                } else if p.gamma == 4.0 / 3.0 {
                    p.kappa
                } else {
                    0.0
                }
            }
            Self::WhiteDwarf(w) => 2.0 * w.gamma1 * w.gamma2.powf(-4.0 / 3.0),
        }
    }

    /// Monotone inverse of the enthalpy: the density s with i(s) = i_val.
    /// Nonpositive input maps to vacuum (s = 0).
    pub fn rho_from_enthalpy(&self, i_val: f64) -> f64 {
        if i_val <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Polytrope(p) => {
                ((p.gamma - 1.0) * i_val / (p.kappa * p.gamma)).powf(1.0 / (p.gamma - 1.0))
            }
            Self::WhiteDwarf(w) => {
                // i = (8 Gamma1/Gamma2)(sqrt(1+x^2) - 1); invert without
                // cancellation: x^2 = t (t + 2), t = i Gamma2/(8 Gamma1)
                let t = i_val * w.gamma2 / (8.0 * w.gamma1);
                let x = (t * (t + 2.0)).sqrt();
                w.gamma2 * x.powi(3)
            }
        }
    }

    /// Squared sound speed c_s^2 = p'(s).
    pub fn sound_speed_sq(&self, s: f64) -> Result<f64, EosError> {
        self.dp(s)
    }

    /// Sample s p'/p and s p''/p' on a log grid over (0, s_max] and report
    /// the structure conditions: s p'/p >= 4/3 everywhere, and the empirical
    /// vacuum exponent from the smallest samples.
    pub fn verify_structure_conditions(
        &self,
        s_max: f64,
        n_samples: usize,
    ) -> Result<StructureReport, EosError> {
        if !(s_max > 0.0) {
            return Err(EosError::InvalidParams(format!(
                "s_max must be > 0, got {s_max}"
            )));
        }
        if n_samples < 2 {
            return Err(EosError::InvalidParams(format!(
                "need at least 2 samples, got {n_samples}"
            )));
        }
        // log grid spanning 12 decades below s_max
        let lo = s_max * 1e-12;
        let mut ratio_p = Vec::with_capacity(n_samples);
        let mut ratio_pp = Vec::with_capacity(n_samples);
        for k in 0..n_samples {
            let f = k as f64 / (n_samples - 1) as f64;
            let s = lo * (s_max / lo).powf(f);
            let p = self.pressure(s)?;
            let dp = self.dp(s)?;
            let d2p = self.d2p(s)?;
            ratio_p.push(s * dp / p);
            ratio_pp.push(s * d2p / dp);
        }
        let min_p = ratio_p.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_p = ratio_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_pp = ratio_pp.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_pp = ratio_pp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let violations = ratio_p.iter().filter(|&&r| r < 4.0 / 3.0 - 1e-12).count();
        Ok(StructureReport {
            n_samples,
            s_max,
            ratio_p_min: min_p,
            ratio_p_max: max_p,
            ratio_pp_min: min_pp,
            ratio_pp_max: max_pp,
            gamma_bar_empirical: ratio_p[0],
            gamma_bar_analytic: self.gamma_bar(),
            passes: violations == 0,
            violations,
        })
    }
}

/// Result of sampling the structure conditions on a log grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StructureReport {
    pub n_samples: usize,
    pub s_max: f64,
    pub ratio_p_min: f64,
    pub ratio_p_max: f64,
    pub ratio_pp_min: f64,
    pub ratio_pp_max: f64,
    pub gamma_bar_empirical: f64,
    pub gamma_bar_analytic: f64,
    pub passes: bool,
    pub violations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn poly(kappa: f64, gamma: f64) -> EquationOfState {
        EquationOfState::polytrope(kappa, gamma).unwrap()
    }

    fn wd(g1: f64, g2: f64) -> EquationOfState {
        EquationOfState::white_dwarf(g1, g2).unwrap()
    }

    #[test]
    fn polytrope_pressure_values() {
        let e = poly(1.0, 2.0);
        assert_eq!(e.pressure(0.0).unwrap(), 0.0);
        assert_eq!(e.pressure(3.0).unwrap(), 9.0);
        assert!(matches!(
            e.pressure(-1.0),
            Err(EosError::NegativeDensity(_))
        ));
    }

    #[test]
    fn white_dwarf_pressure_at_unit_density() {
        // x = 1: p = -sqrt(2) + 3 ln(1 + sqrt(2)); frozen to 1e-12 from
        // independent high-precision evaluation
        let e = wd(1.0, 1.0);
        let p = e.pressure(1.0).unwrap();
        assert!((p - 1.229_907_198_685_534).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn white_dwarf_series_branch_is_continuous() {
        let e = wd(1.0, 1.0);
        // compare both branches on either side of the switch
        let x = WD_SERIES_SWITCH;
        let s_lo = (x * 0.999_999).powi(3);
        let s_hi = (x * 1.000_001).powi(3);
        let p_lo = e.pressure(s_lo).unwrap();
        let p_hi = e.pressure(s_hi).unwrap();
        assert!(((p_hi - p_lo) / p_hi).abs() < 1e-4);
        // series vs direct formula agree to near machine precision at 0.09
        let s = 0.09f64.powi(3);
        let direct = {
            let x = 0.09;
            x * (2.0 * x * x - 3.0) * (x * x + 1.0f64).sqrt() + 3.0 * x.asinh()
        };
        assert!(((e.pressure(s).unwrap() - direct) / direct).abs() < 1e-8);
    }

    #[test]
    fn polytrope_enthalpy_and_potential_closed_forms() {
        let e = poly(1.0, 2.0);
        assert!((e.enthalpy(1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((e.pressure_potential(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(e.enthalpy(0.0).unwrap(), 0.0);
        assert_eq!(e.pressure_potential(0.0).unwrap(), 0.0);
    }

    #[test]
    fn white_dwarf_enthalpy_against_closed_form_and_bracket() {
        let e = wd(1.0, 1.0);
        let i1 = e.enthalpy(1.0).unwrap();
        // closed form 8 (sqrt(2) - 1) from the parametric law
        assert!((i1 - 3.313_708_498_984_760).abs() < 1e-10, "i = {i1}");
        // Eq-bracket p <= s i <= 4 p
        let p1 = e.pressure(1.0).unwrap();
        assert!(p1 <= i1 && i1 <= 4.0 * p1);
    }

    #[test]
    fn white_dwarf_enthalpy_against_brute_force_panels() {
        // brute-force oracle: composite Simpson at 1e6 panels on the fully
        // regularized substitution tau = u^3 (integrand 3 p'(u^3)/u)
        let e = wd(1.0, 1.0);
        let s: f64 = 1.0;
        let u_max = s.cbrt();
        let n = 1_000_000usize;
        let h = u_max / n as f64;
        let f = |u: f64| {
            if u == 0.0 {
                0.0
            } else {
                3.0 * e.dp(u.powi(3)).unwrap() / u
            }
        };
        let mut acc = f(0.0) + f(u_max);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(k as f64 * h);
        }
        let oracle = acc * h / 3.0;
        let i1 = e.enthalpy(1.0).unwrap();
        assert!(
            ((i1 - oracle) / oracle).abs() < 1e-10,
            "i = {i1}, oracle = {oracle}"
        );
    }

    #[test]
    fn potential_identity_holds_at_random_densities() {
        // i(s) - p(s)/s - A(s) = 0 within quadrature tolerance
        let mut rng = StdRng::seed_from_u64(42);
        for e in [poly(0.7, 1.7), poly(2.0, 2.4), wd(1.3, 0.8)] {
            for _ in 0..100 {
                let s = 10f64.powf(rng.gen_range(-3.0..3.0));
                let i = e.enthalpy(s).unwrap();
                let a = e.pressure_potential(s).unwrap();
                let p = e.pressure(s).unwrap();
                let res = (i - p / s - a).abs();
                assert!(
                    res <= 1e-9 * i.abs().max(1e-300),
                    "s = {s}, residual = {res:e}"
                );
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for e in [poly(1.0, 1.5), poly(0.3, 2.5), wd(1.0, 1.0), wd(2.0, 0.5)] {
            for k in 0..40 {
                let s = 10f64.powf(-3.0 + 6.0 * k as f64 / 39.0);
                let h = s * 1e-5;
                let fd = (e.pressure(s + h).unwrap() - e.pressure(s - h).unwrap()) / (2.0 * h);
                let an = e.dp(s).unwrap();
                assert!(
                    ((fd - an) / an).abs() < 1e-6,
                    "s = {s}: fd = {fd}, analytic = {an}"
                );
                assert!(e.pressure(s).unwrap() > 0.0 && an > 0.0);
            }
        }
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        for e in [poly(1.0, 2.0), wd(1.0, 1.0)] {
            for k in 0..20 {
                let s = 10f64.powf(-2.0 + 4.0 * k as f64 / 19.0);
                let h = s * 1e-4;
                let fd = (e.dp(s + h).unwrap() - e.dp(s - h).unwrap()) / (2.0 * h);
                let an = e.d2p(s).unwrap();
                assert!(((fd - an) / an).abs() < 1e-5, "s = {s}");
            }
        }
    }

    #[test]
    fn gamma_bar_values() {
        assert_eq!(poly(1.0, 1.6).gamma_bar(), 1.6);
        assert_eq!(poly(1.0, 2.0).gamma_bar(), 2.0);
        assert!((wd(1.0, 1.0).gamma_bar() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kappa_limit_values() {
        assert_eq!(poly(1.0, 2.0).kappa_limit(), f64::INFINITY);
        assert!((wd(1.0, 1.0).kappa_limit() - 2.0).abs() < 1e-14);
        assert!((wd(3.0, 8.0).kappa_limit() - 0.375).abs() < 1e-14);
    }

    #[test]
    fn kappa_limit_matches_large_density_evaluation() {
        // evaluate p/rho^{4/3} at x = 1e2 and 1e3 and extrapolate the
        // 1/x^2 correction to confirm the analytic limit
        let e = wd(1.0, 1.0);
        let r1: f64 = 1e2f64.powi(3);
        let r2: f64 = 1e3f64.powi(3);
        let q1 = e.pressure(r1).unwrap() / r1.powf(4.0 / 3.0);
        let q2 = e.pressure(r2).unwrap() / r2.powf(4.0 / 3.0);
        // q(x) = K - 2/x^2 + ...: Richardson with weight 100 removes the tail
        let extrap = (100.0 * q2 - q1) / 99.0;
        assert!((extrap - e.kappa_limit()).abs() < 1e-6, "extrap = {extrap}");
        assert!(q1 < q2 && q2 < e.kappa_limit(), "monotone from below");
    }

    #[test]
    fn rho_from_enthalpy_round_trips() {
        for e in [poly(1.0, 2.0), poly(0.4, 1.6), wd(1.0, 1.0), wd(0.5, 2.0)] {
            for k in 0..20 {
                let s = 10f64.powf(-4.0 + 8.0 * k as f64 / 19.0);
                let i = e.enthalpy(s).unwrap();
                let back = e.rho_from_enthalpy(i);
                assert!(((back - s) / s).abs() < 1e-9, "s = {s}, back = {back}");
            }
            assert_eq!(e.rho_from_enthalpy(0.0), 0.0);
            assert_eq!(e.rho_from_enthalpy(-1.0), 0.0);
        }
    }

    #[test]
    fn structure_conditions_polytropes() {
        let r = poly(1.0, 1.5)
            .verify_structure_conditions(10.0, 64)
            .unwrap();
        assert!(r.passes);
        assert!((r.ratio_p_min - 1.5).abs() < 1e-12 && (r.ratio_p_max - 1.5).abs() < 1e-12);

        let r = poly(1.0, 1.3)
            .verify_structure_conditions(10.0, 64)
            .unwrap();
        assert!(!r.passes);
    }

    #[test]
    fn structure_conditions_white_dwarf() {
        let r = wd(1.0, 1.0).verify_structure_conditions(1e6, 200).unwrap();
        assert!(r.passes, "min ratio {}", r.ratio_p_min);
        // ratio decreases from ~5/3 toward 4/3: empirical gamma_bar near 5/3
        assert!((r.gamma_bar_empirical - 5.0 / 3.0).abs() < 1e-3);
        assert!(r.ratio_p_min >= 4.0 / 3.0 - 1e-9);
        assert!(r.ratio_p_max <= 5.0 / 3.0 + 1e-9);
    }

    #[test]
    fn white_dwarf_small_density_asymptote() {
        // p/rho^{5/3} -> (8/5) Gamma1 Gamma2^{-5/3} within 1% for x <= 1e-2
        for (g1, g2) in [(1.0, 1.0), (2.0, 0.7)] {
            let e = wd(g1, g2);
            let d1 = 1.6 * g1 * g2.powf(-5.0 / 3.0);
            for x in [1e-2, 1e-3] {
                let rho = g2 * x * x * x;
                let q = e.pressure(rho).unwrap() / rho.powf(5.0 / 3.0);
                assert!(((q - d1) / d1).abs() < 0.01, "x = {x}: {q} vs {d1}");
            }
        }
    }
}
