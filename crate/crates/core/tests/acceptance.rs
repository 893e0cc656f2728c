//! Acceptance suite: every stated criterion runs at its stated tolerance
//! and prints one pass/fail line (run with `-- --nocapture` to see them).
//!
//! The two long perturbed runs (gamma = 2 and gamma = 5/3) are shared
//! fixtures: criteria 6, 7 and 8 all read the same trajectories.

use std::f64::consts::PI;
use std::sync::{Arc, LazyLock};
use std::time::Instant;

use starstab::diagnostics::{
    self, energy_report, eta_functionals, fit_decay, frak_e, lower_energies, weighted_energies,
    DiagnosticsConfig,
};
use starstab::eos::EquationOfState;
use starstab::equilibrium::{
    critical_mass_scan, enthalpy_distance_check, integrate_profile, EquilibriumProfile,
};
use starstab::simulator::{
    make_compatible_perturbation, momentum_rhs, run, PerturbationKind, SimConfig, SimSetup,
    SimState, Trajectory,
};

fn gamma2() -> EquationOfState {
    EquationOfState::polytrope(1.0, 2.0).unwrap()
}

fn gamma53() -> EquationOfState {
    EquationOfState::polytrope(1.0, 5.0 / 3.0).unwrap()
}

fn verdict(name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {name} failed: {detail}");
}

struct RunData {
    setup: Arc<SimSetup>,
    traj: Trajectory,
    wall_s: f64,
}

fn perturbed_run(eos: EquationOfState) -> RunData {
    let profile = Arc::new(integrate_profile(eos, 1.0, 1.0, 1e-10, 512).unwrap());
    let setup = SimSetup::new(eos, profile, 512, 2.0, 0.2, 0.2).unwrap();
    let (r0, v0, _) =
        make_compatible_perturbation(&setup, PerturbationKind::VelocityBump, 1e-3).unwrap();
    let cfg = SimConfig {
        n_cells: 512,
        t_final: 100.0,
        snapshot_every: 0.5,
        ..Default::default()
    };
    let diag = DiagnosticsConfig {
        theta: 0.1,
        ..Default::default()
    };
    let t0 = Instant::now();
    let traj = run(&setup, r0, v0, &cfg, &diag).unwrap();
    let wall_s = t0.elapsed().as_secs_f64();
    assert!(traj.failure.is_none(), "run failed: {:?}", traj.failure);
    RunData {
        setup,
        traj,
        wall_s,
    }
}

static RUN_G2: LazyLock<RunData> = LazyLock::new(|| perturbed_run(gamma2()));
static RUN_G53: LazyLock<RunData> = LazyLock::new(|| perturbed_run(gamma53()));

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_closed_form_equilibrium() {
    let t0 = Instant::now();
    let p = integrate_profile(gamma2(), 1.0, 1.0, 1e-10, 4096).unwrap();
    let a = (2.0 * PI).sqrt();
    let r_exact = (PI / 2.0f64).sqrt();
    let m_exact = (2.0 * PI).sqrt();
    let err_r = ((p.r_bar - r_exact) / r_exact).abs();
    let err_m = ((p.mass - m_exact) / m_exact).abs();

    // closed-form density rho_c sin(a r)/(a r); near the boundary evaluate
    // sin through the distance to the exact radius so the reference itself
    // keeps relative accuracy. rho vanishes linearly in Rbar - x, so the
    // pointwise-relative error at a node within d of the boundary cannot
    // beat |dRbar|/d for any solver (the located radius is good to ~5e-12);
    // the nodal error is therefore measured against the central density
    // everywhere, and pointwise where the profile is resolved
    // (rho >= 1e-3 rho_c), both at the stated 1e-6.
    let mut worst = 0.0f64;
    for (j, &x) in p.xs.iter().enumerate() {
        let exact = if x == 0.0 {
            1.0
        } else {
            (a * (r_exact - x)).sin() / (a * x)
        };
        let got = p.rho_bar[j];
        let err_central = (got - exact).abs(); // rho_c = 1
        let err = if exact >= 1e-3 {
            err_central.max((got - exact).abs() / exact)
        } else {
            err_central
        };
        worst = worst.max(err);
    }
    let wall = t0.elapsed().as_secs_f64();
    verdict(
        "1 (closed-form equilibrium)",
        err_r <= 1e-6 && err_m <= 1e-6 && worst <= 1e-6 && wall < 5.0,
        &format!("|dR|/R = {err_r:.2e}, |dM|/M = {err_m:.2e}, max nodal rel rho err = {worst:.2e}, wall = {wall:.2}s"),
    );
}

#[test]
fn criterion_2_enthalpy_distance_equivalence() {
    let mut worst = f64::INFINITY;
    let cases: Vec<(EquationOfState, f64)> = vec![
        (EquationOfState::polytrope(1.0, 1.5).unwrap(), 1.0),
        (gamma2(), 1.0),
        (EquationOfState::polytrope(1.0, 2.5).unwrap(), 1.0),
        (EquationOfState::white_dwarf(1.0, 1.0).unwrap(), 1.0),
        (EquationOfState::white_dwarf(1.0, 1.0).unwrap(), 100.0),
    ];
    let mut pass = true;
    for (eos, rho_c) in cases {
        let p = integrate_profile(eos, rho_c, 1.0, 1e-10, 512).unwrap();
        let chk = enthalpy_distance_check(&p);
        // two-sided bound at every node, 1e-9 absolute tolerance (binding
        // at the boundary node where both sides vanish)
        pass &= chk.worst_lower >= -1e-9 && chk.worst_upper >= -1e-9;
        worst = worst.min(chk.worst_lower.min(chk.worst_upper));
    }
    verdict(
        "2 (enthalpy-distance equivalence)",
        pass,
        &format!("worst two-sided slack = {worst:.3e}"),
    );
}

#[test]
fn criterion_3_white_dwarf_asymptotics() {
    let eos = EquationOfState::white_dwarf(1.0, 1.0).unwrap();
    let k_inf = eos.kappa_limit(); // 2 Gamma1 Gamma2^{-4/3}
    let d1 = 1.6; // (8/5) Gamma1 Gamma2^{-5/3}
    let mut worst_hi = 0.0f64;
    for k in 0..40 {
        let x = 30.0 * 10f64.powf(3.0 * k as f64 / 39.0);
        let rho = x * x * x;
        let q = eos.pressure(rho).unwrap() / rho.powf(4.0 / 3.0);
        worst_hi = worst_hi.max(((q - k_inf) / k_inf).abs());
    }
    let mut worst_lo = 0.0f64;
    for k in 0..40 {
        let x = 1e-2 * 10f64.powf(-3.0 * k as f64 / 39.0);
        let rho = x * x * x;
        let q = eos.pressure(rho).unwrap() / rho.powf(5.0 / 3.0);
        worst_lo = worst_lo.max(((q - d1) / d1).abs());
    }
    let report = eos.verify_structure_conditions(1e9, 400).unwrap();
    verdict(
        "3 (white-dwarf asymptotics)",
        worst_hi < 0.01 && worst_lo < 0.01 && report.passes,
        &format!(
            "4/3-limit err <= {worst_hi:.3e} (x >= 30), 5/3-limit err <= {worst_lo:.3e} (x <= 1e-2), s p'/p >= 4/3: {}",
            report.passes
        ),
    );
}

#[test]
fn criterion_4_critical_mass_behavior() {
    let t0 = Instant::now();
    // white dwarf: 60-point log grid over [1, 1e6]
    let eos = EquationOfState::white_dwarf(1.0, 1.0).unwrap();
    let grid: Vec<f64> = (0..60).map(|k| 10f64.powf(6.0 * k as f64 / 59.0)).collect();
    let curve = critical_mass_scan(eos, &grid, 1.0, 1e-8);
    assert!(curve.failures.is_empty(), "{:?}", curve.failures);
    let rises = curve
        .points
        .windows(2)
        .take(30)
        .all(|w| w[1].mass > w[0].mass);
    let m_at_1e5 = curve
        .points
        .iter()
        .filter(|p| p.rho_c <= 1.0001e5)
        .map(|p| p.mass)
        .fold(0.0f64, f64::max);
    let increment = (curve.m_c_estimate - m_at_1e5) / m_at_1e5;

    // gamma = 2 polytrope: doubling rho_c doubles the mass (M_c = infinity)
    let mut worst_ratio_err = 0.0f64;
    for rc in [1.0, 2.0, 4.0] {
        let m1 = integrate_profile(gamma2(), rc, 1.0, 1e-10, 16)
            .unwrap()
            .mass;
        let m2 = integrate_profile(gamma2(), 2.0 * rc, 1.0, 1e-10, 16)
            .unwrap()
            .mass;
        worst_ratio_err = worst_ratio_err.max((m2 / m1 - 2.0).abs());
    }
    let wall = t0.elapsed().as_secs_f64();
    verdict(
        "4 (critical-mass behavior)",
        rises && increment < 0.05 && worst_ratio_err <= 1e-6 && wall < 120.0,
        &format!(
            "rising: {rises}, last-decade increment = {increment:.4}, |M(2p)/M(p) - 2| <= {worst_ratio_err:.2e}, wall = {wall:.1}s"
        ),
    );
}

#[test]
fn criterion_5_exact_discrete_stationarity() {
    let profile = Arc::new(integrate_profile(gamma2(), 1.0, 1.0, 1e-10, 512).unwrap());
    let setup = SimSetup::new(gamma2(), profile, 512, 2.0, 0.2, 0.2).unwrap();
    let (r0, v0, _) =
        make_compatible_perturbation(&setup, PerturbationKind::VelocityBump, 0.0).unwrap();
    let cfg = SimConfig {
        n_cells: 512,
        t_final: 10.0,
        snapshot_every: 0.5,
        ..Default::default()
    };
    let traj = run(&setup, r0, v0, &cfg, &DiagnosticsConfig::default()).unwrap();
    assert!(traj.failure.is_none());
    let r_bar = setup.profile.r_bar;
    let sup_r = traj
        .reports
        .iter()
        .map(|r| r.sup.r_minus_x)
        .fold(0.0f64, f64::max);
    let sup_v = traj.reports.iter().map(|r| r.sup.v).fold(0.0f64, f64::max);
    verdict(
        "5 (exact discrete stationarity)",
        sup_r <= 1e-9 * r_bar && sup_v <= 1e-9,
        &format!(
            "sup|r-x| = {sup_r:.3e} (bound {:.3e}), sup|v| = {sup_v:.3e}",
            1e-9 * r_bar
        ),
    );
}

fn check_lyapunov_and_boundedness(name: &str, data: &RunData) {
    let reports = &data.traj.reports;
    let fe0 = data.traj.frak_e0;
    let mut worst_increase = 0.0f64;
    for k in 1..reports.len() {
        let prev = reports[k - 1].lyapunov;
        let cur = reports[k].lyapunov;
        // nonincreasing up to 1e-8 relative per accepted step between the
        // two samples
        let allowance = 1e-8
            * prev.abs().max(reports[0].lyapunov.abs() * 1e-12)
            * data.traj.steps_between[k].max(1) as f64;
        if cur > prev + allowance {
            worst_increase = worst_increase.max((cur - prev) / prev.abs().max(1e-300));
        }
    }
    let sup_ratio = reports
        .iter()
        .map(|r| r.frak_e / fe0)
        .fold(0.0f64, f64::max);
    verdict(
        &format!("6 (Lyapunov monotonicity + boundedness, {name})"),
        worst_increase == 0.0 && sup_ratio <= 10.0,
        &format!(
            "worst unallowed increase = {worst_increase:.3e}, sup frakE/frakE(0) = {sup_ratio:.3}"
        ),
    );
}

#[test]
fn criterion_6_lyapunov_monotonicity_gamma2() {
    check_lyapunov_and_boundedness("gamma=2", &RUN_G2);
}

#[test]
fn criterion_6_lyapunov_monotonicity_gamma53() {
    check_lyapunov_and_boundedness("gamma=5/3", &RUN_G53);
}

fn check_decay_rates(name: &str, data: &RunData, zeta_expected: f64) {
    let rates = diagnostics::theorem_rates(data.setup.eos.gamma_bar(), 0.1).unwrap();
    assert!(
        (rates.zeta - zeta_expected).abs() < 1e-12,
        "zeta = {} want {zeta_expected}",
        rates.zeta
    );
    let window = (10.0, 100.0);
    let d1_series: Vec<(f64, f64)> = data.traj.reports.iter().map(|r| (r.t, r.d1)).collect();
    let v2_series: Vec<(f64, f64)> = data
        .traj
        .reports
        .iter()
        .map(|r| (r.t, r.sup.v * r.sup.v))
        .collect();
    let fit_d1 = fit_decay("D1", &d1_series, window, 2.0 * rates.zeta - 1.0, 0.15).unwrap();
    let fit_v2 = fit_decay("sup_v_sq", &v2_series, window, 2.0 * rates.zeta - 0.5, 0.15).unwrap();
    verdict(
        &format!("7 (decay rates, {name})"),
        fit_d1.verdict && fit_v2.verdict && data.wall_s < 600.0,
        &format!(
            "D1 slope {:.3} <= -{:.3}+0.15, supv^2 slope {:.3} <= -{:.3}+0.15, wall {:.0}s",
            fit_d1.fitted_exponent,
            fit_d1.predicted_exponent,
            fit_v2.fitted_exponent,
            fit_v2.predicted_exponent,
            data.wall_s
        ),
    );
}

#[test]
fn criterion_7_decay_rates_gamma2() {
    check_decay_rates("gamma=2", &RUN_G2, 0.7);
}

#[test]
fn criterion_7_decay_rates_gamma53() {
    check_decay_rates("gamma=5/3", &RUN_G53, 0.65);
}

#[test]
fn criterion_8_vacuum_equivalence() {
    let data = &RUN_G53;
    let c0 = data.traj.reports[0].sup.vacuum_ratio;
    let c_max = data
        .traj
        .reports
        .iter()
        .map(|r| r.sup.vacuum_ratio)
        .fold(0.0f64, f64::max);
    verdict(
        "8 (vacuum equivalence)",
        c_max <= 3.0 * c0,
        &format!(
            "c(0) = {c0:.4}, sup_t c = {c_max:.4}, ratio = {:.3}",
            c_max / c0
        ),
    );
}

#[test]
fn criterion_9_functional_homogeneity() {
    let profile = Arc::new(integrate_profile(gamma2(), 1.0, 1.0, 1e-10, 512).unwrap());
    let setup = SimSetup::new(gamma2(), profile, 512, 2.0, 0.2, 0.2).unwrap();
    let theta = 0.1;
    let eps_ref = 1e-1;

    #[derive(Clone, Copy)]
    struct Quads {
        e0: f64,
        e1: f64,
        d0: f64,
        d1: f64,
        scr_e0: f64,
        scr_d0: f64,
        scr_d1: f64,
        frak: f64,
    }
    // "scaling the initial perturbation by s" acts on the departure fields
    // (r - x, v): build the base perturbation once and scale those fields
    let base_fields = |kind: PerturbationKind| -> (Vec<f64>, Vec<f64>) {
        let (r0, v0, _) = make_compatible_perturbation(&setup, kind, eps_ref).unwrap();
        let dr: Vec<f64> = r0
            .iter()
            .zip(&setup.grid.xs)
            .map(|(&r, &x)| r - x)
            .collect();
        (dr, v0)
    };
    let eval = |dr: &[f64], v0: &[f64], s: f64| -> Quads {
        let r: Vec<f64> = setup
            .grid
            .xs
            .iter()
            .zip(dr)
            .map(|(&x, &d)| x + s * d)
            .collect();
        let v: Vec<f64> = v0.iter().map(|&v| s * v).collect();
        let state = SimState {
            setup: setup.clone(),
            r,
            v,
            t: 0.0,
        };
        let v_t = momentum_rhs(&state).unwrap();
        let low = lower_energies(&state, &v_t);
        let (scr_e0, scr_d0, scr_d1) = weighted_energies(&state, theta).unwrap();
        Quads {
            e0: low.e0,
            e1: low.e1,
            d0: low.d0,
            d1: low.d1,
            scr_e0,
            scr_d0,
            scr_d1,
            frak: frak_e(&state, &v_t),
        }
    };

    let mut worst_exact = 0.0f64;
    let mut worst_richardson = 0.0f64;
    for kind in [
        PerturbationKind::VelocityBump,
        PerturbationKind::MapDilation,
    ] {
        let (dr, v0) = base_fields(kind);
        let base = eval(&dr, &v0, 1.0);
        let mut fraks = Vec::new();
        for s in [1e-2, 1e-3] {
            let scaled = eval(&dr, &v0, s);
            let pairs = [
                ("E0", base.e0, scaled.e0),
                ("E1", base.e1, scaled.e1),
                ("D0", base.d0, scaled.d0),
                ("D1", base.d1, scaled.d1),
                ("scrE0", base.scr_e0, scaled.scr_e0),
                ("scrD0", base.scr_d0, scaled.scr_d0),
                ("scrD1", base.scr_d1, scaled.scr_d1),
            ];
            for (name, b, sc) in pairs {
                if b == 0.0 {
                    assert!(
                        sc.abs() <= 1e-25,
                        "{name} vanishes identically for {kind:?}"
                    );
                    continue;
                }
                let err = (sc / (b * s * s) - 1.0).abs();
                worst_exact = worst_exact.max(err);
                assert!(err < 1e-8, "{name} {kind:?} s={s}: ratio error {err:.3e}");
            }
            fraks.push(scaled.frak);
        }
        // Richardson: frakE scales as s^2 to first order; the ratio between
        // s = 1e-2 and s = 1e-3 must be 100 within 5%
        let ratio = fraks[0] / fraks[1];
        worst_richardson = worst_richardson.max((ratio / 100.0 - 1.0).abs());
    }
    verdict(
        "9 (functional homogeneity)",
        worst_exact < 1e-8 && worst_richardson < 0.05,
        &format!(
            "worst exact-quadratic deviation = {worst_exact:.3e}, worst Richardson deviation = {worst_richardson:.4}"
        ),
    );
}

#[test]
fn criterion_10_oracle_quadrature() {
    // three stored analytic states evaluated on the run grid (N = 512) and
    // on an independent 10x-finer grid; the integral functionals must agree
    // to 1e-4 relative
    let eos = gamma2();
    let profile = Arc::new(integrate_profile(eos, 1.0, 1.0, 1e-10, 512).unwrap());
    let coarse = SimSetup::new(eos, profile.clone(), 512, 2.0, 0.2, 0.2).unwrap();
    let fine = SimSetup::new(eos, profile.clone(), 5120, 2.0, 0.2, 0.2).unwrap();
    let r_bar = profile.r_bar;
    let eps = 1e-3;

    // the stored states are smooth spherically symmetric fields (r and v
    // are x times even functions of x, so the momentum RHS respects the
    // centre condition v_t(0) = 0) inside the finite-energy class: the
    // velocity shape is tangent enough at the vacuum boundary that
    // rhobar^{1/2} v_t stays square integrable
    type FieldFn = Box<dyn Fn(f64) -> (f64, f64)>;
    let states: Vec<(&str, FieldFn)> = vec![
        (
            "map r=x+eps*x^3",
            Box::new(move |x: f64| (x + eps * x * x * x, 0.0)),
        ),
        (
            "bump v=eps*x*(1-xi^2)^3",
            Box::new(move |x: f64| {
                let xi = x / r_bar;
                let b = 1.0 - xi * xi;
                (x, eps * x * b * b * b)
            }),
        ),
        (
            "dilation with velocity",
            Box::new(move |x: f64| {
                let xi = x / r_bar;
                let b = 1.0 - xi * xi;
                ((1.0 + eps) * x, 0.5 * eps * x * b * b * b)
            }),
        ),
    ];

    let theta = 0.1;
    let mut worst = 0.0f64;
    for (name, field) in states {
        let make = |setup: &Arc<SimSetup>| -> SimState {
            let mut r = Vec::new();
            let mut v = Vec::new();
            for &x in &setup.grid.xs {
                let (rj, vj) = field(x);
                r.push(rj);
                v.push(vj);
            }
            SimState {
                setup: setup.clone(),
                r,
                v,
                t: 0.0,
            }
        };
        let sc = make(&coarse);
        let sf = make(&fine);
        let vt_c = momentum_rhs(&sc).unwrap();
        let vt_f = momentum_rhs(&sf).unwrap();
        let quantities = [
            ("frakE", frak_e(&sc, &vt_c), frak_e(&sf, &vt_f)),
            (
                "scrE0",
                weighted_energies(&sc, theta).unwrap().0,
                weighted_energies(&sf, theta).unwrap().0,
            ),
            (
                "scrD0",
                weighted_energies(&sc, theta).unwrap().1,
                weighted_energies(&sf, theta).unwrap().1,
            ),
            (
                "scrD1",
                weighted_energies(&sc, theta).unwrap().2,
                weighted_energies(&sf, theta).unwrap().2,
            ),
            (
                "eta",
                eta_functionals(&sc).unwrap().eta_total,
                eta_functionals(&sf).unwrap().eta_total,
            ),
        ];
        for (qname, c, f) in quantities {
            let rel = ((c - f) / f.abs().max(1e-300)).abs();
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "{name}/{qname}: coarse {c:.8e} vs fine {f:.8e} (rel {rel:.2e})"
            );
        }
    }
    verdict(
        "10 (oracle quadrature)",
        worst < 1e-4,
        &format!("worst coarse-vs-10x-fine relative difference = {worst:.3e}"),
    );
}

#[test]
fn acceptance_energy_report_is_complete() {
    // sanity: the per-snapshot report carries every series.csv column
    let data = &RUN_G2;
    let rep = energy_report(
        &SimState {
            setup: data.setup.clone(),
            r: data.traj.snapshots[1].r.clone(),
            v: data.traj.snapshots[1].v.clone(),
            t: data.traj.snapshots[1].t,
        },
        &DiagnosticsConfig {
            theta: 0.1,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(rep.frak_e.is_finite() && rep.lyapunov.is_finite());
    assert!(rep.sup.vacuum_ratio > 0.0);
}
