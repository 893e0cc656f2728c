//! Python bindings: equations of state, equilibrium solves, perturbed
//! free-boundary runs and the diagnostic/decay-fit toolbox.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use starstab::diagnostics::{self, DiagnosticsConfig};
use starstab::eos::EquationOfState;
use starstab::equilibrium::{self, EquilibriumProfile, ShootingConfig};
use starstab::simulator::{self, PerturbationKind, SimConfig, SimSetup};

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Barotropic pressure law (polytrope or white dwarf).
#[pyclass(name = "Eos", frozen)]
#[derive(Clone)]
struct PyEos {
    inner: EquationOfState,
}

#[pymethods]
impl PyEos {
    #[staticmethod]
    fn polytrope(kappa: f64, gamma: f64) -> PyResult<Self> {
        Ok(PyEos {
            inner: EquationOfState::polytrope(kappa, gamma).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn white_dwarf(gamma1: f64, gamma2: f64) -> PyResult<Self> {
        Ok(PyEos {
            inner: EquationOfState::white_dwarf(gamma1, gamma2).map_err(value_err)?,
        })
    }

    fn pressure(&self, s: f64) -> PyResult<f64> {
        self.inner.pressure(s).map_err(value_err)
    }

    fn dp(&self, s: f64) -> PyResult<f64> {
        self.inner.dp(s).map_err(value_err)
    }

    fn d2p(&self, s: f64) -> PyResult<f64> {
        self.inner.d2p(s).map_err(value_err)
    }

    fn enthalpy(&self, s: f64) -> PyResult<f64> {
        self.inner.enthalpy(s).map_err(value_err)
    }

    fn pressure_potential(&self, s: f64) -> PyResult<f64> {
        self.inner.pressure_potential(s).map_err(value_err)
    }

    fn rho_from_enthalpy(&self, i: f64) -> f64 {
        self.inner.rho_from_enthalpy(i)
    }

    #[getter]
    fn gamma_bar(&self) -> f64 {
        self.inner.gamma_bar()
    }

    #[getter]
    fn kappa_limit(&self) -> f64 {
        self.inner.kappa_limit()
    }

    /// Sample the structure conditions; returns a dict with the sampled
    /// ratio ranges and the pass flag.
    #[pyo3(signature = (s_max, n_samples = 200))]
    fn verify_structure(&self, s_max: f64, n_samples: usize) -> PyResult<BTreeMap<String, f64>> {
        let r = self
            .inner
            .verify_structure_conditions(s_max, n_samples)
            .map_err(value_err)?;
        let mut out = BTreeMap::new();
        out.insert("ratio_p_min".into(), r.ratio_p_min);
        out.insert("ratio_p_max".into(), r.ratio_p_max);
        out.insert("gamma_bar_empirical".into(), r.gamma_bar_empirical);
        out.insert("gamma_bar_analytic".into(), r.gamma_bar_analytic);
        out.insert("passes".into(), if r.passes { 1.0 } else { 0.0 });
        Ok(out)
    }
}

/// Discretized stationary star.
#[pyclass(name = "Profile", frozen)]
struct PyProfile {
    inner: Arc<EquilibriumProfile>,
}

#[pymethods]
impl PyProfile {
    #[getter]
    fn r_bar(&self) -> f64 {
        self.inner.r_bar
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    #[getter]
    fn rho_c(&self) -> f64 {
        self.inner.rho_c
    }

    /// Node arrays (r, rho, phi, i, p).
    fn nodes(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            self.inner.xs.clone(),
            self.inner.rho_bar.clone(),
            self.inner.phi.clone(),
            self.inner.i_bar.clone(),
            self.inner.p_bar.clone(),
        )
    }

    /// Discrete L2 residual of the hydrostatic balance and its scale.
    fn residual(&self) -> (f64, f64) {
        let r = equilibrium::equilibrium_residual(&self.inner);
        (r.l2, r.max_dp_dr)
    }

    /// (K8, K9, pass) of the enthalpy-distance bound.
    fn enthalpy_distance_check(&self) -> (f64, f64, bool) {
        let c = equilibrium::enthalpy_distance_check(&self.inner);
        (c.k8, c.k9, c.pass)
    }
}

#[pyfunction]
#[pyo3(signature = (eos, rho_c, g = 1.0, ode_tol = 1e-10, n_cells = 1024))]
fn solve_equilibrium(
    eos: &PyEos,
    rho_c: f64,
    g: f64,
    ode_tol: f64,
    n_cells: usize,
) -> PyResult<PyProfile> {
    let p = equilibrium::integrate_profile(eos.inner, rho_c, g, ode_tol, n_cells)
        .map_err(runtime_err)?;
    Ok(PyProfile { inner: Arc::new(p) })
}

#[pyfunction]
#[pyo3(signature = (eos, target_mass, bracket, g = 1.0, ode_tol = 1e-10, tol_mass = 1e-8, n_cells = 1024))]
fn solve_for_mass(
    eos: &PyEos,
    target_mass: f64,
    bracket: (f64, f64),
    g: f64,
    ode_tol: f64,
    tol_mass: f64,
    n_cells: usize,
) -> PyResult<PyProfile> {
    let cfg = ShootingConfig {
        target_mass,
        rho_c_bracket: bracket,
        tol_mass,
        ode_tol,
        max_iter: 80,
        n_cells,
    };
    let p = equilibrium::solve_for_mass(eos.inner, &cfg, g).map_err(runtime_err)?;
    Ok(PyProfile { inner: Arc::new(p) })
}

/// Mass curve M(rho_c): returns (rho_c, M, R) triples plus the running
/// maximum and the rising-at-edge flag.
#[pyfunction]
#[pyo3(signature = (eos, rho_c_grid, g = 1.0, ode_tol = 1e-8))]
fn critical_mass_scan(
    eos: &PyEos,
    rho_c_grid: Vec<f64>,
    g: f64,
    ode_tol: f64,
) -> (Vec<(f64, f64, f64)>, f64, bool) {
    let curve = equilibrium::critical_mass_scan(eos.inner, &rho_c_grid, g, ode_tol);
    (
        curve
            .points
            .iter()
            .map(|p| (p.rho_c, p.mass, p.radius))
            .collect(),
        curve.m_c_estimate,
        curve.rising_at_edge,
    )
}

/// Result of a perturbed free-boundary run: the diagnostic series as a
/// dict of columns, keyed like series.csv.
#[pyclass(name = "RunResult", frozen)]
struct PyRunResult {
    columns: BTreeMap<String, Vec<f64>>,
    frak_e0: f64,
    total_steps: usize,
    small_regime_exit: Option<f64>,
    failure: Option<(f64, String)>,
}

#[pymethods]
impl PyRunResult {
    fn series(&self) -> BTreeMap<String, Vec<f64>> {
        self.columns.clone()
    }

    #[getter]
    fn frak_e0(&self) -> f64 {
        self.frak_e0
    }

    #[getter]
    fn total_steps(&self) -> usize {
        self.total_steps
    }

    #[getter]
    fn small_regime_exit(&self) -> Option<f64> {
        self.small_regime_exit
    }

    #[getter]
    fn failure(&self) -> Option<(f64, String)> {
        self.failure.clone()
    }
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (eos, profile, kind, epsilon, n_cells = 256, nu1 = 0.2, nu2 = 0.2,
       t_final = 10.0, snapshot_every = 0.5, theta = 0.1))]
fn run_simulation(
    eos: &PyEos,
    profile: &PyProfile,
    kind: &str,
    epsilon: f64,
    n_cells: usize,
    nu1: f64,
    nu2: f64,
    t_final: f64,
    snapshot_every: f64,
    theta: f64,
) -> PyResult<PyRunResult> {
    let kind = match kind {
        "velocity_bump" => PerturbationKind::VelocityBump,
        "map_dilation" => PerturbationKind::MapDilation,
        "none" => PerturbationKind::None,
        other => return Err(value_err(format!("unknown perturbation kind '{other}'"))),
    };
    let setup = SimSetup::new(eos.inner, profile.inner.clone(), n_cells, 2.0, nu1, nu2)
        .map_err(runtime_err)?;
    let (r0, v0, _) =
        simulator::make_compatible_perturbation(&setup, kind, epsilon).map_err(runtime_err)?;
    let cfg = SimConfig {
        n_cells,
        t_final,
        snapshot_every,
        ..Default::default()
    };
    let diag = DiagnosticsConfig {
        theta,
        ..Default::default()
    };
    let traj = simulator::run(&setup, r0, v0, &cfg, &diag).map_err(runtime_err)?;

    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut push = |key: &str, v: f64| columns.entry(key.into()).or_default().push(v);
    for r in &traj.reports {
        push("t", r.t);
        push("frakE", r.frak_e);
        push("E0", r.e0);
        push("E1", r.e1);
        push("E2", r.e2);
        push("D0", r.d0);
        push("D1", r.d1);
        push("D2", r.d2);
        push("scrE0", r.scr_e0);
        push("scrD0", r.scr_d0);
        push("scrD1", r.scr_d1);
        push("eta", r.eta_total);
        push("lyapunov", r.lyapunov);
        for (name, value) in r.sup.as_map() {
            push(name, value);
        }
    }
    Ok(PyRunResult {
        columns,
        frak_e0: traj.frak_e0,
        total_steps: traj.total_steps,
        small_regime_exit: traj.small_regime_exit,
        failure: traj.failure.clone(),
    })
}

/// Predicted decay exponents for (gamma_bar, theta).
#[pyfunction]
fn theorem_rates(gamma_bar: f64, theta: f64) -> PyResult<BTreeMap<String, f64>> {
    let r = diagnostics::theorem_rates(gamma_bar, theta).map_err(value_err)?;
    let mut out = BTreeMap::new();
    out.insert("zeta".into(), r.zeta);
    out.insert("upsilon".into(), r.upsilon as f64);
    for (k, v) in r.rates {
        out.insert(k, v);
    }
    Ok(out)
}

/// One-sided log-log decay fit of (t, value) samples in a window.
#[pyfunction]
#[pyo3(signature = (ts, values, t_lo, t_hi, predicted, slack = 0.15))]
fn fit_decay(
    ts: Vec<f64>,
    values: Vec<f64>,
    t_lo: f64,
    t_hi: f64,
    predicted: f64,
    slack: f64,
) -> PyResult<BTreeMap<String, f64>> {
    if ts.len() != values.len() {
        return Err(value_err("ts and values must have the same length"));
    }
    let series: Vec<(f64, f64)> = ts.into_iter().zip(values).collect();
    let fit = diagnostics::fit_decay("series", &series, (t_lo, t_hi), predicted, slack)
        .map_err(value_err)?;
    let mut out = BTreeMap::new();
    out.insert("fitted_exponent".into(), fit.fitted_exponent);
    out.insert("r_squared".into(), fit.r_squared);
    out.insert("predicted_exponent".into(), fit.predicted_exponent);
    out.insert("verdict".into(), if fit.verdict { 1.0 } else { 0.0 });
    Ok(out)
}

#[pymodule]
fn starstab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEos>()?;
    m.add_class::<PyProfile>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(solve_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(solve_for_mass, m)?)?;
    m.add_function(wrap_pyfunction!(critical_mass_scan, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_rates, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    Ok(())
}
