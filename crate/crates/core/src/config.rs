//! Run configuration: TOML-backed sections [eos], [equilibrium],
//! [perturbation], [sim], [diagnostics], [output], with cross-field
//! validation done before any compute starts.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsConfig;
use crate::eos::EquationOfState;
use crate::simulator::{PerturbationKind, SimConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EosSection {
    Polytrope { kappa: f64, gamma: f64 },
    WhiteDwarf { gamma1: f64, gamma2: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumSection {
    /// Central density; alternative to target_mass.
    pub rho_c: Option<f64>,
    /// Total mass to shoot for; needs rho_c_bracket.
    pub target_mass: Option<f64>,
    #[serde(default = "default_bracket")]
    pub rho_c_bracket: (f64, f64),
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default = "default_ode_tol")]
    pub ode_tol: f64,
    #[serde(default = "default_mass_tol")]
    pub tol_mass: f64,
    #[serde(default = "default_profile_cells")]
    pub profile_cells: usize,
}

fn default_bracket() -> (f64, f64) {
    (1e-2, 1e2)
}
fn default_g() -> f64 {
    1.0
}
fn default_ode_tol() -> f64 {
    1e-10
}
fn default_mass_tol() -> f64 {
    1e-8
}
fn default_profile_cells() -> usize {
    4096
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSection {
    pub kind: PerturbationKind,
    #[serde(default)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSection {
    #[serde(default = "d_n_cells")]
    pub n_cells: usize,
    #[serde(default = "d_grading_q")]
    pub grading_q: f64,
    #[serde(default = "d_nu")]
    pub nu1: f64,
    #[serde(default = "d_nu")]
    pub nu2: f64,
    #[serde(default = "d_dt_init")]
    pub dt_init: f64,
    #[serde(default = "d_dt_max")]
    pub dt_max: f64,
    #[serde(default = "d_cfl")]
    pub cfl: f64,
    #[serde(default = "d_t_final")]
    pub t_final: f64,
    #[serde(default = "d_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "d_newton_max")]
    pub newton_max: usize,
    #[serde(default = "d_snapshot_every")]
    pub snapshot_every: f64,
    #[serde(default = "d_max_frak_e0")]
    pub max_frak_e0: f64,
}

fn d_n_cells() -> usize {
    512
}
fn d_grading_q() -> f64 {
    2.0
}
fn d_nu() -> f64 {
    0.2
}
fn d_dt_init() -> f64 {
    1e-5
}
fn d_dt_max() -> f64 {
    0.05
}
fn d_cfl() -> f64 {
    0.9
}
fn d_t_final() -> f64 {
    100.0
}
fn d_newton_tol() -> f64 {
    1e-11
}
fn d_newton_max() -> usize {
    30
}
fn d_snapshot_every() -> f64 {
    0.5
}
fn d_max_frak_e0() -> f64 {
    1.0
}

impl Default for SimSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsSection {
    #[serde(default = "d_theta")]
    pub theta: f64,
    /// Interior margin for the D^{i,j} subinterval; 0 means Rbar/4.
    #[serde(default)]
    pub l: f64,
    #[serde(default = "d_fit_t_lo")]
    pub fit_t_lo: f64,
    #[serde(default = "d_fit_t_hi")]
    pub fit_t_hi: f64,
    #[serde(default = "d_slack")]
    pub slack: f64,
}

fn d_theta() -> f64 {
    0.1
}
fn d_fit_t_lo() -> f64 {
    10.0
}
fn d_fit_t_hi() -> f64 {
    100.0
}
fn d_slack() -> f64 {
    0.15
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub eos: EosSection,
    pub equilibrium: EquilibriumSection,
    #[serde(default)]
    pub perturbation: Option<PerturbationSection>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_str_validated(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_eos(&self) -> Result<EquationOfState, ConfigError> {
        match self.eos {
            EosSection::Polytrope { kappa, gamma } => EquationOfState::polytrope(kappa, gamma),
            EosSection::WhiteDwarf { gamma1, gamma2 } => {
                EquationOfState::white_dwarf(gamma1, gamma2)
            }
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Cross-field validation: everything that can be rejected before
    /// compute is rejected here.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let eos = self.build_eos()?;
        let gb = eos.gamma_bar();
        if gb <= 4.0 / 3.0 {
            return Err(ConfigError::Invalid(format!(
                "gamma_bar = {gb} is outside the stability range (> 4/3)"
            )));
        }
        let eq = &self.equilibrium;
        if eq.rho_c.is_none() && eq.target_mass.is_none() {
            return Err(ConfigError::Invalid(
                "equilibrium needs rho_c or target_mass".into(),
            ));
        }
        if let Some(rc) = eq.rho_c {
            if !(rc > 0.0) {
                return Err(ConfigError::Invalid(format!("rho_c must be > 0, got {rc}")));
            }
        }
        if !(eq.g > 0.0 && eq.ode_tol > 0.0 && eq.tol_mass > 0.0) {
            return Err(ConfigError::Invalid(
                "equilibrium tolerances and G must be positive".into(),
            ));
        }
        if eq.profile_cells < 8 {
            return Err(ConfigError::Invalid(
                "profile_cells must be at least 8".into(),
            ));
        }
        if let Some(sim) = &self.sim {
            if !(sim.cfl > 0.0 && sim.cfl <= 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "cfl must be in (0, 1], got {}",
                    sim.cfl
                )));
            }
            for (name, v) in [
                ("nu1", sim.nu1),
                ("nu2", sim.nu2),
                ("dt_init", sim.dt_init),
                ("dt_max", sim.dt_max),
                ("newton_tol", sim.newton_tol),
                ("snapshot_every", sim.snapshot_every),
                ("grading_q", sim.grading_q),
            ] {
                if !(v > 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "sim.{name} must be positive, got {v}"
                    )));
                }
            }
            if !(sim.t_final >= 0.0) {
                return Err(ConfigError::Invalid(
                    "sim.t_final must be nonnegative".into(),
                ));
            }
            if sim.n_cells < 8 {
                return Err(ConfigError::Invalid(
                    "sim.n_cells must be at least 8".into(),
                ));
            }
        }
        if let Some(d) = &self.diagnostics {
            let max = 1.0 - 5.0 / (4.0 * gb);
            if !(d.theta > 0.0 && d.theta <= max + 1e-15) {
                return Err(ConfigError::Invalid(format!(
                    "diagnostics.theta = {} outside (0, {max:.6}] for gamma_bar = {gb}",
                    d.theta
                )));
            }
            if d.l < 0.0 {
                return Err(ConfigError::Invalid(
                    "diagnostics.l must be nonnegative".into(),
                ));
            }
            if !(d.slack >= 0.0) {
                return Err(ConfigError::Invalid(
                    "diagnostics.slack must be nonnegative".into(),
                ));
            }
        }
        if let Some(p) = &self.perturbation {
            if !p.epsilon.is_finite() {
                return Err(ConfigError::Invalid(
                    "perturbation.epsilon must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = self.sim.clone().unwrap_or_default();
        SimConfig {
            n_cells: s.n_cells,
            grading_q: s.grading_q,
            dt_init: s.dt_init,
            dt_max: s.dt_max,
            cfl: s.cfl,
            t_final: s.t_final,
            newton_tol: s.newton_tol,
            newton_max: s.newton_max,
            snapshot_every: s.snapshot_every,
            max_frak_e0: s.max_frak_e0,
        }
    }

    pub fn diagnostics_config(&self) -> DiagnosticsConfig {
        let d = self.diagnostics.clone().unwrap_or_default();
        DiagnosticsConfig {
            theta: d.theta,
            l: if d.l > 0.0 { Some(d.l) } else { None },
            fit_t_lo: d.fit_t_lo,
            fit_t_hi: d.fit_t_hi,
            slack: d.slack,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[eos]
kind = "polytrope"
kappa = 1.0
gamma = 2.0

[equilibrium]
rho_c = 1.0

[perturbation]
kind = "velocity_bump"
epsilon = 1e-3

[sim]
n_cells = 128
t_final = 10.0

[diagnostics]
theta = 0.1
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = RunConfig::from_str_validated(GOOD).unwrap();
        assert!(matches!(cfg.eos, EosSection::Polytrope { .. }));
        assert_eq!(cfg.sim_config().n_cells, 128);
        assert_eq!(cfg.diagnostics_config().theta, 0.1);
    }

    #[test]
    fn rejects_bad_theta() {
        let text = GOOD.replace("theta = 0.1", "theta = 0.9");
        match RunConfig::from_str_validated(&text) {
            Err(ConfigError::Invalid(msg)) => assert!(msg.contains("theta")),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn rejects_subcritical_gamma() {
        let text = GOOD.replace("gamma = 2.0", "gamma = 1.2");
        assert!(RunConfig::from_str_validated(&text).is_err());
    }

    #[test]
    fn parse_error_names_line() {
        let text = GOOD.replace("kappa = 1.0", "kappa = oops");
        match RunConfig::from_str_validated(&text) {
            Err(ConfigError::Parse(e)) => {
                let msg = e.to_string();
                assert!(
                    msg.contains("line"),
                    "diagnostic should name the line: {msg}"
                );
            }
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn white_dwarf_section() {
        let text = GOOD
            .replace(
                "kind = \"polytrope\"\nkappa = 1.0\ngamma = 2.0",
                "kind = \"white_dwarf\"\ngamma1 = 1.0\ngamma2 = 1.0",
            )
            .replace("theta = 0.1", "theta = 0.25");
        let cfg = RunConfig::from_str_validated(&text).unwrap();
        assert!((cfg.build_eos().unwrap().gamma_bar() - 5.0 / 3.0).abs() < 1e-14);
    }
}
