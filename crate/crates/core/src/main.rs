//! Command-line driver: equilibrium solves, perturbed free-boundary runs,
//! parameter sweeps and EOS structure checks, with deterministic CSV/JSON
//! outputs and a manifest per run directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};

use starstab::config::{ConfigError, EosSection, RunConfig};
use starstab::diagnostics::{self, DecayFit, DiagnosticsConfig};
use starstab::equilibrium::{
    self, critical_mass_scan, enthalpy_distance_check, equilibrium_residual, ShootingConfig,
};
use starstab::output::{self, RunManifest};
use starstab::simulator::{self, PerturbationKind, SimSetup, Trajectory};

#[derive(Parser)]
#[command(
    name = "starstab",
    version,
    about = "Self-gravitating star stability laboratory"
)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true, default_value = "starstab.toml")]
    config: PathBuf,
    /// Output directory (created if missing); overrides [output].dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and scans (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the stationary profile and write profile.csv plus the
    /// residual and enthalpy-distance reports.
    Equilibrium,
    /// Run the perturbed free-boundary evolution and write snapshots,
    /// series.csv and fits.json.
    Simulate,
    /// Sweep one parameter; one subdirectory per value plus summary.csv.
    Sweep {
        /// One of: rho_c, theta, epsilon, nu1, nu2, gamma.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; may be empty.
        #[arg(long, value_delimiter = ',', num_args = 0.., allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Check the pressure-law structure conditions and asymptotics.
    CheckEos {
        /// Largest density sampled; defaults to the configured rho_c, or
        /// 1e6 when shooting for a mass.
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run_cli(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Equilibrium(#[from] equilibrium::EquilibriumError),
    #[error(transparent)]
    Sim(#[from] simulator::SimError),
    #[error(transparent)]
    Diag(#[from] diagnostics::DiagError),
    #[error(transparent)]
    Eos(#[from] starstab::eos::EosError),
    #[error(transparent)]
    Output(#[from] output::OutputError),
    #[error("io error on {0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn run_cli(cli: &Cli) -> Result<i32, CliError> {
    let cfg = RunConfig::from_path(&cli.config)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(out_dir.display().to_string(), e))?;

    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .ok(); // already-built pool is fine
    }

    match &cli.cmd {
        Cmd::Equilibrium => cmd_equilibrium(&cfg, &out_dir),
        Cmd::Simulate => cmd_simulate(&cfg, &out_dir),
        Cmd::Sweep { axis, values } => cmd_sweep(&cfg, &out_dir, axis, values),
        Cmd::CheckEos { s_max, samples } => cmd_check_eos(&cfg, &out_dir, *s_max, *samples),
    }
}

fn solve_profile(cfg: &RunConfig) -> Result<equilibrium::EquilibriumProfile, CliError> {
    let eos = cfg.build_eos()?;
    let eq = &cfg.equilibrium;
    let profile = if let Some(rho_c) = eq.rho_c {
        equilibrium::integrate_profile(eos, rho_c, eq.g, eq.ode_tol, eq.profile_cells)?
    } else {
        let shoot = ShootingConfig {
            target_mass: eq.target_mass.expect("validated"),
            rho_c_bracket: eq.rho_c_bracket,
            tol_mass: eq.tol_mass,
            ode_tol: eq.ode_tol,
            max_iter: 80,
            n_cells: eq.profile_cells,
        };
        equilibrium::solve_for_mass(eos, &shoot, eq.g)?
    };
    Ok(profile)
}

fn config_echo(cfg: &RunConfig) -> toml::Value {
    toml::Value::try_from(cfg).expect("config serializable")
}

fn cmd_equilibrium(cfg: &RunConfig, out_dir: &Path) -> Result<i32, CliError> {
    let wall = Instant::now();
    let profile = solve_profile(cfg)?;
    let residual = equilibrium_residual(&profile);
    let har1 = enthalpy_distance_check(&profile);

    output::write_profile_csv(&out_dir.join("profile.csv"), &profile)?;
    output::write_equilibrium_report_json(
        &out_dir.join("equilibrium_report.json"),
        &residual,
        &har1,
    )?;
    let manifest = RunManifest {
        command: "equilibrium".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config_echo(cfg),
        derived: serde_json::json!({
            "gamma_bar": profile.eos.gamma_bar(),
            "kappa_limit": format!("{}", profile.eos.kappa_limit()),
            "R_bar": profile.r_bar,
            "M": profile.mass,
            "rho_c": profile.rho_c,
            "residual_l2": residual.l2,
            "har1_pass": har1.pass,
        }),
        wall_clock_s: wall.elapsed().as_secs_f64(),
        exit_status: "ok".into(),
    };
    output::write_manifest_atomic(out_dir, &manifest)?;
    println!(
        "equilibrium: Rbar = {:.9}, M = {:.9}, residual l2 = {:.3e}, har1 pass = {}",
        profile.r_bar, profile.mass, residual.l2, har1.pass
    );
    Ok(0)
}

/// The default decay-fit set: quantity, series extractor, predicted
/// exponent drawn from the theorem-rate table.
fn default_fits(
    traj: &Trajectory,
    rates: &diagnostics::TheoremRates,
    diag: &DiagnosticsConfig,
) -> (Vec<DecayFit>, Vec<(String, String)>) {
    let two_zeta = rates.rates["two_zeta"];
    let two_zeta_m1 = rates.rates["two_zeta_minus_one"];
    let two_zeta_mh = rates.rates["two_zeta_minus_half"];
    let displacement = rates
        .rates
        .get("displacement_upsilon")
        .copied()
        .unwrap_or(two_zeta_mh);
    type Getter = fn(&diagnostics::EnergyReport) -> f64;
    let quantities: [(&str, Getter, f64); 6] = [
        ("D1", |r| r.d1, two_zeta),
        ("D0", |r| r.d0, two_zeta),
        ("E0", |r| r.e0, two_zeta_m1),
        ("sup_v_sq", |r| r.sup.v * r.sup.v, two_zeta_mh),
        ("sup_vx_sq", |r| r.sup.vx * r.sup.vx, two_zeta_m1),
        (
            "sup_r_minus_x_sq",
            |r| r.sup.r_minus_x * r.sup.r_minus_x,
            displacement,
        ),
    ];
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for (name, get, predicted) in quantities {
        let series: Vec<(f64, f64)> = traj.reports.iter().map(|r| (r.t, get(r))).collect();
        match diagnostics::fit_decay(
            name,
            &series,
            (diag.fit_t_lo, diag.fit_t_hi),
            predicted,
            diag.slack,
        ) {
            Ok(fit) => fits.push(fit),
            Err(e) => skipped.push((name.to_string(), e.to_string())),
        }
    }
    (fits, skipped)
}

fn run_simulation(cfg: &RunConfig) -> Result<(Arc<SimSetup>, Trajectory), CliError> {
    let profile = Arc::new(solve_profile(cfg)?);
    let sim = cfg.sim_config();
    let sim_section = cfg.sim.clone().unwrap_or_default();
    let setup = SimSetup::new(
        profile.eos,
        profile.clone(),
        sim.n_cells,
        sim.grading_q,
        sim_section.nu1,
        sim_section.nu2,
    )?;
    let pert = cfg
        .perturbation
        .clone()
        .map(|p| (p.kind, p.epsilon))
        .unwrap_or((PerturbationKind::None, 0.0));
    let (r0, v0, _) = simulator::make_compatible_perturbation(&setup, pert.0, pert.1)?;
    let diag = cfg.diagnostics_config();
    let traj = simulator::run(&setup, r0, v0, &sim, &diag)?;
    Ok((setup, traj))
}

fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<i32, CliError> {
    let wall = Instant::now();
    let diag = cfg.diagnostics_config();
    let (setup, traj) = run_simulation(cfg)?;

    let snap_dir = out_dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir)
        .map_err(|e| CliError::Io(snap_dir.display().to_string(), e))?;
    for snap in &traj.snapshots {
        output::write_snapshot_csv(&snap_dir, &setup.grid.xs, snap)?;
    }
    output::write_series_csv(&out_dir.join("series.csv"), &traj.reports)?;

    let gb = setup.eos.gamma_bar();
    let rates = diagnostics::theorem_rates(gb, diag.theta)?;
    let (fits, skipped) = if traj.reports.len() >= 2 {
        default_fits(&traj, &rates, &diag)
    } else {
        (Vec::new(), Vec::new())
    };
    output::write_fits_json(&out_dir.join("fits.json"), &fits)?;

    let all_pass = fits.iter().all(|f| f.verdict);
    let status = match &traj.failure {
        None => "ok".to_string(),
        Some((t, msg)) => format!("failed at t = {t}: {msg}"),
    };
    let manifest = RunManifest {
        command: "simulate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config_echo(cfg),
        derived: serde_json::json!({
            "gamma_bar": gb,
            "zeta": rates.zeta,
            "upsilon": rates.upsilon,
            "R_bar": setup.profile.r_bar,
            "M": setup.profile.mass,
            "frak_e0": traj.frak_e0,
            "total_steps": traj.total_steps,
            "total_rejections": traj.total_rejections,
            "small_regime_exit": traj.small_regime_exit,
            "fit_verdicts_all_pass": all_pass,
            "skipped_fits": skipped,
        }),
        wall_clock_s: wall.elapsed().as_secs_f64(),
        exit_status: status.clone(),
    };
    output::write_manifest_atomic(out_dir, &manifest)?;
    println!(
        "simulate: frakE(0) = {:.6e}, reports = {}, fits pass = {all_pass}, status = {status}",
        traj.frak_e0,
        traj.reports.len()
    );
    Ok(if traj.failure.is_some() { 1 } else { 0 })
}

fn set_axis(cfg: &RunConfig, axis: &str, value: f64) -> Result<RunConfig, CliError> {
    let mut c = cfg.clone();
    match axis {
        "rho_c" => {
            c.equilibrium.rho_c = Some(value);
            c.equilibrium.target_mass = None;
        }
        "theta" => c.diagnostics.get_or_insert_with(Default::default).theta = value,
        "epsilon" => {
            c.perturbation
                .get_or_insert_with(|| starstab::config::PerturbationSection {
                    kind: PerturbationKind::VelocityBump,
                    epsilon: 0.0,
                })
                .epsilon = value
        }
        "nu1" => c.sim.get_or_insert_with(Default::default).nu1 = value,
        "nu2" => c.sim.get_or_insert_with(Default::default).nu2 = value,
        "gamma" => match &mut c.eos {
            EosSection::Polytrope { gamma, .. } => *gamma = value,
            EosSection::WhiteDwarf { .. } => {
                return Err(CliError::Usage(
                    "gamma sweeps apply to polytropes only".into(),
                ))
            }
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown sweep axis '{other}' (expected rho_c, theta, epsilon, nu1, nu2, gamma)"
            )))
        }
    }
    c.validate()?;
    Ok(c)
}

fn cmd_sweep(cfg: &RunConfig, out_dir: &Path, axis: &str, values: &[f64]) -> Result<i32, CliError> {
    use rayon::prelude::*;
    let wall = Instant::now();

    if axis == "rho_c" {
        // the central-density axis is the mass-curve scan
        let eos = cfg.build_eos()?;
        let curve = critical_mass_scan(eos, values, cfg.equilibrium.g, cfg.equilibrium.ode_tol);
        output::write_mass_curve_csv(&out_dir.join("mass_curve.csv"), &curve)?;
        let manifest = RunManifest {
            command: format!("sweep --axis rho_c ({} points)", values.len()),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config_echo(cfg),
            derived: serde_json::json!({
                "m_c_estimate": curve.m_c_estimate,
                "rising_at_edge": curve.rising_at_edge,
                "failures": curve.failures,
            }),
            wall_clock_s: wall.elapsed().as_secs_f64(),
            exit_status: "ok".into(),
        };
        output::write_manifest_atomic(out_dir, &manifest)?;
        println!(
            "sweep rho_c: {} points, M_c >= {:.9}, rising at edge: {}",
            curve.points.len(),
            curve.m_c_estimate,
            curve.rising_at_edge
        );
        return Ok(0);
    }

    // one simulate pipeline per value, concurrent, assembled in input order
    let results: Vec<(f64, Result<String, String>)> = values
        .par_iter()
        .enumerate()
        .map(|(k, &value)| {
            let row = (|| -> Result<String, CliError> {
                let sub_cfg = set_axis(cfg, axis, value)?;
                let sub_dir = out_dir.join(format!("{axis}_{k:03}"));
                std::fs::create_dir_all(&sub_dir)
                    .map_err(|e| CliError::Io(sub_dir.display().to_string(), e))?;
                let code = cmd_simulate(&sub_cfg, &sub_dir)?;
                Ok(format!("ok(exit {code})"))
            })();
            (value, row.map_err(|e| e.to_string()))
        })
        .collect();

    let mut summary = String::from("axis,value,status\n");
    let mut failures = 0usize;
    for (value, status) in &results {
        let s = match status {
            Ok(s) => s.clone(),
            Err(e) => {
                failures += 1;
                format!("error: {e}")
            }
        };
        summary.push_str(&format!("{axis},{},{}\n", output::fmt_float(*value), s));
    }
    std::fs::write(out_dir.join("summary.csv"), summary)
        .map_err(|e| CliError::Io("summary.csv".into(), e))?;
    let manifest = RunManifest {
        command: format!("sweep --axis {axis} ({} points)", values.len()),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config_echo(cfg),
        derived: serde_json::json!({ "failures": failures, "points": values.len() }),
        wall_clock_s: wall.elapsed().as_secs_f64(),
        exit_status: "ok".into(),
    };
    output::write_manifest_atomic(out_dir, &manifest)?;
    println!("sweep {axis}: {} points, {failures} failures", values.len());
    Ok(0)
}

fn cmd_check_eos(
    cfg: &RunConfig,
    out_dir: &Path,
    s_max: Option<f64>,
    samples: usize,
) -> Result<i32, CliError> {
    let wall = Instant::now();
    let eos = cfg.build_eos()?;
    let s_max = s_max.unwrap_or_else(|| cfg.equilibrium.rho_c.unwrap_or(1e6));
    let report = eos.verify_structure_conditions(s_max, samples)?;
    let path = out_dir.join("eos_report.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("serializable"),
    )
    .map_err(|e| CliError::Io(path.display().to_string(), e))?;
    let manifest = RunManifest {
        command: "check-eos".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config_echo(cfg),
        derived: serde_json::json!({
            "gamma_bar": eos.gamma_bar(),
            "kappa_limit": format!("{}", eos.kappa_limit()),
            "passes": report.passes,
        }),
        wall_clock_s: wall.elapsed().as_secs_f64(),
        exit_status: "ok".into(),
    };
    output::write_manifest_atomic(out_dir, &manifest)?;
    println!(
        "check-eos: gamma_bar = {:.6} (empirical {:.6}), s p'/p in [{:.6}, {:.6}], pass = {}",
        report.gamma_bar_analytic,
        report.gamma_bar_empirical,
        report.ratio_p_min,
        report.ratio_p_max,
        report.passes
    );
    Ok(0)
}
