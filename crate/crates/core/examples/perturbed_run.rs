//! Minimal library-level driver: solve a polytrope equilibrium, kick it
//! with a compatible velocity bump, evolve, and print the decay fits.
//!
//! Usage: perturbed_run [gamma] [t_final] [n_cells]

use std::sync::Arc;

use starstab::diagnostics::{fit_decay, theorem_rates, DiagnosticsConfig};
use starstab::eos::EquationOfState;
use starstab::equilibrium::integrate_profile;
use starstab::simulator::{
    make_compatible_perturbation, run, PerturbationKind, SimConfig, SimSetup,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gamma: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let t_final: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(50.0);
    let n: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(256);

    let eos = EquationOfState::polytrope(1.0, gamma).expect("eos");
    let profile = Arc::new(integrate_profile(eos, 1.0, 1.0, 1e-10, n).expect("equilibrium"));
    println!(
        "gamma = {gamma}: Rbar = {:.9}, M = {:.9}",
        profile.r_bar, profile.mass
    );

    let setup = SimSetup::new(eos, profile, n, 2.0, 0.2, 0.2).expect("setup");
    let (r0, v0, _) =
        make_compatible_perturbation(&setup, PerturbationKind::VelocityBump, 1e-3).expect("ic");
    let cfg = SimConfig {
        n_cells: n,
        t_final,
        snapshot_every: 0.5,
        ..Default::default()
    };
    let diag = DiagnosticsConfig::default();
    let traj = run(&setup, r0, v0, &cfg, &diag).expect("run");
    println!(
        "frakE(0) = {:.6e}, steps = {}, rejections = {}, failure = {:?}",
        traj.frak_e0, traj.total_steps, traj.total_rejections, traj.failure
    );

    let rates = theorem_rates(eos.gamma_bar(), diag.theta).expect("rates");
    println!("zeta = {:.4}, Upsilon = {}", rates.zeta, rates.upsilon);
    let window = (0.3 * t_final, t_final);
    for (name, series, predicted) in [
        (
            "D1",
            traj.reports.iter().map(|r| (r.t, r.d1)).collect::<Vec<_>>(),
            rates.rates["two_zeta"],
        ),
        (
            "sup|v|^2",
            traj.reports
                .iter()
                .map(|r| (r.t, r.sup.v * r.sup.v))
                .collect::<Vec<_>>(),
            rates.rates["two_zeta_minus_half"],
        ),
    ] {
        match fit_decay(name, &series, window, predicted, diag.slack) {
            Ok(f) => println!(
                "{name}: fitted slope {:+.3} vs predicted -{:.3} (one-sided verdict: {})",
                f.fitted_exponent, f.predicted_exponent, f.verdict
            ),
            Err(e) => println!("{name}: fit unavailable ({e})"),
        }
    }
}
