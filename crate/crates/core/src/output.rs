//! Deterministic CSV and JSON writers plus the per-run manifest.
//!
//! Every float is serialized with 17 significant digits so identical
//! configurations produce bitwise-identical data files; wall-clock and
//! other nondeterministic facts live only in the manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diagnostics::{DecayFit, EnergyReport, SupNormPanel};
use crate::equilibrium::{EnthalpyDistanceCheck, EquilibriumProfile, MassCurve, ResidualReport};
use crate::simulator::Snapshot;

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct OutputError {
    pub path: String,
    pub source: std::io::Error,
}

fn err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError {
        path: path.display().to_string(),
        source,
    }
}

/// 17-significant-digit formatting; round-trips f64 exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_profile_csv(path: &Path, p: &EquilibriumProfile) -> Result<(), OutputError> {
    let mut out = String::from("r,rho,phi,i,p\n");
    for j in 0..p.xs.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_float(p.xs[j]),
            fmt_float(p.rho_bar[j]),
            fmt_float(p.phi[j]),
            fmt_float(p.i_bar[j]),
            fmt_float(p.p_bar[j]),
        ));
    }
    fs::write(path, out).map_err(err(path))
}

pub fn write_mass_curve_csv(path: &Path, curve: &MassCurve) -> Result<(), OutputError> {
    let mut out = String::from("rho_c,M,R\n");
    for pt in &curve.points {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_float(pt.rho_c),
            fmt_float(pt.mass),
            fmt_float(pt.radius)
        ));
    }
    fs::write(path, out).map_err(err(path))
}

pub fn series_header() -> String {
    let mut h = String::from("t,frakE,E0,E1,E2,D0,D1,D2,scrE0,scrD0,scrD1,eta,lyapunov");
    for c in SupNormPanel::COLUMNS {
        h.push(',');
        h.push_str(c);
    }
    h.push('\n');
    h
}

pub fn write_series_csv(path: &Path, reports: &[EnergyReport]) -> Result<(), OutputError> {
    let mut out = series_header();
    for r in reports {
        let mut row = vec![
            r.t,
            r.frak_e,
            r.e0,
            r.e1,
            r.e2,
            r.d0,
            r.d1,
            r.d2,
            r.scr_e0,
            r.scr_d0,
            r.scr_d1,
            r.eta_total,
            r.lyapunov,
        ];
        row.extend_from_slice(&r.sup.as_row());
        let line: Vec<String> = row.into_iter().map(fmt_float).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(err(path))
}

pub fn snapshot_filename(t: f64) -> String {
    format!("t_{t:014.6}.csv")
}

pub fn write_snapshot_csv(dir: &Path, xs: &[f64], snap: &Snapshot) -> Result<(), OutputError> {
    let path = dir.join(snapshot_filename(snap.t));
    let mut out = String::from("x,r,v,rho\n");
    for j in 0..snap.r.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_float(xs[j]),
            fmt_float(snap.r[j]),
            fmt_float(snap.v[j]),
            fmt_float(snap.rho[j]),
        ));
    }
    fs::write(&path, out).map_err(err(&path))
}

pub fn write_fits_json(path: &Path, fits: &[DecayFit]) -> Result<(), OutputError> {
    let doc = serde_json::json!({ "fits": fits });
    fs::write(
        path,
        serde_json::to_string_pretty(&doc).expect("serializable"),
    )
    .map_err(err(path))
}

pub fn write_equilibrium_report_json(
    path: &Path,
    residual: &ResidualReport,
    har1: &EnthalpyDistanceCheck,
) -> Result<(), OutputError> {
    let doc = serde_json::json!({
        "residual": residual,
        "enthalpy_distance": har1,
    });
    fs::write(
        path,
        serde_json::to_string_pretty(&doc).expect("serializable"),
    )
    .map_err(err(path))
}

/// Manifest written atomically (temp file + rename) at the end of a run.
#[derive(Debug, serde::Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: toml::Value,
    pub derived: serde_json::Value,
    pub wall_clock_s: f64,
    pub exit_status: String,
}

pub fn write_manifest_atomic(dir: &Path, manifest: &RunManifest) -> Result<(), OutputError> {
    let tmp = dir.join("manifest.json.tmp");
    let fin = dir.join("manifest.json");
    {
        let mut f = fs::File::create(&tmp).map_err(err(&tmp))?;
        f.write_all(
            serde_json::to_string_pretty(manifest)
                .expect("serializable")
                .as_bytes(),
        )
        .map_err(err(&tmp))?;
        f.sync_all().map_err(err(&tmp))?;
    }
    fs::rename(&tmp, &fin).map_err(err(&fin))
}
