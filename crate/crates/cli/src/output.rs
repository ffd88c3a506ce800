//! Time series, plot data and manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sphereflow_core::{DiagnosticsRecord, DomainSpec, FlowConfig, Termination};

use crate::config::{InitialCondition, OutputSettings};
use crate::error::{CliError, Result};

pub const TIMESERIES_COLUMNS: [&str; 11] = [
    "t",
    "l2_norm",
    "energy",
    "grad_sq",
    "lp_p",
    "lambda",
    "stat_residual",
    "cum_dissipation",
    "energy_eq_residual",
    "frac_alpha",
    "frac_beta",
];

/// Scientific notation with 17 significant digits, enough to round-trip
/// every `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_timeseries(path: &Path, series: &[DiagnosticsRecord]) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(TIMESERIES_COLUMNS)?;
    for r in series {
        let optional = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
        w.write_record([
            format_f64(r.t),
            format_f64(r.l2_norm),
            format_f64(r.energy),
            format_f64(r.grad_sq),
            format_f64(r.lp_p),
            format_f64(r.lambda),
            format_f64(r.stat_residual),
            format_f64(r.cum_dissipation),
            format_f64(r.energy_eq_residual),
            optional(r.frac_alpha),
            optional(r.frac_beta),
        ])?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

/// Writes gnuplot-ready two-column files; returns their paths.
pub fn write_plotdata(dir: &Path, series: &[DiagnosticsRecord]) -> Result<Vec<PathBuf>> {
    let e_final = series.last().map_or(0.0, |r| r.energy);
    let columns: [(&str, &str, Box<dyn Fn(&DiagnosticsRecord) -> f64>); 3] = [
        ("energy_decay.dat", "E(t) - E(T)", Box::new(move |r| r.energy - e_final)),
        ("norm_drift.dat", "| ||u(t)|| - 1 |", Box::new(|r| (r.l2_norm - 1.0).abs())),
        ("residual.dat", "||grad_M E(u(t))||", Box::new(|r| r.stat_residual)),
    ];
    let mut written = Vec::new();
    for (name, label, value) in columns {
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
        let mut body = format!("# t  {label}\n");
        for r in series {
            body.push_str(&format!("{} {}\n", format_f64(r.t), format_f64(value(r))));
        }
        w.write_all(body.as_bytes()).map_err(CliError::io(&path))?;
        w.flush().map_err(CliError::io(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_digest: &'a str,
    pub seed: u64,
    pub domain: &'a DomainSpec,
    pub flow: &'a FlowConfig,
    pub initial: &'a InitialCondition,
    pub output: &'a OutputSettings,
    pub outputs: Vec<String>,
    pub termination: Termination,
    pub failure: Option<String>,
    pub steps: usize,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}
