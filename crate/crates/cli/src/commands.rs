//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sphereflow_core::*;

use crate::config::{spectrum_cap_from_env, RunSpec};
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, format_f64, write_json, write_plotdata, write_timeseries, RunManifest};
use crate::snapshot::{write_snapshot, SnapshotMeta};

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub failure: Option<String>,
    pub steps: usize,
    pub final_energy: f64,
    pub final_lambda: f64,
    pub final_residual: f64,
    pub energy_eq_residual: f64,
    pub norm_drift: f64,
}

/// Runs the flow and writes `timeseries.csv`, snapshots, plot data and
/// `manifest.json` into `out`. Outputs are written even when the solver
/// fails part-way; the summary records the failure.
pub fn cmd_run(spec: &RunSpec, out: &Path) -> Result<RunSummary> {
    ensure_dir(out)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let u0 = spec.initial_field()?;
    let run = run_flow(&spec.domain, &u0, &spec.flow)?;

    let mut outputs = Vec::new();
    let ts = out.join("timeseries.csv");
    write_timeseries(&ts, &run.series)?;
    outputs.push(ts);
    if spec.output.snapshots {
        let dir = out.join("snapshots");
        ensure_dir(&dir)?;
        for (i, snap) in run.snapshots.iter().enumerate() {
            let path = dir.join(format!("snap_{i:04}.sphf"));
            write_snapshot(&snap.field, SnapshotMeta { t: snap.t, p: spec.flow.p }, &path)?;
            outputs.push(path);
        }
    }
    if spec.output.plotdata {
        outputs.extend(write_plotdata(out, &run.series)?);
    }

    let summary = summarize(&run);
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_digest: &spec.digest,
        seed: spec.flow.seed,
        domain: &spec.domain,
        flow: &spec.flow,
        initial: &spec.initial,
        output: &spec.output,
        outputs: outputs.iter().map(|p| relative(out, p)).collect(),
        termination: run.termination,
        failure: run.failure.clone(),
        steps: run.steps,
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(summary)
}

fn relative(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

fn summarize(run: &RunResult) -> RunSummary {
    let last = run.series.last();
    let get = |f: fn(&DiagnosticsRecord) -> f64| last.map_or(f64::NAN, f);
    RunSummary {
        termination: run.termination,
        failure: run.failure.clone(),
        steps: run.steps,
        final_energy: get(|r| r.energy),
        final_lambda: get(|r| r.lambda),
        final_residual: get(|r| r.stat_residual),
        energy_eq_residual: get(|r| r.energy_eq_residual),
        norm_drift: get(|r| (r.l2_norm - 1.0).abs()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryReport {
    pub multiplier: f64,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda1_h: f64,
    pub config_digest: String,
}

/// Solves for a ground state and writes `stationary.json` plus the state as
/// `ground_state.sphf`.
pub fn cmd_stationary(spec: &RunSpec, out: &Path, tol: f64) -> Result<StationaryReport> {
    ensure_dir(out)?;
    let u0 = spec.initial_field()?;
    let result = solve_ground_state(&spec.domain, &u0, &spec.flow, tol)?;
    let report = StationaryReport {
        multiplier: result.multiplier,
        energy: result.energy,
        residual: result.residual,
        iterations: result.iterations,
        converged: result.converged,
        lambda1_h: spec.domain.lambda1_h(),
        config_digest: spec.digest.clone(),
    };
    write_json(&out.join("stationary.json"), &report)?;
    write_snapshot(
        &result.field,
        SnapshotMeta { t: result.iterations as f64 * spec.flow.dt, p: spec.flow.p },
        &out.join("ground_state.sphf"),
    )?;
    Ok(report)
}

pub const SUITES: [&str; 7] = ["nonlinearity", "modified", "surjectivity", "resolvent", "yosida", "energy", "theta"];

/// Default verification grid: (0, π) with 63 interior nodes.
pub fn default_verify_domain() -> Domain {
    make_domain(1, &[std::f64::consts::PI], &[63]).expect("valid default domain")
}

/// Runs one suite (or `all`) and writes `verify_<suite>.json`. The boolean
/// is true when every non-informational report passed.
pub fn cmd_verify(suite: &str, seed: u64, domain: &Domain, out: Option<&Path>) -> Result<(Vec<PropertyReport>, bool)> {
    let names: Vec<&str> = match suite {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => return Err(CliError::UnknownSuite(other.to_string(), format!("all, {}", SUITES.join(", ")))),
    };
    let mut reports = Vec::new();
    for name in names {
        reports.extend(run_suite(name, seed, domain)?);
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join(format!("verify_{suite}.json")), &reports)?;
    }
    let ok = reports.iter().all(PropertyReport::acceptable);
    Ok((reports, ok))
}

fn run_suite(name: &str, seed: u64, domain: &Domain) -> Result<Vec<PropertyReport>> {
    let settings = CgSettings::with_tolerance(1e-13);
    let reports = match name {
        "nonlinearity" => [2.0, 3.0, 4.0, 6.0]
            .iter()
            .map(|&p| check_nonlinearity_monotone(domain, p, 1000, seed))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        "modified" => {
            let mut v = Vec::new();
            for p in [2.0, 4.0] {
                for k in [1.0, 5.0] {
                    let params = CutoffParams::discrete(domain, k, p)?;
                    let gamma = monotonicity_constant(&params)?;
                    v.push(check_modified_monotone(domain, &params, gamma, 1000, seed)?);
                }
            }
            // Expected-fail mode: no shift at all.
            let params = CutoffParams::discrete(domain, 1.0, 2.0)?;
            v.push(check_modified_monotone(domain, &params, 0.0, 1000, seed)?);
            v
        }
        "surjectivity" => {
            let params = CutoffParams::discrete(domain, 1.0, 2.0)?;
            vec![check_surjectivity(domain, &params, 11.0, 100, seed, &settings)?]
        }
        "resolvent" => check_resolvent_bounds(domain, &[0.1, 1.0, 10.0, 100.0], &settings)?,
        "yosida" => {
            let spectrum = compute_spectrum(domain)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&spectrum, &mut rng, FieldKind::LowPass, 1.0)?;
            vec![check_yosida_convergence(domain, &u, &[1.0, 10.0, 100.0, 1000.0], &settings)?]
        }
        "energy" => {
            let spectrum = compute_spectrum(domain)?;
            let u0 = normalized(
                domain,
                &spectrum.ordered_eigenvector(1)?.scaled(0.8).add(&spectrum.ordered_eigenvector(2)?.scaled(0.6)),
            )?;
            let mut v = Vec::new();
            for p in [2.0, 4.0] {
                let coarse = run_flow(domain, &u0, &FlowConfig::new(p, Integrator::Imex, 2e-3, 2.0))?;
                let fine = run_flow(domain, &u0, &FlowConfig::new(p, Integrator::Imex, 1e-3, 2.0))?;
                v.push(check_energy_identities(&coarse, p, Some(&fine))?);
            }
            v
        }
        "theta" => vec![check_theta_inequality(10_000, seed)],
        _ => unreachable!("suite names are checked by the caller"),
    };
    Ok(reports)
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub dt: f64,
    pub p: f64,
    pub mu: Option<f64>,
}

impl SweepPoint {
    pub fn dir_name(&self) -> String {
        let mu = self.mu.map_or("none".to_string(), |m| m.to_string());
        format!("dt{}_p{}_mu{}", self.dt, self.p, mu)
    }
}

/// Cross product of the lists; an empty list keeps the configured value.
pub fn sweep_points(spec: &RunSpec, dts: &[f64], ps: &[f64], mus: &[f64]) -> Vec<SweepPoint> {
    let dts = if dts.is_empty() { vec![spec.flow.dt] } else { dts.to_vec() };
    let ps = if ps.is_empty() { vec![spec.flow.p] } else { ps.to_vec() };
    let mus: Vec<Option<f64>> = if mus.is_empty() { vec![spec.flow.yosida_mu] } else { mus.iter().map(|&m| Some(m)).collect() };
    let mut points = Vec::new();
    for &p in &ps {
        for &mu in &mus {
            for &dt in &dts {
                points.push(SweepPoint { dt, p, mu });
            }
        }
    }
    points
}

/// Runs every sweep point in its own subdirectory, at most `jobs` at a
/// time, then writes `convergence.csv` joining the final diagnostics. The
/// `energy_gap_vs_finest` column compares each run with the smallest `dt`
/// sharing its `p` and `μ`.
pub fn cmd_sweep(spec: &RunSpec, out: &Path, points: &[SweepPoint], jobs: usize) -> Result<Vec<(SweepPoint, RunSummary)>> {
    ensure_dir(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {jobs} worker threads: {e}")))?;
    let results: Vec<Result<RunSummary>> = pool.install(|| {
        points
            .par_iter()
            .map(|pt| {
                let mut sub = spec.clone();
                sub.flow.dt = pt.dt;
                sub.flow.p = pt.p;
                sub.flow.yosida_mu = pt.mu;
                if let Some(c) = sub.flow.cutoff.as_mut() {
                    c.p = pt.p;
                }
                sub.flow.validate().map_err(|e| CliError::Validation(e.to_string()))?;
                cmd_run(&sub, &out.join(pt.dir_name()))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(points.len());
    for (pt, r) in points.iter().zip(results) {
        rows.push((*pt, r?));
    }

    let path = out.join("convergence.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "dt",
        "p",
        "mu",
        "steps",
        "termination",
        "final_energy",
        "final_lambda",
        "final_residual",
        "energy_eq_residual",
        "norm_drift",
        "energy_gap_vs_finest",
    ])?;
    for (pt, s) in &rows {
        let finest = rows
            .iter()
            .filter(|(q, _)| q.p == pt.p && q.mu == pt.mu)
            .min_by(|a, b| a.0.dt.total_cmp(&b.0.dt))
            .map(|(_, s)| s.final_energy)
            .unwrap_or(f64::NAN);
        w.write_record([
            format_f64(pt.dt),
            format_f64(pt.p),
            pt.mu.map(format_f64).unwrap_or_default(),
            s.steps.to_string(),
            termination_label(s.termination),
            format_f64(s.final_energy),
            format_f64(s.final_lambda),
            format_f64(s.final_residual),
            format_f64(s.energy_eq_residual),
            format_f64(s.norm_drift),
            format_f64((s.final_energy - finest).abs()),
        ])?;
    }
    w.flush().map_err(CliError::io(&path))?;
    Ok(rows)
}

/// Lowest `m` eigenpairs with continuum counterparts; writes
/// `spectrum.csv` when `out` is given.
pub fn cmd_spectrum(domain: &Domain, m: usize, out: Option<&Path>) -> Result<Vec<Mode>> {
    let cap = spectrum_cap_from_env()?;
    let modes = Spectrum::with_cap(domain, cap)?.lowest_modes(m);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let path = dir.join("spectrum.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["rank", "index", "eigenvalue", "continuum"])?;
        for (rank, mode) in modes.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                index_label(&mode.index),
                format_f64(mode.eigenvalue),
                format_f64(mode.continuum),
            ])?;
        }
        w.flush().map_err(CliError::io(&path))?;
    }
    Ok(modes)
}

pub fn index_label(index: &[usize]) -> String {
    index.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Output directory: the flag wins, then `[output].dir`, then a default.
pub fn output_dir(flag: Option<&Path>, spec: Option<&RunSpec>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| spec.and_then(|s| s.output.dir.as_ref().map(|d| s.base_dir.join(d))))
        .unwrap_or_else(|| PathBuf::from("sphereflow-out"))
}

pub fn termination_label(t: Termination) -> String {
    serde_json::to_value(t).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}
