//! Stationary states, omega-limit detection and Łojasiewicz rate fits.

use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Field};
use crate::error::{Error, Result};
use crate::flow::{run_flow, DiagnosticsRecord, FlowConfig, Snapshot, Termination};
use crate::functionals::{constrained_gradient, energy, gradient_parts};

/// `‖∇_M E(u)‖` for `u` on the unit sphere.
pub fn stationarity_residual(domain: &DomainSpec, u: &Field, p: f64) -> Result<f64> {
    let g = constrained_gradient(domain, u, p)?;
    Ok(domain.norm(g.values()))
}

#[derive(Debug, Clone)]
pub struct StationaryResult {
    pub field: Field,
    pub multiplier: f64,
    pub residual: f64,
    pub energy: f64,
    /// Flow steps taken; zero when the start was already stationary.
    pub iterations: usize,
    /// False when the horizon was reached before the tolerance.
    pub converged: bool,
}

/// Runs the constrained flow from `u0` until `‖∇_M E‖ ≤ tol`.
pub fn solve_ground_state(
    domain: &DomainSpec,
    u0: &Field,
    config: &FlowConfig,
    tol: f64,
) -> Result<StationaryResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut config = config.clone();
    config.stop_residual = Some(tol);
    config.sample_every = config.steps();
    let run = run_flow(domain, u0, &config)?;
    if run.termination == Termination::SolverFailure {
        return Err(Error::NoConvergence {
            iterations: run.steps,
            residual: run.series.last().map_or(f64::NAN, |r| r.stat_residual),
        });
    }
    let norm = domain.norm(run.final_field.values());
    let v = run.final_field.scaled(1.0 / norm);
    let parts = gradient_parts(domain, &v, config.p);
    let multiplier = parts.grad_sq + parts.lp_p;
    let residual = domain.norm(parts.au.add(&parts.nu).add_scaled(-multiplier, &v).values());
    Ok(StationaryResult {
        energy: 0.5 * parts.grad_sq + parts.lp_p / config.p,
        multiplier,
        residual,
        iterations: run.steps,
        converged: residual <= tol,
        field: v,
    })
}

/// Discrete H² surrogate `‖A(u − v)‖`.
pub fn h2_distance(domain: &DomainSpec, u: &Field, v: &Field) -> Result<f64> {
    let diff = u.sub(v);
    Ok(domain.norm(crate::domain::apply_a(domain, &diff)?.values()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Snapshot index of the first member, used as representative.
    pub representative: usize,
    pub members: Vec<usize>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaLimitReport {
    pub clusters: Vec<Cluster>,
    /// Snapshot indices treated as the tail (the later half).
    pub tail: Vec<usize>,
    pub tail_single_cluster: bool,
    /// Largest energy gap between representatives of clusters met by the tail.
    pub tail_energy_spread: f64,
    pub energy_constant: bool,
}

/// Groups snapshots whose L² distance to a cluster representative is at most
/// `tol`, and checks whether the tail collapses to one cluster of constant
/// energy.
pub fn detect_omega_limit(
    domain: &DomainSpec,
    snapshots: &[Snapshot],
    p: f64,
    tol: f64,
) -> Result<OmegaLimitReport> {
    if snapshots.len() < 2 {
        return Err(Error::InsufficientData(
            "omega-limit detection needs at least two snapshots".into(),
        ));
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    for (i, snap) in snapshots.iter().enumerate() {
        if !snap.field.conforms_to(domain) {
            return Err(Error::DomainMismatch);
        }
        let home = clusters.iter_mut().find(|c| {
            let rep = &snapshots[c.representative].field;
            domain.norm(rep.sub(&snap.field).values()) <= tol
        });
        match home {
            Some(c) => c.members.push(i),
            None => clusters.push(Cluster {
                representative: i,
                members: vec![i],
                energy: energy(domain, &snap.field, p)?,
            }),
        }
    }

    let tail_start = snapshots.len() / 2;
    let tail: Vec<usize> = (tail_start..snapshots.len()).collect();
    let tail_clusters: Vec<&Cluster> = clusters
        .iter()
        .filter(|c| c.members.iter().any(|m| *m >= tail_start))
        .collect();
    let (lo, hi) = tail_clusters
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.energy), hi.max(c.energy))
        });
    let spread = hi - lo;
    Ok(OmegaLimitReport {
        tail_single_cluster: tail_clusters.len() == 1,
        energy_constant: spread <= tol,
        tail_energy_spread: spread,
        tail,
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LojasiewiczFit {
    pub theta: f64,
    /// Smallest `C` with `(E − E_∞)^{1−θ} ≤ C ‖∇_M E‖` over the window.
    pub constant: f64,
    /// Decay rate of `E − E_∞` from a log-linear least-squares fit.
    pub rate: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
    /// Largest and smallest `‖∇_M E‖ / (E − E_∞)^{1−θ}` over the window.
    pub rho_max: f64,
    pub rho_min: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub e_inf: f64,
    /// Largest distance to the limit over the window, when snapshots are supplied.
    pub sigma: Option<f64>,
}

const THETA_GRID: [f64; 10] = [0.5, 0.45, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05];

/// Fits the Łojasiewicz exponent and exponential rate on the last stretch of
/// the series where `E − E_∞ ∈ [1e-12, 1e-2]`.
pub fn fit_lojasiewicz(series: &[DiagnosticsRecord], e_inf: f64) -> Result<LojasiewiczFit> {
    let in_window = |r: &DiagnosticsRecord| {
        let gap = r.energy - e_inf;
        (1e-12..=1e-2).contains(&gap) && r.stat_residual > 0.0
    };
    let end = series
        .iter()
        .rposition(in_window)
        .ok_or_else(|| Error::InsufficientData("no samples with E − E_∞ in [1e-12, 1e-2]".into()))?;
    let mut start = end;
    while start > 0 && in_window(&series[start - 1]) {
        start -= 1;
    }
    let window = &series[start..=end];
    if window.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "fit window has only {} samples",
            window.len()
        )));
    }

    let ts: Vec<f64> = window.iter().map(|r| r.t).collect();
    let logs: Vec<f64> = window.iter().map(|r| (r.energy - e_inf).ln()).collect();
    let (slope, r_squared) = least_squares(&ts, &logs);

    for theta in THETA_GRID {
        let rho: Vec<f64> = window
            .iter()
            .map(|r| r.stat_residual / (r.energy - e_inf).powf(1.0 - theta))
            .collect();
        let rho_max = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rho_min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        if rho_max / rho_min <= 100.0 {
            return Ok(LojasiewiczFit {
                theta,
                constant: 1.0 / rho_min,
                rate: -slope,
                r_squared,
                rho_max,
                rho_min,
                window: (ts[0], ts[ts.len() - 1]),
                samples: window.len(),
                e_inf,
                sigma: None,
            });
        }
    }
    Err(Error::InsufficientData(
        "no candidate θ keeps the gradient ratio bounded".into(),
    ))
}

/// Fit with `E_∞` taken from the final sample.
pub fn fit_lojasiewicz_last_sample(series: &[DiagnosticsRecord]) -> Result<LojasiewiczFit> {
    let last = series
        .last()
        .ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    fit_lojasiewicz(series, last.energy)
}

impl LojasiewiczFit {
    /// Fills `sigma` from snapshots inside the fit window.
    pub fn with_sigma(mut self, domain: &DomainSpec, snapshots: &[Snapshot], limit: &Field) -> Self {
        let (a, b) = self.window;
        self.sigma = snapshots
            .iter()
            .filter(|s| s.t >= a && s.t <= b)
            .map(|s| {
                let plus = domain.norm(s.field.sub(limit).values());
                let minus = domain.norm(s.field.add(limit).values());
                plus.min(minus)
            })
            .reduce(f64::max);
        self
    }
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}
