//! Time integration of the constrained flow
//!
//! ```text
//! du/dt = −Au − N(u) + c(u) u
//! ```
//!
//! where `c(u) = λ(u)` for the plain flow and `c(u) = g^K(u)/u` for the
//! cut-off flow. In Yosida mode the nonlinearity is filtered, `N ↦ J_μ N`,
//! and the initial datum is replaced by `J_μ u₀`.

use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Field};
use crate::error::{Error, Result};
use crate::functionals::{check_p, cutoff_coefficient, gradient_parts, gradient_unchecked, CutoffParams};
use crate::resolvent::{cg_shifted, CgSettings};
use crate::spectrum::{Spectrum, DEFAULT_SPECTRUM_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Explicit Euler on the full right-hand side.
    ProjectedEuler,
    /// `A` implicit, everything else explicit.
    Imex,
    /// Fully implicit, solved by fixed-point iteration on the nonlinear part.
    BackwardEuler,
    /// Exponential time differencing in the eigenbasis.
    Etd,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projected_euler" => Ok(Integrator::ProjectedEuler),
            "imex" => Ok(Integrator::Imex),
            "backward_euler" => Ok(Integrator::BackwardEuler),
            "etd" => Ok(Integrator::Etd),
            other => Err(Error::InvalidParameter(format!(
                "unknown integrator '{other}' (expected projected_euler, imex, backward_euler or etd)"
            ))),
        }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Integrator::ProjectedEuler => "projected_euler",
            Integrator::Imex => "imex",
            Integrator::BackwardEuler => "backward_euler",
            Integrator::Etd => "etd",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        FixedPointSettings {
            tolerance: 1e-10,
            max_iterations: 100,
        }
    }
}

/// Exponents of the fractional norms `‖A^α u‖`, `‖A^β u‖` recorded in the
/// diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalOrders {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FractionalOrders {
    fn default() -> Self {
        FractionalOrders {
            alpha: 0.75,
            beta: 1.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub p: f64,
    pub integrator: Integrator,
    pub dt: f64,
    pub horizon: f64,
    /// Rescale to unit norm after every step.
    pub renormalize: bool,
    pub cutoff: Option<CutoffParams>,
    pub yosida_mu: Option<f64>,
    pub sample_every: usize,
    /// Stop once `‖∇_M E(u)‖` drops to this value.
    pub stop_residual: Option<f64>,
    pub fixed_point: FixedPointSettings,
    pub cg: CgSettings,
    pub fractional: Option<FractionalOrders>,
    pub spectrum_cap: usize,
    pub seed: u64,
}

impl FlowConfig {
    /// Defaults: renormalization on, every step sampled, CG tolerance `1e-12`.
    pub fn new(p: f64, integrator: Integrator, dt: f64, horizon: f64) -> Self {
        FlowConfig {
            p,
            integrator,
            dt,
            horizon,
            renormalize: true,
            cutoff: None,
            yosida_mu: None,
            sample_every: 1,
            stop_residual: None,
            fixed_point: FixedPointSettings::default(),
            cg: CgSettings::with_tolerance(1e-12),
            fractional: None,
            spectrum_cap: DEFAULT_SPECTRUM_CAP,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt > 0 required, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon T > 0 required, got {}",
                self.horizon
            )));
        }
        if self.dt >= self.horizon {
            return Err(Error::InvalidParameter(format!(
                "dt < T required, got dt = {} and T = {}",
                self.dt, self.horizon
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every ≥ 1 required".into()));
        }
        if let Some(c) = &self.cutoff {
            c.validate()?;
            if c.p != self.p {
                return Err(Error::InvalidParameter(format!(
                    "cut-off exponent p = {} differs from flow exponent p = {}",
                    c.p, self.p
                )));
            }
        }
        if let Some(mu) = self.yosida_mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "Yosida μ > 0 required, got {mu}"
                )));
            }
        }
        if let Some(r) = self.stop_residual {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "stop residual must be positive, got {r}"
                )));
            }
        }
        if !(self.fixed_point.tolerance > 0.0) || self.fixed_point.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "fixed-point tolerance > 0 and cap ≥ 1 required".into(),
            ));
        }
        self.cg.validate()
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    fn needs_spectrum(&self) -> bool {
        self.integrator == Integrator::Etd || self.fractional.is_some()
    }
}

/// Explicit forcing `F(u) = c(u) u − Ñ(u)`, so that `rhs = −Au + F(u)`.
fn forcing(
    domain: &DomainSpec,
    u: &Field,
    config: &FlowConfig,
    spectrum: Option<&Spectrum>,
) -> Result<Field> {
    let parts = gradient_parts(domain, u, config.p);
    let s = parts.grad_sq + parts.lp_p;
    // Off the sphere the plain flow uses the orthogonal projection onto the
    // tangent space of the sphere through u, which keeps ‖u‖ invariant; on the
    // sphere this is exactly λ(u).
    let c = match &config.cutoff {
        Some(params) => cutoff_coefficient(s, params.k),
        None => {
            let norm_sq = domain.dot(u.values(), u.values());
            if norm_sq > 0.0 {
                s / norm_sq
            } else {
                0.0
            }
        }
    };
    let n = match config.yosida_mu {
        None => parts.nu,
        Some(mu) => filter_yosida(domain, mu, &parts.nu, config, spectrum)?,
    };
    Ok(u.scaled(c).sub(&n))
}

fn filter_yosida(
    domain: &DomainSpec,
    mu: f64,
    v: &Field,
    config: &FlowConfig,
    spectrum: Option<&Spectrum>,
) -> Result<Field> {
    match spectrum {
        Some(s) => s.apply_phi(|l| mu / (mu + l), v),
        None => {
            let (x, _) = cg_shifted(domain, mu, v.values(), None, &config.cg)?;
            Ok(Field::from_raw(v.domain(), x).scaled(mu))
        }
    }
}

/// Right-hand side of the flow: `−Au − N(u) + λ(u) u`, `−G^K(u)` with a
/// cut-off, and `−Au − J_μ N(u) + λ(u) u` in Yosida mode.
pub fn rhs(domain: &DomainSpec, u: &Field, config: &FlowConfig) -> Result<Field> {
    check_p(config.p)?;
    if !u.conforms_to(domain) {
        return Err(Error::DomainMismatch);
    }
    let f = forcing(domain, u, config, None)?;
    let mut au = vec![0.0; u.values().len()];
    domain.apply_a_into(u.values(), &mut au);
    Ok(f.sub(&Field::from_raw(u.domain(), au)))
}

fn retract(domain: &DomainSpec, u: Field, config: &FlowConfig) -> Result<Field> {
    if !config.renormalize {
        return Ok(u);
    }
    let norm = domain.norm(u.values());
    if !(norm >= 1e-12) || !norm.is_finite() {
        return Err(Error::NormCollapse { norm });
    }
    Ok(u.scaled(1.0 / norm))
}

fn check_step_input(domain: &DomainSpec, u: &Field, config: &FlowConfig) -> Result<()> {
    check_p(config.p)?;
    if !u.conforms_to(domain) {
        return Err(Error::DomainMismatch);
    }
    if !(config.dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt > 0 required, got {}",
            config.dt
        )));
    }
    Ok(())
}

/// `u + dt · rhs(u)`, then optional renormalization.
pub fn step_projected_euler(domain: &DomainSpec, u: &Field, config: &FlowConfig) -> Result<Field> {
    check_step_input(domain, u, config)?;
    let next = u.add_scaled(config.dt, &rhs(domain, u, config)?);
    if !next.is_finite() {
        return Err(Error::NonFinite("explicit step overflowed".into()));
    }
    retract(domain, next, config)
}

/// Solves `(I + dt A) x = b` as `(I/dt + A) x = b/dt`.
fn implicit_solve(
    domain: &DomainSpec,
    b: &Field,
    guess: &Field,
    dt: f64,
    settings: &CgSettings,
) -> Result<Field> {
    let scaled: Vec<f64> = b.values().iter().map(|v| v / dt).collect();
    let (x, _) = cg_shifted(domain, 1.0 / dt, &scaled, Some(guess.values()), settings)?;
    Ok(Field::from_raw(b.domain(), x))
}

fn imex_with(
    domain: &DomainSpec,
    u: &Field,
    config: &FlowConfig,
    settings: &CgSettings,
    spectrum: Option<&Spectrum>,
) -> Result<Field> {
    let b = u.add_scaled(config.dt, &forcing(domain, u, config, spectrum)?);
    let next = implicit_solve(domain, &b, u, config.dt, settings)?;
    retract(domain, next, config)
}

/// `(I + dt A) u⁺ = u + dt (c(u) u − N(u))`, then optional renormalization.
pub fn step_imex(
    domain: &DomainSpec,
    u: &Field,
    config: &FlowConfig,
    settings: &CgSettings,
) -> Result<Field> {
    check_step_input(domain, u, config)?;
    settings.validate()?;
    imex_with(domain, u, config, settings, None)
}

fn backward_euler_with(
    domain: &DomainSpec,
    u: &Field,
    config: &FlowConfig,
    settings: &CgSettings,
    spectrum: Option<&Spectrum>,
) -> Result<Field> {
    let fp = config.fixed_point;
    let mut iterate = u.clone();
    let mut last_change = f64::INFINITY;
    for _ in 0..fp.max_iterations {
        // With renormalization the forcing is evaluated on the sphere.
        let eval = if config.renormalize {
            let norm = domain.norm(iterate.values());
            if !(norm >= 1e-12) {
                return Err(Error::NormCollapse { norm });
            }
            iterate.scaled(1.0 / norm)
        } else {
            iterate.clone()
        };
        let b = u.add_scaled(config.dt, &forcing(domain, &eval, config, spectrum)?);
        let next = implicit_solve(domain, &b, &iterate, config.dt, settings)?;
        if !next.is_finite() {
            return Err(Error::NonFinite("backward Euler iterate overflowed".into()));
        }
        last_change = domain.norm(next.sub(&iterate).values());
        let scale = domain.norm(next.values()).max(1.0);
        iterate = next;
        if last_change <= fp.tolerance * scale {
            return retract(domain, iterate, config);
        }
    }
    Err(Error::NoConvergence {
        iterations: fp.max_iterations,
        residual: last_change,
    })
}

/// Fixed-point iteration `u^{k+1} = (I + dt A)^{-1}(u + dt F(u^k))` with the
/// multiplier lagged at the current iterate.
pub fn step_backward_euler(
    domain: &DomainSpec,
    u: &Field,
    config: &FlowConfig,
    settings: &CgSettings,
) -> Result<Field> {
    check_step_input(domain, u, config)?;
    settings.validate()?;
    backward_euler_with(domain, u, config, settings, None)
}

/// Per-mode factors `e^{−λ dt}` and `(1 − e^{−λ dt}) / λ`.
struct EtdFactors {
    decay: Vec<f64>,
    phi1: Vec<f64>,
}

impl EtdFactors {
    fn new(spectrum: &Spectrum, dt: f64) -> Self {
        let decay = spectrum.eigenvalues().iter().map(|&l| (-l * dt).exp()).collect();
        let phi1 = spectrum
            .eigenvalues()
            .iter()
            .map(|&l| -(-l * dt).exp_m1() / l)
            .collect();
        EtdFactors { decay, phi1 }
    }
}

fn etd_with(spectrum: &Spectrum, u: &Field, config: &FlowConfig, factors: &EtdFactors) -> Result<Field> {
    let domain = spectrum.domain_spec();
    let f = forcing(domain, u, config, Some(spectrum))?;
    let cu = spectrum.transform(u)?;
    let cf = spectrum.transform(&f)?;
    let next: Vec<f64> = cu
        .iter()
        .zip(&cf)
        .zip(factors.decay.iter().zip(&factors.phi1))
        .map(|((a, b), (e, g))| e * a + g * b)
        .collect();
    retract(domain, spectrum.inverse_transform(&next)?, config)
}

/// Variation-of-constants step with the forcing frozen over the step:
/// `u⁺ = e^{−A dt} u + A^{-1}(I − e^{−A dt}) F(u)`.
pub fn step_etd(spectrum: &Spectrum, u: &Field, config: &FlowConfig) -> Result<Field> {
    check_step_input(spectrum.domain_spec(), u, config)?;
    etd_with(spectrum, u, config, &EtdFactors::new(spectrum, config.dt))
}

/// Scalars recorded at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub l2_norm: f64,
    pub energy: f64,
    pub grad_sq: f64,
    pub lp_p: f64,
    pub lambda: f64,
    /// `‖Au + N(u) − λ(u) u‖`, the constrained gradient norm on the sphere.
    pub stat_residual: f64,
    /// `Σ dt ‖(u^{n+1} − u^n) / dt‖²`.
    pub cum_dissipation: f64,
    /// `|E(u(t)) + cum_dissipation − E(u₀)|`.
    pub energy_eq_residual: f64,
    pub frac_alpha: Option<f64>,
    pub frac_beta: Option<f64>,
    /// `(N(u), Au)`, nonnegative for monotone `N`.
    pub nonlinear_pairing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    ResidualStop,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_field: Field,
    pub series: Vec<DiagnosticsRecord>,
    pub termination: Termination,
    /// Fields at `t ∈ {1, 2, 4, 8, …} ∩ [0, T]`, plus the final state.
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    /// Message of the error that ended a failed run.
    pub failure: Option<String>,
}

struct Recorder<'a> {
    domain: &'a DomainSpec,
    config: &'a FlowConfig,
    spectrum: Option<&'a Spectrum>,
    energy0: f64,
}

impl Recorder<'_> {
    fn record(&self, t: f64, u: &Field, cum_dissipation: f64) -> Result<DiagnosticsRecord> {
        let parts = gradient_parts(self.domain, u, self.config.p);
        let lambda = parts.grad_sq + parts.lp_p;
        let energy = 0.5 * parts.grad_sq + parts.lp_p / self.config.p;
        let residual = parts.au.add(&parts.nu).add_scaled(-lambda, u);
        let nonlinear_pairing = self.domain.dot(parts.nu.values(), parts.au.values());
        let (frac_alpha, frac_beta) = match (self.spectrum, self.config.fractional) {
            (Some(s), Some(orders)) => (
                Some(s.fractional_norm(orders.alpha, u)?),
                Some(s.fractional_norm(orders.beta, u)?),
            ),
            _ => (None, None),
        };
        Ok(DiagnosticsRecord {
            t,
            l2_norm: self.domain.norm(u.values()),
            energy,
            grad_sq: parts.grad_sq,
            lp_p: parts.lp_p,
            lambda,
            stat_residual: self.domain.norm(residual.values()),
            cum_dissipation,
            energy_eq_residual: (energy + cum_dissipation - self.energy0).abs(),
            frac_alpha,
            frac_beta,
            nonlinear_pairing,
        })
    }
}

/// Integrates from `u0` to the horizon (or the residual stop), computing a
/// spectrum when the integrator or the diagnostics need one.
pub fn run_flow(domain: &DomainSpec, u0: &Field, config: &FlowConfig) -> Result<RunResult> {
    let spectrum = if config.needs_spectrum() {
        match Spectrum::with_cap(u0.domain(), config.spectrum_cap) {
            Ok(s) => Some(s),
            Err(e) if config.integrator == Integrator::Etd => return Err(e),
            Err(_) => None,
        }
    } else {
        None
    };
    run_flow_with_spectrum(domain, u0, config, spectrum.as_ref())
}

/// As [`run_flow`], reusing a precomputed spectrum.
pub fn run_flow_with_spectrum(
    domain: &DomainSpec,
    u0: &Field,
    config: &FlowConfig,
    spectrum: Option<&Spectrum>,
) -> Result<RunResult> {
    config.validate()?;
    if !u0.conforms_to(domain) {
        return Err(Error::DomainMismatch);
    }
    if let Some(s) = spectrum {
        if !u0.conforms_to(s.domain_spec()) {
            return Err(Error::DomainMismatch);
        }
    }
    let norm0 = domain.norm(u0.values());
    if config.cutoff.is_none() && (norm0 - 1.0).abs() > 1e-8 {
        return Err(Error::NotOnSphere { norm: norm0 });
    }
    if config.integrator == Integrator::Etd && spectrum.is_none() {
        return Err(Error::InvalidParameter("ETD integration needs a spectrum".into()));
    }

    let start = match config.yosida_mu {
        Some(mu) => filter_yosida(domain, mu, u0, config, spectrum)?,
        None => u0.clone(),
    };

    let energy0 = {
        let parts = gradient_parts(domain, &start, config.p);
        0.5 * parts.grad_sq + parts.lp_p / config.p
    };
    let recorder = Recorder {
        domain,
        config,
        spectrum,
        energy0,
    };
    let etd = match (config.integrator, spectrum) {
        (Integrator::Etd, Some(s)) => Some(EtdFactors::new(s, config.dt)),
        _ => None,
    };

    let steps = config.steps();
    let mut u = start;
    let mut cum_dissipation = 0.0;
    let mut series = vec![recorder.record(0.0, &u, 0.0)?];
    let mut snapshots = Vec::new();
    let mut next_snapshot = 1.0;
    let mut termination = Termination::Horizon;
    let mut failure = None;
    let mut taken = 0;

    if let Some(tol) = config.stop_residual {
        if series[0].stat_residual <= tol {
            return Ok(RunResult {
                final_field: u.clone(),
                series,
                termination: Termination::ResidualStop,
                snapshots: vec![Snapshot { t: 0.0, field: u }],
                steps: 0,
                failure: None,
            });
        }
    }

    for n in 1..=steps {
        let stepped = match config.integrator {
            Integrator::ProjectedEuler => step_projected_euler(domain, &u, config),
            Integrator::Imex => imex_with(domain, &u, config, &config.cg, spectrum),
            Integrator::BackwardEuler => backward_euler_with(domain, &u, config, &config.cg, spectrum),
            Integrator::Etd => etd_with(
                spectrum.expect("checked above"),
                &u,
                config,
                etd.as_ref().expect("built"),
            ),
        };
        let next = match stepped {
            Ok(next) => next,
            Err(e) => {
                termination = Termination::SolverFailure;
                failure = Some(e.to_string());
                break;
            }
        };
        let t = n as f64 * config.dt;
        let diff = next.sub(&u);
        cum_dissipation += domain.dot(diff.values(), diff.values()) / config.dt;
        u = next;
        taken = n;

        let mut stop = false;
        if let Some(tol) = config.stop_residual {
            stop = domain.norm(gradient_unchecked(domain, &u, config.p).values()) <= tol;
        }
        if t >= next_snapshot - 0.5 * config.dt && next_snapshot <= config.horizon {
            snapshots.push(Snapshot { t, field: u.clone() });
            while next_snapshot <= t + 0.5 * config.dt {
                next_snapshot *= 2.0;
            }
        }
        if n % config.sample_every == 0 || n == steps || stop {
            let rec = recorder.record(t, &u, cum_dissipation)?;
            let previous = series.last().map_or(rec.energy, |r| r.energy);
            let blown = !rec.energy.is_finite() || (previous > 0.0 && rec.energy > 10.0 * previous);
            series.push(rec);
            if blown {
                termination = Termination::SolverFailure;
                failure = Some(format!("energy blow-up at t = {t}"));
                break;
            }
        }
        if stop {
            termination = Termination::ResidualStop;
            break;
        }
    }

    if snapshots.last().map_or(true, |s| s.t < taken as f64 * config.dt) {
        snapshots.push(Snapshot {
            t: taken as f64 * config.dt,
            field: u.clone(),
        });
    }
    Ok(RunResult {
        final_field: u,
        series,
        termination,
        snapshots,
        steps: taken,
        failure,
    })
}

/// Normalized copy of `u`.
pub fn normalized(domain: &DomainSpec, u: &Field) -> Result<Field> {
    let norm = domain.norm(u.values());
    if !(norm > 0.0) {
        return Err(Error::NormCollapse { norm });
    }
    Ok(u.scaled(1.0 / norm))
}
