//! TOML run configuration.
//!
//! ```toml
//! [domain]
//! lengths = [3.141592653589793]
//! sizes = [255]
//!
//! [flow]
//! p = 2.0
//! integrator = "imex"        # projected_euler | imex | backward_euler | etd
//! dt = 1e-3
//! horizon = 15.0
//! initial = { kind = "modes", coefficients = [0.8, 0.6] }
//!
//! [cutoff]                   # optional: run the cut-off flow
//! k = 5.0
//!
//! [yosida]                   # optional: filter the nonlinearity through J_μ
//! mu = 100.0
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Unknown keys are errors. Every effective value, defaults included, is
//! written to the run manifest.

use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sphereflow_core::{
    compute_spectrum, make_domain, normalized, random_field, CgSettings, CutoffParams, Domain, Field, FieldKind,
    FixedPointSettings, FlowConfig, FractionalOrders, Integrator, Spectrum, DEFAULT_SPECTRUM_CAP,
};

use crate::error::{CliError, Result};
use crate::snapshot::read_snapshot;

/// Environment variable overriding the eigendecomposition size cap.
pub const SPECTRUM_CAP_ENV: &str = "SPHEREFLOW_SPECTRUM_CAP";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: RawDomain,
    flow: RawFlow,
    cutoff: Option<RawCutoff>,
    yosida: Option<RawYosida>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawDomain {
    dimension: Option<usize>,
    lengths: Vec<f64>,
    sizes: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    p: f64,
    #[serde(default = "default_integrator")]
    integrator: Integrator,
    dt: f64,
    horizon: f64,
    #[serde(default = "default_true")]
    renormalize: bool,
    #[serde(default = "default_one")]
    sample_every: usize,
    stop_residual: Option<f64>,
    #[serde(default = "default_cg_tolerance")]
    cg_tolerance: f64,
    cg_max_iterations: Option<usize>,
    #[serde(default)]
    fixed_point_tolerance: Option<f64>,
    #[serde(default)]
    fixed_point_max_iterations: Option<usize>,
    #[serde(default)]
    fractional: bool,
    frac_alpha: Option<f64>,
    frac_beta: Option<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    initial: InitialCondition,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCutoff {
    k: f64,
    lambda1: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawYosida {
    mu: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    snapshots: bool,
    #[serde(default = "default_true")]
    plotdata: bool,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput { dir: None, snapshots: true, plotdata: true }
    }
}

fn default_integrator() -> Integrator {
    Integrator::Imex
}
fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}
fn default_cg_tolerance() -> f64 {
    1e-12
}

/// Initial datum; always rescaled to unit norm except for snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Coefficients on the eigenvectors in ascending eigenvalue order.
    Modes { coefficients: Vec<f64> },
    /// Seeded low-pass random field.
    Random { seed: u64 },
    /// Field read from a snapshot file, used as is.
    Snapshot { path: PathBuf },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Modes { coefficients: vec![0.8, 0.6] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
    pub snapshots: bool,
    pub plotdata: bool,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub domain: Domain,
    pub flow: FlowConfig,
    pub initial: InitialCondition,
    pub output: OutputSettings,
    /// Hex SHA-256 of the configuration bytes.
    pub digest: String,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

pub fn parse_config(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base)
}

pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let domain = build_domain(&raw.domain)?;

    let f = raw.flow;
    if !(f.p >= 2.0) {
        return Err(CliError::Validation(format!("p ≥ 2 required, got {}", f.p)));
    }
    let mut flow = FlowConfig::new(f.p, f.integrator, f.dt, f.horizon);
    flow.renormalize = f.renormalize;
    flow.sample_every = f.sample_every;
    flow.stop_residual = f.stop_residual;
    flow.cg = CgSettings { tolerance: f.cg_tolerance, max_iterations: f.cg_max_iterations };
    let defaults = FixedPointSettings::default();
    flow.fixed_point = FixedPointSettings {
        tolerance: f.fixed_point_tolerance.unwrap_or(defaults.tolerance),
        max_iterations: f.fixed_point_max_iterations.unwrap_or(defaults.max_iterations),
    };
    if f.fractional || f.frac_alpha.is_some() || f.frac_beta.is_some() {
        let d = FractionalOrders::default();
        flow.fractional = Some(FractionalOrders {
            alpha: f.frac_alpha.unwrap_or(d.alpha),
            beta: f.frac_beta.unwrap_or(d.beta),
        });
    }
    flow.seed = f.seed;
    flow.spectrum_cap = spectrum_cap_from_env()?;

    if let Some(c) = raw.cutoff {
        if !(c.k > 0.0) {
            return Err(CliError::Validation(format!("cut-off level K > 0 required, got {}", c.k)));
        }
        let lambda1 = c.lambda1.unwrap_or(domain.lambda1_h());
        flow.cutoff = Some(CutoffParams::new(c.k, f.p, lambda1).map_err(validation)?);
    }
    if let Some(y) = raw.yosida {
        flow.yosida_mu = Some(y.mu);
    }
    flow.validate().map_err(validation)?;
    flow.cg.validate().map_err(validation)?;
    if let InitialCondition::Modes { coefficients } = &f.initial {
        if coefficients.is_empty() || coefficients.iter().all(|c| *c == 0.0) {
            return Err(CliError::Validation("initial mode coefficients must not all vanish".into()));
        }
    }

    Ok(RunSpec {
        domain,
        flow,
        initial: f.initial,
        output: OutputSettings {
            dir: raw.output.dir,
            snapshots: raw.output.snapshots,
            plotdata: raw.output.plotdata,
        },
        digest: hex::encode(Sha256::digest(text.as_bytes())),
        base_dir: base_dir.to_path_buf(),
    })
}

/// Parses only the `[domain]` table; other sections are ignored.
pub fn parse_domain(path: &Path) -> Result<Domain> {
    #[derive(Deserialize)]
    struct DomainOnly {
        domain: RawDomain,
    }
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let raw: DomainOnly = toml::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    build_domain(&raw.domain)
}

pub(crate) fn build_domain(raw: &RawDomain) -> Result<Domain> {
    let d = raw.dimension.unwrap_or(raw.lengths.len());
    make_domain(d, &raw.lengths, &raw.sizes).map_err(validation)
}

fn validation(e: sphereflow_core::Error) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn spectrum_cap_from_env() -> Result<usize> {
    match std::env::var(SPECTRUM_CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("{SPECTRUM_CAP_ENV} must be a node count, got '{v}'"))),
        Err(_) => Ok(DEFAULT_SPECTRUM_CAP),
    }
}

impl RunSpec {
    /// Builds the initial field described by the config.
    pub fn initial_field(&self) -> Result<Field> {
        match &self.initial {
            InitialCondition::Modes { coefficients } => {
                let spectrum = self.spectrum()?;
                let mut u = Field::zeros(&self.domain);
                for (rank, &c) in coefficients.iter().enumerate() {
                    if c != 0.0 {
                        u = u.add_scaled(c, &spectrum.ordered_eigenvector(rank + 1)?);
                    }
                }
                Ok(normalized(&self.domain, &u)?)
            }
            InitialCondition::Random { seed } => {
                let spectrum = self.spectrum()?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(random_field(&spectrum, &mut rng, FieldKind::LowPass, 1.0)?)
            }
            InitialCondition::Snapshot { path } => {
                let path = self.base_dir.join(path);
                let (field, _) = read_snapshot(&path)?;
                let d = field.domain();
                if d.sizes() != self.domain.sizes() || d.lengths() != self.domain.lengths() {
                    return Err(CliError::Validation(format!(
                        "snapshot {} does not match the configured domain",
                        path.display()
                    )));
                }
                Ok(Field::from_values(&self.domain, field.into_values())?)
            }
        }
    }

    fn spectrum(&self) -> Result<Spectrum> {
        if self.domain.len() > self.flow.spectrum_cap {
            return Err(CliError::Core(sphereflow_core::Error::SpectrumCap {
                nodes: self.domain.len(),
                cap: self.flow.spectrum_cap,
            }));
        }
        Ok(compute_spectrum(&self.domain)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[domain]\nlengths = [3.141592653589793]\nsizes = [63]\n\n[flow]\np = 2.0\ndt = 1e-3\nhorizon = 1.0\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let spec = parse_config_str(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(spec.flow.integrator, Integrator::Imex);
        assert!(spec.flow.renormalize);
        assert_eq!(spec.flow.sample_every, 1);
        assert_eq!(spec.flow.cg.tolerance, 1e-12);
        assert!(spec.flow.cutoff.is_none() && spec.flow.yosida_mu.is_none());
        assert!((spec.domain.lambda1() - 1.0).abs() < 1e-14);
        assert_eq!(spec.initial, InitialCondition::default());
        assert_eq!(spec.digest.len(), 64);
        let u = spec.initial_field().unwrap();
        assert!((spec.domain.cell_volume() * u.values().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_errors_name_the_constraint() {
        let bad_p = MINIMAL.replace("p = 2.0", "p = 1.5");
        let err = parse_config_str(&bad_p, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("p ≥ 2 required"), "{err}");

        let bad_k = format!("{MINIMAL}\n[cutoff]\nk = 0.0\n");
        assert!(matches!(parse_config_str(&bad_k, Path::new(".")), Err(CliError::Validation(_))));

        let zero_t = MINIMAL.replace("horizon = 1.0", "horizon = 0.0");
        assert!(matches!(parse_config_str(&zero_t, Path::new(".")), Err(CliError::Validation(_))));
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = MINIMAL.replace("dt = 1e-3", "dt = 1e-3\nstep = 2");
        match parse_config_str(&text, Path::new(".")) {
            Err(CliError::Parse(msg)) => assert!(msg.contains("step") && msg.contains("line"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn optional_sections() {
        let text = format!(
            "{MINIMAL}fractional = true\ninitial = {{ kind = \"random\", seed = 3 }}\n\n[cutoff]\nk = 4.0\n\n[yosida]\nmu = 50.0\n\n[output]\ndir = \"runs/a\"\nsnapshots = false\n"
        );
        let spec = parse_config_str(&text, Path::new(".")).unwrap();
        let c = spec.flow.cutoff.unwrap();
        assert_eq!((c.k, c.p), (4.0, 2.0));
        assert_eq!(c.lambda1, spec.domain.lambda1_h());
        assert_eq!(spec.flow.yosida_mu, Some(50.0));
        assert_eq!(spec.flow.fractional, Some(FractionalOrders::default()));
        assert_eq!(spec.output.dir, Some(PathBuf::from("runs/a")));
        assert!(!spec.output.snapshots);
        assert_eq!(spec.initial, InitialCondition::Random { seed: 3 });
    }

    #[test]
    fn digest_tracks_bytes() {
        let a = parse_config_str(MINIMAL, Path::new(".")).unwrap();
        let b = parse_config_str(&format!("{MINIMAL}\n"), Path::new(".")).unwrap();
        assert_ne!(a.digest, b.digest);
        assert_eq!(a.digest, parse_config_str(MINIMAL, Path::new(".")).unwrap().digest);
    }
}
