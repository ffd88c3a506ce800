//! Simulation and verification of the L²-norm-preserving nonlinear heat flow
//!
//! ```text
//! ∂u/∂t − Δu + |u|^{p−2}u = (‖∇u‖² + ‖u‖_p^p) u,   u = 0 on ∂O,   ‖u‖ = 1
//! ```
//!
//! on rectangular boxes, together with its cut-off and Yosida-regularized
//! variants, stationary-state computation, and a harness of property checks
//! for the operator inequalities behind the well-posedness theory.

pub mod domain;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod resolvent;
pub mod spectrum;
pub mod stationary;
pub mod verify;

pub use domain::{
    apply_a, h1_seminorm_sq, inner, l2_norm, lp_norm_p, make_domain, Domain, DomainSpec, Field,
};
pub use error::{Error, Result};
pub use flow::{
    normalized, rhs, run_flow, run_flow_with_spectrum, step_backward_euler, step_etd, step_imex,
    step_projected_euler, DiagnosticsRecord, FixedPointSettings, FlowConfig, FractionalOrders, Integrator,
    RunResult, Snapshot, Termination,
};
pub use functionals::{
    constrained_gradient, constraint_value, cutoff_g, energy, modified_operator, monotonicity_constant,
    multiplier, nonlinearity, tangent_project, CutoffParams,
};
pub use resolvent::{operator_norm_estimate, resolvent_solve, yosida, CgSettings, NormEstimate};
pub use spectrum::{apply_phi_of_a, compute_spectrum, Mode, Spectrum, DEFAULT_SPECTRUM_CAP};
pub use stationary::{
    detect_omega_limit, fit_lojasiewicz, fit_lojasiewicz_last_sample, h2_distance, solve_ground_state,
    stationarity_residual, Cluster, LojasiewiczFit, OmegaLimitReport, StationaryResult,
};
pub use verify::{
    check_energy_identities, check_modified_monotone, check_nonlinearity_monotone, check_resolvent_bounds,
    check_surjectivity, check_theta_inequality, check_yosida_convergence, random_field, FieldKind,
    PropertyReport,
};
