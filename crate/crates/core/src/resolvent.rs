//! Resolvent solves `(μI + A)^{-1}`, the Yosida operator
//! `J_μ = μ(μI + A)^{-1}`, and spectral-norm estimation for symmetric maps.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Field};
use crate::error::{Error, Result};

/// Stopping rule for the conjugate-gradient solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgSettings {
    /// Relative residual `‖(μI + A)x − b‖ / ‖b‖`.
    pub tolerance: f64,
    /// `None` means ten times the node count.
    pub max_iterations: Option<usize>,
}

impl Default for CgSettings {
    fn default() -> Self {
        CgSettings {
            tolerance: 1e-10,
            max_iterations: None,
        }
    }
}

impl CgSettings {
    pub fn with_tolerance(tolerance: f64) -> Self {
        CgSettings {
            tolerance,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "CG tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidParameter("CG needs at least one iteration".into()));
        }
        Ok(())
    }

    fn cap(&self, nodes: usize) -> usize {
        self.max_iterations.unwrap_or(10 * nodes).max(1)
    }
}

/// Conjugate gradients on `(shift I + A) x = rhs`, started from `guess`.
/// Returns the solution and the iteration count.
pub(crate) fn cg_shifted(
    domain: &DomainSpec,
    shift: f64,
    rhs: &[f64],
    guess: Option<&[f64]>,
    settings: &CgSettings,
) -> Result<(Vec<f64>, usize)> {
    let n = rhs.len();
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let target = settings.tolerance * rhs_norm;

    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut ap = vec![0.0; n];
    let mut r = rhs.to_vec();
    if guess.is_some() {
        domain.apply_a_into(&x, &mut ap);
        for j in 0..n {
            r[j] -= shift * x[j] + ap[j];
        }
    }
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    if rr.sqrt() <= target {
        return Ok((x, 0));
    }
    let mut p = r.clone();
    let cap = settings.cap(n);
    for it in 1..=cap {
        domain.apply_a_into(&p, &mut ap);
        let mut pap = 0.0;
        for j in 0..n {
            ap[j] += shift * p[j];
            pap += p[j] * ap[j];
        }
        let alpha = rr / pap;
        for j in 0..n {
            x[j] += alpha * p[j];
            r[j] -= alpha * ap[j];
        }
        let rr_next: f64 = r.iter().map(|v| v * v).sum();
        if rr_next.sqrt() <= target {
            return Ok((x, it));
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for j in 0..n {
            p[j] = r[j] + beta * p[j];
        }
    }
    Err(Error::NoConvergence {
        iterations: cap,
        residual: rr.sqrt() / rhs_norm,
    })
}

/// `(μI + A)^{-1} rhs`.
pub fn resolvent_solve(domain: &DomainSpec, mu: f64, rhs: &Field, settings: &CgSettings) -> Result<Field> {
    check_mu(mu)?;
    settings.validate()?;
    if !rhs.conforms_to(domain) {
        return Err(Error::DomainMismatch);
    }
    let (x, _) = cg_shifted(domain, mu, rhs.values(), None, settings)?;
    Ok(Field::from_raw(rhs.domain(), x))
}

/// `J_μ u = μ(μI + A)^{-1} u`.
pub fn yosida(domain: &DomainSpec, mu: f64, u: &Field, settings: &CgSettings) -> Result<Field> {
    Ok(resolvent_solve(domain, mu, u, settings)?.scaled(mu))
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("μ > 0 required, got {mu}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the estimate settled.
    pub converged: bool,
}

/// Spectral norm of a symmetric linear map.
///
/// Runs Lanczos with full reorthogonalization from a seeded random start;
/// the estimate is the largest Ritz value magnitude, which never exceeds the
/// true norm. Stops when successive estimates agree to `1e-10` relative, or
/// when the Krylov space is exhausted (the estimate is then exact).
pub fn operator_norm_estimate(
    op: impl Fn(&Field) -> Result<Field>,
    domain: &crate::domain::Domain,
    iterations: usize,
    seed: u64,
) -> Result<NormEstimate> {
    let n = domain.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut q = Field::from_raw(domain, start);
    let norm = domain.norm(q.values());
    q = q.scaled(1.0 / norm);

    let mut basis: Vec<Field> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut estimate = 0.0;
    let cap = iterations.max(1).min(n);

    for it in 1..=cap {
        let mut w = op(&q)?;
        if !w.conforms_to(domain) {
            return Err(Error::DomainMismatch);
        }
        let alpha = domain.dot(w.values(), q.values());
        basis.push(q.clone());
        alphas.push(alpha);
        // Twice-applied Gram–Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = domain.dot(w.values(), b.values());
                w = w.add_scaled(-c, b);
            }
        }
        let beta = domain.norm(w.values());

        let previous = estimate;
        estimate = ritz_extreme(&alphas, &betas);
        let scale = alphas.iter().chain(&betas).fold(0.0f64, |m, v| m.max(v.abs()));
        let exhausted = beta <= 1e-13 * scale.max(f64::MIN_POSITIVE) || it == n;
        let settled = it > 1 && (estimate - previous).abs() <= 1e-10 * estimate;
        if exhausted || settled {
            return Ok(NormEstimate {
                value: estimate,
                iterations: it,
                converged: true,
            });
        }
        betas.push(beta);
        q = w.scaled(1.0 / beta);
    }
    Ok(NormEstimate {
        value: estimate,
        iterations: cap,
        converged: false,
    })
}

fn ritz_extreme(alphas: &[f64], betas: &[f64]) -> f64 {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}
