//! Energy, nonlinearity, Lagrange multiplier, tangent projection and the
//! cut-off operator with its monotonicity constant.

use serde::{Deserialize, Serialize};

use crate::domain::{h1_seminorm_sq, l2_norm, lp_norm_p, lp_power, DomainSpec, Field};
use crate::error::{Error, Result};

/// Cut-off level `K`, exponent `p`, and the Poincaré constant fed into `C(K)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub k: f64,
    pub p: f64,
    pub lambda1: f64,
}

impl CutoffParams {
    pub fn new(k: f64, p: f64, lambda1: f64) -> Result<Self> {
        let params = CutoffParams { k, p, lambda1 };
        params.validate()?;
        Ok(params)
    }

    /// Uses the discrete Poincaré constant of `domain`.
    pub fn discrete(domain: &DomainSpec, k: f64, p: f64) -> Result<Self> {
        Self::new(k, p, domain.lambda1_h())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cut-off level K > 0 required, got {}",
                self.k
            )));
        }
        check_p(self.p)?;
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "λ₁ > 0 required, got {}",
                self.lambda1
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p >= 2.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p ≥ 2 required, got {p}")))
    }
}

pub(crate) fn nonlinearity_scalar(v: f64, p: f64) -> f64 {
    if p == 2.0 {
        v
    } else if p == 4.0 {
        v * v * v
    } else {
        v.abs().powf(p - 2.0) * v
    }
}

/// Pointwise `|u|^{p-2} u`.
pub fn nonlinearity(u: &Field, p: f64) -> Field {
    u.map(|v| nonlinearity_scalar(v, p))
}

/// `½‖∇u‖² + (1/p)‖u‖_p^p`.
pub fn energy(domain: &DomainSpec, u: &Field, p: f64) -> Result<f64> {
    Ok(0.5 * h1_seminorm_sq(domain, u)? + lp_norm_p(domain, u, p)? / p)
}

/// Lagrange multiplier `λ(u) = ‖∇u‖² + ‖u‖_p^p`.
pub fn multiplier(domain: &DomainSpec, u: &Field, p: f64) -> Result<f64> {
    Ok(h1_seminorm_sq(domain, u)? + lp_norm_p(domain, u, p)?)
}

fn require_unit(domain: &DomainSpec, u: &Field, tol: f64) -> Result<()> {
    let norm = l2_norm(domain, u)?;
    if (norm - 1.0).abs() > tol {
        Err(Error::NotOnSphere { norm })
    } else {
        Ok(())
    }
}

/// `w − (w, u) u` for `u` on the unit sphere.
pub fn tangent_project(domain: &DomainSpec, u: &Field, w: &Field) -> Result<Field> {
    require_unit(domain, u, 1e-8)?;
    let c = crate::domain::inner(domain, w, u)?;
    Ok(w.add_scaled(-c, u))
}

/// Pieces of the constrained gradient shared with the flow diagnostics.
pub(crate) struct GradientParts {
    pub au: Field,
    pub nu: Field,
    pub grad_sq: f64,
    pub lp_p: f64,
}

pub(crate) fn gradient_parts(domain: &DomainSpec, u: &Field, p: f64) -> GradientParts {
    let mut au = vec![0.0; u.values().len()];
    domain.apply_a_into(u.values(), &mut au);
    let grad_sq = domain.dot(&au, u.values());
    let lp_p = lp_power(domain, u.values(), p);
    GradientParts {
        au: Field::from_raw(u.domain(), au),
        nu: nonlinearity(u, p),
        grad_sq,
        lp_p,
    }
}

/// `Au + N(u) − λ(u) u` with no sphere check; equals the constrained
/// gradient when `‖u‖ = 1`.
pub(crate) fn gradient_unchecked(domain: &DomainSpec, u: &Field, p: f64) -> Field {
    let parts = gradient_parts(domain, u, p);
    let lambda = parts.grad_sq + parts.lp_p;
    parts.au.add(&parts.nu).add_scaled(-lambda, u)
}

/// Riemannian gradient of the energy on the unit sphere,
/// `Au + N(u) − λ(u) u`.
pub fn constrained_gradient(domain: &DomainSpec, u: &Field, p: f64) -> Result<Field> {
    check_p(p)?;
    if !u.conforms_to(domain) {
        return Err(Error::DomainMismatch);
    }
    require_unit(domain, u, 1e-6)?;
    Ok(gradient_unchecked(domain, u, p))
}

/// Scalar `c` with `g^K(u) = c · u`: `S` below the cut-off, `K²/S` above.
pub fn cutoff_coefficient(s: f64, k: f64) -> f64 {
    if s <= k {
        s
    } else {
        k * k / s
    }
}

/// Cut-off map `g^K(u)`.
pub fn cutoff_g(domain: &DomainSpec, u: &Field, params: &CutoffParams) -> Result<Field> {
    params.validate()?;
    let s = multiplier(domain, u, params.p)?;
    Ok(u.scaled(cutoff_coefficient(s, params.k)))
}

/// `G^K(u) = Au + N(u) − g^K(u)`.
pub fn modified_operator(domain: &DomainSpec, u: &Field, params: &CutoffParams) -> Result<Field> {
    params.validate()?;
    if !u.conforms_to(domain) {
        return Err(Error::DomainMismatch);
    }
    let parts = gradient_parts(domain, u, params.p);
    let c = cutoff_coefficient(parts.grad_sq + parts.lp_p, params.k);
    Ok(parts.au.add(&parts.nu).add_scaled(-c, u))
}

/// `C(K) = [1 + (2 + p² 2^{2p−3}) K / λ₁] K`, which is also the shift `Γ_K`.
pub fn monotonicity_constant(params: &CutoffParams) -> Result<f64> {
    params.validate()?;
    let p = params.p;
    let pow = (2.0 * p - 3.0).exp2();
    let c = (1.0 + (2.0 + p * p * pow) * params.k / params.lambda1) * params.k;
    if !pow.is_finite() || !c.is_finite() {
        return Err(Error::Overflow { p });
    }
    Ok(c)
}

/// `½(‖u‖² − 1)`.
pub fn constraint_value(domain: &DomainSpec, u: &Field) -> Result<f64> {
    Ok(0.5 * (l2_norm(domain, u)?.powi(2) - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{apply_a, inner, make_domain, Domain};
    use crate::spectrum::compute_spectrum;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(domain: &Domain) -> Field {
        Field::from_fn(domain, |x| (2.0 / PI).sqrt() * x[0].sin())
    }

    #[test]
    fn nonlinearity_values() {
        let d = make_domain(1, &[1.0], &[3]).unwrap();
        let u = Field::from_values(&d, vec![-2.0, 0.5, 3.0]).unwrap();
        assert_eq!(nonlinearity(&u, 2.0), u);
        assert_eq!(nonlinearity(&u, 4.0).values()[0], -8.0);
        assert_eq!(nonlinearity(&u, 3.0).values()[0], -4.0);
        assert_relative_eq!(
            nonlinearity(&u, 3.5).values()[2],
            3.0f64.powf(2.5),
            max_relative = 1e-15
        );
    }

    #[test]
    fn energy_and_multiplier_of_sine() {
        let d = make_domain(1, &[PI], &[255]).unwrap();
        let u = sine(&d);
        assert_relative_eq!(energy(&d, &u, 2.0).unwrap(), 1.0, max_relative = 1e-4);
        assert_relative_eq!(
            energy(&d, &u, 4.0).unwrap(),
            0.5 + 3.0 / (8.0 * PI),
            max_relative = 1e-4
        );
        assert_relative_eq!(multiplier(&d, &u, 2.0).unwrap(), 2.0, max_relative = 1e-4);
        assert_relative_eq!(
            multiplier(&d, &u, 4.0).unwrap(),
            1.0 + 3.0 / (2.0 * PI),
            max_relative = 1e-4
        );
        let z = Field::zeros(&d);
        assert_eq!(energy(&d, &z, 4.0).unwrap(), 0.0);
        assert_eq!(multiplier(&d, &z, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn tangent_projection() {
        let d = make_domain(1, &[PI], &[31]).unwrap();
        let s = compute_spectrum(&d).unwrap();
        let u = s.eigenvector(&[1]).unwrap();
        let v = s.eigenvector(&[3]).unwrap();
        assert!(l2_norm(&d, &tangent_project(&d, &u, &u).unwrap()).unwrap() < 1e-14);
        assert!(l2_norm(&d, &tangent_project(&d, &u, &v).unwrap().sub(&v)).unwrap() < 1e-14);
        let w = u.add(&v);
        assert!(l2_norm(&d, &tangent_project(&d, &u, &w).unwrap().sub(&v)).unwrap() < 1e-14);
        assert!(matches!(
            tangent_project(&d, &u.scaled(1.1), &w),
            Err(Error::NotOnSphere { .. })
        ));
    }

    #[test]
    fn constrained_gradient_at_eigenvectors() {
        let d = make_domain(1, &[PI], &[63]).unwrap();
        let s = compute_spectrum(&d).unwrap();
        let e1 = s.eigenvector(&[1]).unwrap();
        let e2 = s.eigenvector(&[2]).unwrap();
        let g = constrained_gradient(&d, &e1, 2.0).unwrap();
        assert!(l2_norm(&d, &g).unwrap() < 1e-10);

        // Oracle in eigen-coefficients: u = (e1 + e2)/√2, λ(u) = (λ1 + λ2)/2 + 1,
        // so the gradient is (λ1 − λ2)/2 · e1/√2 + (λ2 − λ1)/2 · e2/√2.
        let u = e1.add(&e2).scaled(1.0 / 2f64.sqrt());
        let g = constrained_gradient(&d, &u, 2.0).unwrap();
        let (l1, l2) = (s.axis_eigenvalues(0)[0], s.axis_eigenvalues(0)[1]);
        let c = s.transform(&g).unwrap();
        assert_relative_eq!(c[0], (l1 - l2) / 2.0 / 2f64.sqrt(), max_relative = 1e-10);
        assert_relative_eq!(c[1], (l2 - l1) / 2.0 / 2f64.sqrt(), max_relative = 1e-10);
        assert!(c[2..].iter().all(|v| v.abs() < 1e-10));
        assert!(inner(&d, &g, &u).unwrap().abs() < 1e-10);
        assert!(constrained_gradient(&d, &u.scaled(2.0), 2.0).is_err());
    }

    #[test]
    fn cutoff_branches() {
        let d = make_domain(1, &[PI], &[63]).unwrap();
        let s = compute_spectrum(&d).unwrap();
        let e1 = s.eigenvector(&[1]).unwrap();
        // p = 2: S = λ1h + 1 just under 2
        let sval = multiplier(&d, &e1, 2.0).unwrap();
        let below = cutoff_g(&d, &e1, &CutoffParams::new(5.0, 2.0, 1.0).unwrap()).unwrap();
        assert!(l2_norm(&d, &below.sub(&e1.scaled(sval))).unwrap() < 1e-14);
        let above = cutoff_g(&d, &e1, &CutoffParams::new(1.0, 2.0, 1.0).unwrap()).unwrap();
        assert!(l2_norm(&d, &above.sub(&e1.scaled(1.0 / sval))).unwrap() < 1e-14);
        assert_relative_eq!(cutoff_coefficient(2.0, 5.0), 2.0);
        assert_relative_eq!(cutoff_coefficient(2.0, 1.0), 0.5);
        let zero = cutoff_g(&d, &Field::zeros(&d), &CutoffParams::new(1.0, 2.0, 1.0).unwrap()).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        assert!(CutoffParams::new(0.0, 2.0, 1.0).is_err());
        assert!(CutoffParams::new(1.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn modified_operator_cases() {
        let d = make_domain(1, &[PI], &[63]).unwrap();
        let s = compute_spectrum(&d).unwrap();
        let e1 = s.eigenvector(&[1]).unwrap();
        let params = CutoffParams::discrete(&d, 1e6, 2.0).unwrap();
        assert!(l2_norm(&d, &modified_operator(&d, &e1, &params).unwrap()).unwrap() < 1e-10);
        assert_eq!(
            modified_operator(&d, &Field::zeros(&d), &params)
                .unwrap()
                .max_abs(),
            0.0
        );

        let u = Field::from_fn(&d, |x| 3.0 * x[0].sin() + (4.0 * x[0]).sin());
        let params = CutoffParams::discrete(&d, 1.0, 4.0).unwrap();
        let sval = h1_seminorm_sq(&d, &u).unwrap() + lp_norm_p(&d, &u, 4.0).unwrap();
        assert!(sval > 1.0);
        let expected = apply_a(&d, &u)
            .unwrap()
            .add(&u.map(|v| v * v * v))
            .add_scaled(-1.0 / sval, &u);
        let got = modified_operator(&d, &u, &params).unwrap();
        assert!(l2_norm(&d, &got.sub(&expected)).unwrap() <= 1e-12 * l2_norm(&d, &expected).unwrap());
    }

    #[test]
    fn monotonicity_constant_values() {
        assert_relative_eq!(
            monotonicity_constant(&CutoffParams::new(1.0, 2.0, 1.0).unwrap()).unwrap(),
            11.0
        );
        assert_relative_eq!(
            monotonicity_constant(&CutoffParams::new(2.0, 2.0, 1.0).unwrap()).unwrap(),
            42.0
        );
        assert!(matches!(
            monotonicity_constant(&CutoffParams::new(1.0, 600.0, 1.0).unwrap()),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn constraint_values() {
        let d = make_domain(1, &[PI], &[31]).unwrap();
        let e1 = compute_spectrum(&d).unwrap().eigenvector(&[1]).unwrap();
        assert!(constraint_value(&d, &e1).unwrap().abs() < 1e-12);
        assert_eq!(constraint_value(&d, &Field::zeros(&d)).unwrap(), -0.5);
        assert_relative_eq!(
            constraint_value(&d, &e1.scaled(2.0)).unwrap(),
            1.5,
            max_relative = 1e-12
        );
    }

    /// Gradient consistency with the sphere retraction: first-order error
    /// halves as the step halves.
    #[test]
    fn gradient_matches_retracted_difference_quotient() {
        let d = make_domain(1, &[PI], &[63]).unwrap();
        let s = compute_spectrum(&d).unwrap();
        let raw = Field::from_fn(&d, |x| {
            x[0].sin() + 0.3 * (2.0 * x[0]).sin() - 0.2 * (5.0 * x[0]).sin()
        });
        let u = raw.scaled(1.0 / l2_norm(&d, &raw).unwrap());
        let w = s
            .eigenvector(&[3])
            .unwrap()
            .add(&s.eigenvector(&[4]).unwrap().scaled(0.5));
        let v = tangent_project(&d, &u, &w).unwrap();
        for p in [2.0, 4.0] {
            let g = constrained_gradient(&d, &u, p).unwrap();
            let exact = inner(&d, &g, &v).unwrap();
            let e0 = energy(&d, &u, p).unwrap();
            let errs: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
                .iter()
                .map(|&eps| {
                    let moved = u.add_scaled(eps, &v);
                    let moved = moved.scaled(1.0 / l2_norm(&d, &moved).unwrap());
                    ((energy(&d, &moved, p).unwrap() - e0) / eps - exact).abs()
                })
                .collect();
            for pair in errs.windows(2) {
                let ratio = pair[0] / pair[1];
                assert!(
                    (1.8..2.2).contains(&ratio),
                    "p = {p}, ratio {ratio}, errs {errs:?}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn nonlinearity_is_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0, p in prop::sample::select(vec![2.0, 3.0, 4.0, 6.0])) {
            let lhs = (nonlinearity_scalar(a, p) - nonlinearity_scalar(b, p)) * (a - b);
            let rhs = 0.5 * (a.abs().powf(p - 2.0) + b.abs().powf(p - 2.0)) * (a - b).powi(2);
            prop_assert!(lhs - rhs >= -1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn cutoff_agrees_below_threshold(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, k in 0.1f64..50.0) {
            let d = make_domain(1, &[PI], &[15]).unwrap();
            let u = Field::from_fn(&d, |x| c1 * x[0].sin() + c2 * (2.0 * x[0]).sin());
            let params = CutoffParams::discrete(&d, k, 3.0).unwrap();
            let s = multiplier(&d, &u, 3.0).unwrap();
            let g = cutoff_g(&d, &u, &params).unwrap();
            if s <= k {
                prop_assert_eq!(g, u.scaled(s));
            } else {
                prop_assert!(l2_norm(&d, &g).unwrap() <= k * l2_norm(&d, &u).unwrap() * (1.0 + 1e-12));
            }
        }
    }
}
