//! Rectangular Dirichlet domains, grid functions and the discrete negative
//! Laplacian.
//!
//! A domain `(0, L_1) × … × (0, L_d)` is sampled on `n_i` interior nodes per
//! axis with spacing `h_i = L_i / (n_i + 1)`. Boundary nodes carry zero and are
//! never stored. Fields are flat row-major arrays (last axis fastest).
//!
//! The inner product is the rectangle rule `(f, g) = (Π h_i) Σ f_j g_j`, and
//! the squared gradient norm is *defined* as `(A f, f)`, so discrete
//! summation by parts is exact.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared handle to a domain; fields keep one of these.
pub type Domain = Arc<DomainSpec>;

/// Box geometry, grid resolution and the two Poincaré constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    lengths: Vec<f64>,
    sizes: Vec<usize>,
    spacings: Vec<f64>,
    lambda1: f64,
    lambda1_h: f64,
}

/// `k`-th eigenvalue (1-based) of the 1D three-point stencil on `n` interior
/// nodes with spacing `h`.
pub fn stencil_eigenvalue(k: usize, n: usize, h: f64) -> f64 {
    let s = (k as f64 * PI / (2.0 * (n as f64 + 1.0))).sin();
    4.0 * s * s / (h * h)
}

/// Builds a domain, populating spacings and both Poincaré constants.
///
/// The discrete constant comes from the stencil formula and is cross-checked
/// by inverse power iteration on each axis; a relative discrepancy above
/// `1e-10` is reported as [`Error::PoincareMismatch`].
pub fn make_domain(d: usize, lengths: &[f64], sizes: &[usize]) -> Result<Domain> {
    if !(1..=3).contains(&d) {
        return Err(Error::Dimension(format!("dimension must be 1, 2 or 3, got {d}")));
    }
    if lengths.len() != d || sizes.len() != d {
        return Err(Error::Dimension(format!(
            "expected {d} lengths and sizes, got {} and {}",
            lengths.len(),
            sizes.len()
        )));
    }
    for (&l, &n) in lengths.iter().zip(sizes) {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "length must be positive, got {l}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "each axis needs at least 2 interior nodes, got {n}"
            )));
        }
    }

    let spacings: Vec<f64> = lengths
        .iter()
        .zip(sizes)
        .map(|(&l, &n)| l / (n as f64 + 1.0))
        .collect();
    let lambda1 = lengths.iter().map(|&l| (PI / l).powi(2)).sum();

    let mut lambda1_h = 0.0;
    let mut iterated = 0.0;
    for (&n, &h) in sizes.iter().zip(&spacings) {
        lambda1_h += stencil_eigenvalue(1, n, h);
        iterated += inverse_iteration_1d(n, h);
    }
    if (lambda1_h - iterated).abs() > 1e-10 * lambda1_h {
        return Err(Error::PoincareMismatch {
            analytic: lambda1_h,
            iterated,
        });
    }

    Ok(Arc::new(DomainSpec {
        lengths: lengths.to_vec(),
        sizes: sizes.to_vec(),
        spacings,
        lambda1,
        lambda1_h,
    }))
}

/// Rayleigh quotient of inverse power iteration on the 1D stencil, using a
/// tridiagonal (Thomas) solve.
fn inverse_iteration_1d(n: usize, h: f64) -> f64 {
    let off = -1.0 / (h * h);
    let diag = 2.0 / (h * h);
    let apply = |x: &[f64], y: &mut [f64]| {
        for j in 0..n {
            let left = if j > 0 { x[j - 1] } else { 0.0 };
            let right = if j + 1 < n { x[j + 1] } else { 0.0 };
            y[j] = diag * x[j] + off * (left + right);
        }
    };
    // Forward elimination factors are fixed for the whole iteration.
    let mut c = vec![0.0; n];
    let mut denom = vec![0.0; n];
    denom[0] = diag;
    for j in 1..n {
        c[j - 1] = off / denom[j - 1];
        denom[j] = diag - off * c[j - 1];
    }
    let solve = |rhs: &[f64], x: &mut [f64]| {
        let mut z = vec![0.0; n];
        z[0] = rhs[0];
        for j in 1..n {
            z[j] = rhs[j] - c[j - 1] * z[j - 1];
        }
        x[n - 1] = z[n - 1] / denom[n - 1];
        for j in (0..n - 1).rev() {
            x[j] = (z[j] - off * x[j + 1]) / denom[j];
        }
    };

    let mut x: Vec<f64> = (0..n).map(|j| 1.0 + 0.1 * (j as f64 / n as f64)).collect();
    let mut y = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let mut rayleigh = f64::INFINITY;
    for _ in 0..500 {
        solve(&x, &mut y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        apply(&x, &mut ax);
        let next: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let done = (next - rayleigh).abs() <= 1e-15 * next;
        rayleigh = next;
        if done {
            break;
        }
    }
    rayleigh
}

impl DomainSpec {
    pub fn dimension(&self) -> usize {
        self.sizes.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    /// Continuum Poincaré constant `Σ (π / L_i)²`.
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// Smallest eigenvalue of the discrete operator.
    pub fn lambda1_h(&self) -> f64 {
        self.lambda1_h
    }

    /// Total number of interior nodes.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `Π h_i`.
    pub fn cell_volume(&self) -> f64 {
        self.spacings.iter().product()
    }

    /// Row-major strides, last axis contiguous.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.sizes.len()];
        for i in (0..self.sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.sizes[i + 1];
        }
        strides
    }

    /// Physical coordinates of the node with flat index `flat`.
    pub fn node_coordinates(&self, flat: usize) -> Vec<f64> {
        let strides = self.strides();
        strides
            .iter()
            .zip(&self.sizes)
            .zip(&self.spacings)
            .map(|((&s, &n), &h)| ((flat / s) % n + 1) as f64 * h)
            .collect()
    }

    /// `out = A u` on raw node arrays.
    pub(crate) fn apply_a_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let strides = self.strides();
        for axis in 0..self.dimension() {
            let s = strides[axis];
            let n = self.sizes[axis];
            let inv_h2 = 1.0 / (self.spacings[axis] * self.spacings[axis]);
            for (j, o) in out.iter_mut().enumerate() {
                let k = (j / s) % n;
                let left = if k > 0 { u[j - s] } else { 0.0 };
                let right = if k + 1 < n { u[j + s] } else { 0.0 };
                *o += (2.0 * u[j] - left - right) * inv_h2;
            }
        }
    }

    pub(crate) fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub(crate) fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }
}

/// Real-valued grid function on the interior nodes of a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    domain: Domain,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(domain: &Domain) -> Self {
        Field {
            domain: Arc::clone(domain),
            values: vec![0.0; domain.len()],
        }
    }

    /// Wraps node values; the length must match and every entry must be finite.
    pub fn from_values(domain: &Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Dimension(format!(
                "field has {} values, domain has {} nodes",
                values.len(),
                domain.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field entry {bad}")));
        }
        Ok(Field {
            domain: Arc::clone(domain),
            values,
        })
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(domain: &Domain, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..domain.len())
            .map(|j| f(&domain.node_coordinates(j)))
            .collect();
        Field {
            domain: Arc::clone(domain),
            values,
        }
    }

    pub(crate) fn from_raw(domain: &Domain, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        Field {
            domain: Arc::clone(domain),
            values,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn conforms_to(&self, domain: &DomainSpec) -> bool {
        std::ptr::eq(self.domain.as_ref(), domain) || *self.domain == *domain
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(&self.domain, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `self + c · other`.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.values.len(), other.values.len(), "fields on different grids");
        Field::from_raw(
            &self.domain,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Largest absolute nodal value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check(domain: &DomainSpec, f: &Field) -> Result<()> {
    if f.conforms_to(domain) {
        Ok(())
    } else {
        Err(Error::DomainMismatch)
    }
}

/// Second-order centred `−Δ` with zero Dirichlet data.
pub fn apply_a(domain: &DomainSpec, u: &Field) -> Result<Field> {
    check(domain, u)?;
    let mut out = vec![0.0; u.values.len()];
    domain.apply_a_into(&u.values, &mut out);
    Ok(Field::from_raw(u.domain(), out))
}

pub fn inner(domain: &DomainSpec, f: &Field, g: &Field) -> Result<f64> {
    check(domain, f)?;
    check(domain, g)?;
    Ok(domain.dot(&f.values, &g.values))
}

pub fn l2_norm(domain: &DomainSpec, f: &Field) -> Result<f64> {
    Ok(inner(domain, f, f)?.sqrt())
}

/// The p-th power `‖f‖_p^p`, not the norm itself.
pub fn lp_norm_p(domain: &DomainSpec, f: &Field, p: f64) -> Result<f64> {
    check(domain, f)?;
    if !(p >= 2.0) {
        return Err(Error::InvalidParameter(format!("p ≥ 2 required, got {p}")));
    }
    Ok(lp_power(domain, &f.values, p))
}

pub(crate) fn lp_power(domain: &DomainSpec, values: &[f64], p: f64) -> f64 {
    let sum: f64 = if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    };
    domain.cell_volume() * sum
}

/// `‖∇f‖² := (A f, f)`.
pub fn h1_seminorm_sq(domain: &DomainSpec, f: &Field) -> Result<f64> {
    let af = apply_a(domain, f)?;
    Ok(domain.dot(&af.values, &f.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sine_mode(domain: &Domain, k: usize) -> Field {
        let l = domain.lengths()[0];
        Field::from_fn(domain, |x| (2.0 / l).sqrt() * (k as f64 * PI * x[0] / l).sin())
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(make_domain(0, &[], &[]), Err(Error::Dimension(_))));
        assert!(matches!(
            make_domain(4, &[1.0; 4], &[3; 4]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            make_domain(2, &[1.0], &[3, 3]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            make_domain(1, &[-1.0], &[3]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            make_domain(1, &[1.0], &[1]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn poincare_constants_1d() {
        let d = make_domain(1, &[PI], &[255]).unwrap();
        assert_relative_eq!(d.lambda1(), 1.0, epsilon = 1e-15);
        let h = PI / 256.0;
        assert_relative_eq!(d.spacings()[0] * 256.0, PI, epsilon = 1e-15);
        let expected = 4.0 / (h * h) * (h / 2.0).sin().powi(2);
        assert_relative_eq!(d.lambda1_h(), expected, max_relative = 1e-14);
        assert!(d.lambda1_h() < d.lambda1());
    }

    #[test]
    fn poincare_constants_2d() {
        let d = make_domain(2, &[PI, PI], &[31, 31]).unwrap();
        assert_relative_eq!(d.lambda1(), 2.0, epsilon = 1e-14);
        assert!(0.0 < d.lambda1_h() && d.lambda1_h() < 2.0);
    }

    #[test]
    fn degenerate_two_node_grid() {
        let d = make_domain(1, &[1.0], &[2]).unwrap();
        assert_relative_eq!(d.spacings()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(d.lambda1_h(), 9.0, max_relative = 1e-13);
        let u = Field::from_values(&d, vec![1.0, 0.0]).unwrap();
        let au = apply_a(&d, &u).unwrap();
        assert_relative_eq!(au.values()[0], 18.0, max_relative = 1e-13);
        assert_relative_eq!(au.values()[1], -9.0, max_relative = 1e-13);
    }

    #[test]
    fn hat_function_stencil() {
        let d = make_domain(1, &[1.0], &[9]).unwrap();
        let h = d.spacings()[0];
        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let au = apply_a(&d, &Field::from_values(&d, v).unwrap()).unwrap();
        assert_relative_eq!(au.values()[4], 2.0 / (h * h), max_relative = 1e-14);
        assert_relative_eq!(au.values()[3], -1.0 / (h * h), max_relative = 1e-14);
        assert_relative_eq!(au.values()[5], -1.0 / (h * h), max_relative = 1e-14);
        assert_eq!(au.values()[0], 0.0);
        let zero = apply_a(&d, &Field::zeros(&d)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_mode_is_eigenvector() {
        let d = make_domain(1, &[PI], &[63]).unwrap();
        let e1 = sine_mode(&d, 1);
        assert_relative_eq!(l2_norm(&d, &e1).unwrap(), 1.0, epsilon = 1e-12);
        let ae1 = apply_a(&d, &e1).unwrap();
        let diff = ae1.sub(&e1.scaled(d.lambda1_h()));
        assert!(l2_norm(&d, &diff).unwrap() < 1e-10);
        assert_relative_eq!(
            h1_seminorm_sq(&d, &e1).unwrap(),
            d.lambda1_h(),
            max_relative = 1e-12
        );
        let e2 = sine_mode(&d, 2);
        assert!(inner(&d, &e1, &e2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn lp_power_of_sine() {
        let d = make_domain(1, &[PI], &[255]).unwrap();
        let u = sine_mode(&d, 1);
        let got = lp_norm_p(&d, &u, 4.0).unwrap();
        assert_relative_eq!(got, 3.0 / (2.0 * PI), max_relative = 1e-4);
        assert_relative_eq!(
            lp_norm_p(&d, &u, 2.0).unwrap(),
            l2_norm(&d, &u).unwrap().powi(2),
            max_relative = 1e-14
        );
        assert_eq!(lp_norm_p(&d, &Field::zeros(&d), 3.0).unwrap(), 0.0);
        assert!(lp_norm_p(&d, &u, 1.5).is_err());
    }

    #[test]
    fn mismatched_fields_are_rejected() {
        let a = make_domain(1, &[1.0], &[5]).unwrap();
        let b = make_domain(1, &[2.0], &[5]).unwrap();
        let u = Field::zeros(&b);
        assert_eq!(apply_a(&a, &u), Err(Error::DomainMismatch));
        assert!(inner(&a, &Field::zeros(&a), &u).is_err());
        assert!(Field::from_values(&a, vec![0.0; 4]).is_err());
        assert!(Field::from_values(&a, vec![f64::NAN; 5]).is_err());
    }

    #[test]
    fn homogeneity_of_seminorm() {
        let d = make_domain(2, &[1.0, 2.0], &[7, 5]).unwrap();
        let g = Field::from_fn(&d, |x| x[0] * (1.0 - x[0]) * x[1]);
        let base = h1_seminorm_sq(&d, &g).unwrap();
        assert_relative_eq!(
            h1_seminorm_sq(&d, &g.scaled(3.0)).unwrap(),
            9.0 * base,
            max_relative = 1e-13
        );
        assert_eq!(h1_seminorm_sq(&d, &Field::zeros(&d)).unwrap(), 0.0);
    }
}
