//! Eigenbasis of the discrete Dirichlet Laplacian and functional calculus.
//!
//! The 1D stencil has eigenvectors `sin(j k π / (n + 1))`, so the nodal ↔
//! eigen-coefficient transform is a type-I discrete sine transform along each
//! axis. Coefficients are taken against L²-normalized eigenvectors, so
//! `‖u‖² = Σ c_k²`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::domain::{stencil_eigenvalue, Domain, DomainSpec, Field};
use crate::error::{Error, Result};

/// Default cap on the total node count for spectral mode.
pub const DEFAULT_SPECTRUM_CAP: usize = 1 << 24;

struct AxisBasis {
    n: usize,
    eigenvalues: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl AxisBasis {
    /// Raw DST-I, `X_k = Σ_j x_j sin(π j k / (n + 1))`, in place.
    fn dst(&self, line: &mut [f64], buf: &mut [Complex<f64>]) {
        let n = self.n;
        let m = 2 * (n + 1);
        buf[0] = Complex::new(0.0, 0.0);
        buf[n + 1] = Complex::new(0.0, 0.0);
        for j in 0..n {
            buf[j + 1] = Complex::new(line[j], 0.0);
            buf[m - 1 - j] = Complex::new(-line[j], 0.0);
        }
        self.fft.process(buf);
        for k in 0..n {
            line[k] = -0.5 * buf[k + 1].im;
        }
    }
}

/// Tensorized eigenpairs of the discrete operator on one domain.
pub struct Spectrum {
    domain: Domain,
    axes: Vec<AxisBasis>,
    eigenvalues: Vec<f64>,
    forward_scale: f64,
    backward_scale: f64,
}

impl std::fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectrum")
            .field("sizes", &self.domain.sizes())
            .field("lambda_min", &self.eigenvalues.first())
            .finish()
    }
}

/// One eigenmode, identified by its 1-based per-axis wave numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub index: Vec<usize>,
    pub eigenvalue: f64,
    /// Continuum counterpart `Σ (k_i π / L_i)²`.
    pub continuum: f64,
}

pub fn compute_spectrum(domain: &Domain) -> Result<Spectrum> {
    Spectrum::with_cap(domain, DEFAULT_SPECTRUM_CAP)
}

impl Spectrum {
    pub fn with_cap(domain: &Domain, cap: usize) -> Result<Self> {
        let nodes = domain.len();
        if nodes > cap {
            return Err(Error::SpectrumCap { nodes, cap });
        }
        let mut planner = FftPlanner::new();
        let axes: Vec<AxisBasis> = domain
            .sizes()
            .iter()
            .zip(domain.spacings())
            .map(|(&n, &h)| AxisBasis {
                n,
                eigenvalues: (1..=n).map(|k| stencil_eigenvalue(k, n, h)).collect(),
                fft: planner.plan_fft_forward(2 * (n + 1)),
            })
            .collect();

        let strides = domain.strides();
        let eigenvalues = (0..nodes)
            .map(|flat| {
                axes.iter()
                    .zip(&strides)
                    .map(|(axis, &s)| axis.eigenvalues[(flat / s) % axis.n])
                    .sum()
            })
            .collect();

        let norm_factor: f64 = domain.lengths().iter().map(|l| (2.0 / l).sqrt()).product();
        Ok(Spectrum {
            domain: Arc::clone(domain),
            axes,
            eigenvalues,
            forward_scale: domain.cell_volume() * norm_factor,
            backward_scale: norm_factor,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Combined eigenvalues, laid out like the coefficient array.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Sorted per-axis eigenvalues.
    pub fn axis_eigenvalues(&self, axis: usize) -> &[f64] {
        &self.axes[axis].eigenvalues
    }

    pub fn lambda_min(&self) -> f64 {
        self.axes.iter().map(|a| a.eigenvalues[0]).sum()
    }

    pub fn lambda_max(&self) -> f64 {
        self.axes.iter().map(|a| a.eigenvalues[a.n - 1]).sum()
    }

    fn flat_to_index(&self, flat: usize) -> Vec<usize> {
        let strides = self.domain.strides();
        strides
            .iter()
            .zip(&self.axes)
            .map(|(&s, a)| (flat / s) % a.n + 1)
            .collect()
    }

    fn index_to_flat(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.axes.len() {
            return Err(Error::Dimension(format!(
                "mode index has {} entries, domain has {} axes",
                index.len(),
                self.axes.len()
            )));
        }
        let strides = self.domain.strides();
        let mut flat = 0;
        for ((&k, a), &s) in index.iter().zip(&self.axes).zip(&strides) {
            if k == 0 || k > a.n {
                return Err(Error::InvalidParameter(format!(
                    "wave number {k} outside 1..={}",
                    a.n
                )));
            }
            flat += (k - 1) * s;
        }
        Ok(flat)
    }

    /// The `m` modes with smallest eigenvalue, ascending. Ties are broken by
    /// index order.
    pub fn lowest_modes(&self, m: usize) -> Vec<Mode> {
        let mut order: Vec<usize> = (0..self.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            self.eigenvalues[a]
                .total_cmp(&self.eigenvalues[b])
                .then(a.cmp(&b))
        });
        order
            .into_iter()
            .take(m)
            .map(|flat| {
                let index = self.flat_to_index(flat);
                let continuum = index
                    .iter()
                    .zip(self.domain.lengths())
                    .map(|(&k, &l)| (k as f64 * PI / l).powi(2))
                    .sum();
                Mode {
                    index,
                    eigenvalue: self.eigenvalues[flat],
                    continuum,
                }
            })
            .collect()
    }

    /// L²-normalized eigenvector for the given wave numbers.
    pub fn eigenvector(&self, index: &[usize]) -> Result<Field> {
        let flat = self.index_to_flat(index)?;
        let mut coeffs = vec![0.0; self.eigenvalues.len()];
        coeffs[flat] = 1.0;
        self.inverse_transform(&coeffs)
    }

    /// Eigenvector of the `rank`-th smallest eigenvalue (0-based).
    pub fn ordered_eigenvector(&self, rank: usize) -> Result<Field> {
        let mode = self
            .lowest_modes(rank + 1)
            .pop()
            .filter(|_| rank < self.eigenvalues.len())
            .ok_or_else(|| Error::InvalidParameter(format!("no mode of rank {rank}")))?;
        self.eigenvector(&mode.index)
    }

    fn along_axes(&self, values: &mut [f64]) {
        let strides = self.domain.strides();
        let total = values.len();
        for (axis, &s) in self.axes.iter().zip(&strides) {
            let n = axis.n;
            let mut line = vec![0.0; n];
            let mut buf = vec![Complex::new(0.0, 0.0); 2 * (n + 1)];
            // Every line along this axis starts at an index whose axis coordinate is 0.
            for start in (0..total).filter(|&j| (j / s) % n == 0) {
                for (k, v) in line.iter_mut().enumerate() {
                    *v = values[start + k * s];
                }
                axis.dst(&mut line, &mut buf);
                for (k, v) in line.iter().enumerate() {
                    values[start + k * s] = *v;
                }
            }
        }
    }

    /// Eigen-coefficients `c_k = (u, e_k)`.
    pub fn transform(&self, u: &Field) -> Result<Vec<f64>> {
        if !u.conforms_to(&self.domain) {
            return Err(Error::DomainMismatch);
        }
        let mut c = u.values().to_vec();
        self.along_axes(&mut c);
        c.iter_mut().for_each(|v| *v *= self.forward_scale);
        Ok(c)
    }

    /// Field `Σ c_k e_k`.
    pub fn inverse_transform(&self, coeffs: &[f64]) -> Result<Field> {
        if coeffs.len() != self.eigenvalues.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for {} modes",
                coeffs.len(),
                self.eigenvalues.len()
            )));
        }
        let mut v = coeffs.to_vec();
        self.along_axes(&mut v);
        v.iter_mut().for_each(|x| *x *= self.backward_scale);
        Ok(Field::from_raw(&self.domain, v))
    }

    /// `φ(A) u`: every eigen-coefficient is scaled by `φ(λ_k)`.
    pub fn apply_phi(&self, phi: impl Fn(f64) -> f64, u: &Field) -> Result<Field> {
        let factors = self.phi_values(phi)?;
        let mut c = self.transform(u)?;
        c.iter_mut().zip(&factors).for_each(|(c, f)| *c *= f);
        self.inverse_transform(&c)
    }

    pub(crate) fn phi_values(&self, phi: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let v = phi(l);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite(format!("φ({l}) = {v}")))
                }
            })
            .collect()
    }

    /// `‖A^α u‖`, computed from eigen-coefficients.
    pub fn fractional_norm(&self, alpha: f64, u: &Field) -> Result<f64> {
        let c = self.transform(u)?;
        let s: f64 = c
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| (l.powf(alpha) * c).powi(2))
            .sum();
        Ok(s.sqrt())
    }

    pub(crate) fn domain_spec(&self) -> &DomainSpec {
        &self.domain
    }
}

/// Free-function form of [`Spectrum::apply_phi`].
pub fn apply_phi_of_a(spectrum: &Spectrum, phi: impl Fn(f64) -> f64, u: &Field) -> Result<Field> {
    spectrum.apply_phi(phi, u)
}
