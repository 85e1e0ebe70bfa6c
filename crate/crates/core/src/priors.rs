//! Prior log-densities on the Birkhoff polytope.
//!
//! With `W = P / m` and `V` the first `m - 1` columns of `W`, the Fisher
//! information of the mixture weights is
//!
//! ```text
//! I(W) = det(I/m - m V'V) / (m^m prod_ij w_ij)
//! ```
//!
//! The Jeffreys prior is `I^{1/2}`; the uniform prior is flat in the
//! orthonormal `alpha` coordinates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::polytope::{DoublyStochasticMatrix, FEASIBILITY_TOL};

/// Entries of `W` at or below this are treated as boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorKind {
    Jeffreys,
    Uniform,
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jeffreys" => Ok(Self::Jeffreys),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Parameter(format!("unknown prior '{other}'"))),
        }
    }
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Jeffreys => "jeffreys",
            Self::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub m: usize,
}

impl PriorSpec {
    pub fn new(kind: PriorKind, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        Ok(Self { kind, m })
    }

    pub fn jeffreys(m: usize) -> Result<Self> {
        Self::new(PriorKind::Jeffreys, m)
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(PriorKind::Uniform, m)
    }

    pub fn log_density(&self, p: &DoublyStochasticMatrix) -> f64 {
        log_density(self, p)
    }
}

/// `log I(W)`. Fails with [`Error::Boundary`] if some `w_ij <= 1e-12`.
pub fn log_fisher_info_det(p: &DoublyStochasticMatrix) -> Result<f64> {
    log_fisher_info_det_raw(p.as_matrix())
}

pub fn fisher_info_det(p: &DoublyStochasticMatrix) -> Result<f64> {
    log_fisher_info_det(p).map(f64::exp)
}

pub(crate) fn log_fisher_info_det_raw(p: &DMatrix<f64>) -> Result<f64> {
    let m = p.nrows();
    let mf = m as f64;
    let mut log_prod = 0.0;
    for r in 0..m {
        for c in 0..m {
            let w = p[(r, c)] / mf;
            if w <= BOUNDARY_TOL {
                return Err(Error::Boundary {
                    row: r,
                    col: c,
                    value: w,
                });
            }
            log_prod += w.ln();
        }
    }
    let v = p.columns(0, m - 1) / mf;
    let mut a = v.transpose() * &v;
    a *= -mf;
    for k in 0..m - 1 {
        a[(k, k)] += 1.0 / mf;
    }
    let lu = a.lu();
    let u = lu.u();
    let mut log_det = 0.0;
    let mut negative = lu.p().determinant::<f64>() < 0.0;
    for k in 0..m - 1 {
        let d = u[(k, k)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::NumericalDegeneracy(
                "singular information matrix".into(),
            ));
        }
        if d < 0.0 {
            negative = !negative;
        }
        log_det += d.abs().ln();
    }
    if negative {
        return Err(Error::NumericalDegeneracy(
            "information determinant is negative".into(),
        ));
    }
    Ok(log_det - mf * mf.ln() - log_prod)
}

/// Unnormalized log prior density; `-inf` off the support.
///
/// Jeffreys is `-inf` whenever some entry is on the boundary. The uniform
/// prior is `0` on the closed polytope.
pub fn log_density(prior: &PriorSpec, p: &DoublyStochasticMatrix) -> f64 {
    log_density_raw(prior.kind, p.as_matrix())
}

pub(crate) fn log_density_raw(kind: PriorKind, p: &DMatrix<f64>) -> f64 {
    match kind {
        PriorKind::Jeffreys => log_fisher_info_det_raw(p)
            .map(|l| 0.5 * l)
            .unwrap_or(f64::NEG_INFINITY),
        PriorKind::Uniform => {
            if p.iter().all(|&x| x >= -FEASIBILITY_TOL) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}
