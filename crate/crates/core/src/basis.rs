//! Partitions of unity on `[0, 1]` and the copula family
//! `A_P(u, v) = m Phi(u)' P Phi(v)` they induce.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fmt_sig17;
use crate::polytope::DoublyStochasticMatrix;

/// Anything that can be evaluated as a bivariate CDF on the unit square.
pub trait Copula: Sync {
    fn cdf(&self, u: f64, v: f64) -> f64;

    /// Values on the tensor grid `us x vs`, row-major in `us`.
    /// Implementations override this when per-axis work can be shared.
    fn cdf_grid(&self, us: &[f64], vs: &[f64]) -> Vec<f64> {
        us.iter()
            .flat_map(|&u| vs.iter().map(move |&v| self.cdf(u, v)))
            .collect()
    }
}

impl<C: Copula + ?Sized> Copula for &C {
    fn cdf(&self, u: f64, v: f64) -> f64 {
        (**self).cdf(u, v)
    }

    fn cdf_grid(&self, us: &[f64], vs: &[f64]) -> Vec<f64> {
        (**self).cdf_grid(us, vs)
    }
}

/// Adapts a closure to [`Copula`].
pub struct FnCopula<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> Copula for FnCopula<F> {
    fn cdf(&self, u: f64, v: f64) -> f64 {
        (self.0)(u, v)
    }
}

pub fn independence() -> FnCopula<fn(f64, f64) -> f64> {
    FnCopula(|u, v| u * v)
}

pub fn comonotone() -> FnCopula<fn(f64, f64) -> f64> {
    FnCopula(|u: f64, v: f64| u.min(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisFlavor {
    /// `phi_1 = 1[0, 1/m]`, `phi_i = 1((i-1)/m, i/m]`.
    Indicator,
    /// `phi_i = B_{i-1}^{m-1}`.
    Bernstein,
}

impl std::str::FromStr for BasisFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indicator" => Ok(Self::Indicator),
            "bernstein" => Ok(Self::Bernstein),
            other => Err(Error::Parameter(format!("unknown basis '{other}'"))),
        }
    }
}

/// A partition of unity `{phi_i}` of size `m`. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionBasis {
    m: usize,
    flavor: BasisFlavor,
}

impl PartitionBasis {
    pub fn new(m: usize, flavor: BasisFlavor) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        Ok(Self { m, flavor })
    }

    pub fn indicator(m: usize) -> Result<Self> {
        Self::new(m, BasisFlavor::Indicator)
    }

    pub fn bernstein(m: usize) -> Result<Self> {
        Self::new(m, BasisFlavor::Bernstein)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn flavor(&self) -> BasisFlavor {
        self.flavor
    }

    /// Zero-based indicator cell of `u`: the first cell is closed on the left,
    /// the others are `((i-1)/m, i/m]`.
    pub fn bin(&self, u: f64) -> usize {
        indicator_bin(self.m, u)
    }

    pub fn phi(&self, i: usize, u: f64) -> Result<f64> {
        self.check_index(i)?;
        Ok(match self.flavor {
            BasisFlavor::Indicator => {
                if self.bin(u) == i {
                    1.0
                } else {
                    0.0
                }
            }
            BasisFlavor::Bernstein => bernstein_all(self.m - 1, u)[i],
        })
    }

    /// `Phi_i(u) = int_0^u phi_i`.
    pub fn cap_phi(&self, i: usize, u: f64) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.cap_phi_all(u)[i])
    }

    pub fn phi_all(&self, u: f64) -> Vec<f64> {
        match self.flavor {
            BasisFlavor::Indicator => {
                let mut out = vec![0.0; self.m];
                out[self.bin(u)] = 1.0;
                out
            }
            BasisFlavor::Bernstein => bernstein_all(self.m - 1, u),
        }
    }

    pub fn cap_phi_all(&self, u: f64) -> Vec<f64> {
        let m = self.m;
        let mf = m as f64;
        match self.flavor {
            BasisFlavor::Indicator => (0..m)
                .map(|i| (u - i as f64 / mf).clamp(0.0, 1.0 / mf))
                .collect(),
            BasisFlavor::Bernstein => {
                // Phi_i(u) = (1/m) sum_{k=i}^{m} B_k^m(u)   (one-based i)
                let b = bernstein_all(m, u);
                let mut out = vec![0.0; m];
                let mut tail = 0.0;
                for i in (0..m).rev() {
                    tail += b[i + 1];
                    out[i] = tail / mf;
                }
                out
            }
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.m {
            return Err(Error::IndexOutOfRange { index: i, m: self.m });
        }
        Ok(())
    }
}

pub(crate) fn indicator_bin(m: usize, u: f64) -> usize {
    let c = (m as f64 * u).ceil();
    if c <= 1.0 {
        0
    } else {
        (c as usize).min(m) - 1
    }
}

/// `B_k^n(u)` for `k = 0..=n`.
fn bernstein_all(n: usize, u: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    let w = 1.0 - u;
    let mut binom = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            binom = binom * (n + 1 - k) as f64 / k as f64;
        }
        *slot = binom * u.powi(k as i32) * w.powi((n - k) as i32);
    }
    out
}

/// `A_P` for a fixed matrix and basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCopula {
    p: DoublyStochasticMatrix,
    basis: PartitionBasis,
}

impl ModelCopula {
    pub fn new(p: DoublyStochasticMatrix, basis: PartitionBasis) -> Result<Self> {
        if p.m() != basis.m() {
            return Err(Error::DimensionMismatch {
                expected: basis.m(),
                got: p.m(),
            });
        }
        Ok(Self { p, basis })
    }

    pub fn matrix(&self) -> &DoublyStochasticMatrix {
        &self.p
    }

    pub fn basis(&self) -> PartitionBasis {
        self.basis
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        copula_pdf(&self.p, &self.basis, u, v)
    }
}

impl Copula for ModelCopula {
    fn cdf(&self, u: f64, v: f64) -> f64 {
        copula_cdf(&self.p, &self.basis, u, v)
    }

    fn cdf_grid(&self, us: &[f64], vs: &[f64]) -> Vec<f64> {
        let m = self.basis.m();
        let mf = m as f64;
        let p = self.p.as_matrix();
        let left: Vec<Vec<f64>> = us.iter().map(|&u| self.basis.cap_phi_all(u)).collect();
        // P Phi(v), one column per v
        let right: Vec<Vec<f64>> = vs
            .iter()
            .map(|&v| {
                let phi_v = self.basis.cap_phi_all(v);
                (0..m)
                    .map(|i| (0..m).map(|j| p[(i, j)] * phi_v[j]).sum())
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(us.len() * vs.len());
        for l in &left {
            for r in &right {
                out.push(mf * l.iter().zip(r).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        out
    }
}

/// `A_P(u, v) = m Phi(u)' P Phi(v)`.
pub fn copula_cdf(p: &DoublyStochasticMatrix, basis: &PartitionBasis, u: f64, v: f64) -> f64 {
    let m = basis.m();
    let pu = basis.cap_phi_all(u);
    let pv = basis.cap_phi_all(v);
    let pm = p.as_matrix();
    let mut acc = 0.0;
    for i in 0..m {
        if pu[i] == 0.0 {
            continue;
        }
        let row: f64 = (0..m).map(|j| pm[(i, j)] * pv[j]).sum();
        acc += pu[i] * row;
    }
    m as f64 * acc
}

/// `a_P(u, v) = sum_ij w_ij psi_i(u) psi_j(v) = m sum_ij P_ij phi_i(u) phi_j(v)`.
pub fn copula_pdf(p: &DoublyStochasticMatrix, basis: &PartitionBasis, u: f64, v: f64) -> f64 {
    let m = basis.m();
    let pm = p.as_matrix();
    match basis.flavor() {
        BasisFlavor::Indicator => m as f64 * pm[(basis.bin(u), basis.bin(v))],
        BasisFlavor::Bernstein => {
            let fu = basis.phi_all(u);
            let fv = basis.phi_all(v);
            let mut acc = 0.0;
            for i in 0..m {
                let row: f64 = (0..m).map(|j| pm[(i, j)] * fv[j]).sum();
                acc += fu[i] * row;
            }
            (m as f64 * acc).max(0.0)
        }
    }
}

/// Tolerance for 2-increasingness when discretizing an external copula.
pub const NOT_A_COPULA_TOL: f64 = 1e-9;

/// `P_C = m D R_C D'` where `R_C = (C(i/m, j/m))_{i,j=1..m}` and `D` is the
/// lower-bidiagonal difference matrix.
pub fn discretize<C: Copula + ?Sized>(c: &C, m: usize) -> Result<DoublyStochasticMatrix> {
    if m < 2 {
        return Err(Error::InvalidOrder(m));
    }
    let mf = m as f64;
    let axis: Vec<f64> = (0..=m).map(|i| i as f64 / mf).collect();
    let r = c.cdf_grid(&axis, &axis);
    let at = |i: usize, j: usize| {
        if i == 0 || j == 0 {
            0.0
        } else {
            r[i * (m + 1) + j]
        }
    };
    let mut p = DMatrix::zeros(m, m);
    for i in 1..=m {
        for j in 1..=m {
            let mass = at(i, j) - at(i - 1, j) - at(i, j - 1) + at(i - 1, j - 1);
            if mass < -NOT_A_COPULA_TOL {
                return Err(Error::NotACopula(format!(
                    "negative rectangle mass {mass:e} in cell ({i}, {j})"
                )));
            }
            p[(i - 1, j - 1)] = mf * mass.max(0.0);
        }
    }
    DoublyStochasticMatrix::new(p)
        .map_err(|e| Error::NotACopula(format!("discretization is not doubly stochastic: {e}")))
}

/// Sup-norm distance between `A_{P_C}` and `C` over the `(g+1) x (g+1)` grid.
pub fn approximation_error<C: Copula + ?Sized>(
    c: &C,
    m: usize,
    basis: &PartitionBasis,
    g: usize,
) -> Result<f64> {
    if basis.m() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: basis.m(),
        });
    }
    let approx = ModelCopula::new(discretize(c, m)?, *basis)?;
    Ok(crate::numerics::sup_norm_gap(&approx, c, g))
}

/// Default grid resolution for sup-norm checks.
pub const DEFAULT_SUP_GRID: usize = 200;

/// A copula evaluated on `{i/g} x {j/g}`, `i, j = 0..=g`.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaGrid {
    g: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDefects {
    /// Largest deviation from the uniform-margin boundary values.
    pub boundary: f64,
    /// Most negative rectangle mass (0 if none).
    pub min_mass: f64,
}

impl GridDefects {
    pub fn is_valid(&self, boundary_tol: f64, mass_tol: f64) -> bool {
        self.boundary <= boundary_tol && self.min_mass >= -mass_tol
    }
}

impl CopulaGrid {
    pub fn from_copula<C: Copula + ?Sized>(c: &C, g: usize) -> Result<Self> {
        if g < 1 {
            return Err(Error::Parameter("grid resolution must be >= 1".into()));
        }
        let axis: Vec<f64> = (0..=g).map(|i| i as f64 / g as f64).collect();
        Ok(Self {
            g,
            values: c.cdf_grid(&axis, &axis),
        })
    }

    pub fn resolution(&self) -> usize {
        self.g
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.g + 1) + j]
    }

    pub fn defects(&self) -> GridDefects {
        let g = self.g;
        let gf = g as f64;
        let mut boundary = 0.0f64;
        for k in 0..=g {
            let t = k as f64 / gf;
            boundary = boundary
                .max(self.get(0, k).abs())
                .max(self.get(k, 0).abs())
                .max((self.get(g, k) - t).abs())
                .max((self.get(k, g) - t).abs());
        }
        let mut min_mass = 0.0f64;
        for i in 1..=g {
            for j in 1..=g {
                let mass = self.get(i, j) - self.get(i - 1, j) - self.get(i, j - 1)
                    + self.get(i - 1, j - 1);
                min_mass = min_mass.min(mass);
            }
        }
        GridDefects { boundary, min_mass }
    }

    /// `u,v,value` rows in row-major grid order, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u,v,value")?;
        let gf = self.g as f64;
        for i in 0..=self.g {
            for j in 0..=self.g {
                writeln!(
                    w,
                    "{},{},{}",
                    fmt_sig17(i as f64 / gf),
                    fmt_sig17(j as f64 / gf),
                    fmt_sig17(self.get(i, j))
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::random_interior;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn indicator_phi_example() {
        let b = PartitionBasis::indicator(4).unwrap();
        assert_eq!(b.phi(1, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(b.cap_phi(1, 0.3).unwrap(), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn bernstein_phi_example() {
        let b = PartitionBasis::bernstein(2).unwrap();
        assert_abs_diff_eq!(b.phi(0, 0.3).unwrap(), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(b.cap_phi(0, 0.5).unwrap(), 0.375, epsilon = 1e-15);
    }

    #[test]
    fn index_out_of_range() {
        let b = PartitionBasis::indicator(3).unwrap();
        assert!(matches!(b.phi(3, 0.5), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(b.cap_phi(7, 0.5), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn bin_convention() {
        let b = PartitionBasis::indicator(4).unwrap();
        assert_eq!(b.bin(0.0), 0);
        assert_eq!(b.bin(0.25), 0);
        assert_eq!(b.bin(0.2500001), 1);
        assert_eq!(b.bin(0.5), 1);
        assert_eq!(b.bin(1.0), 3);
    }

    #[test]
    fn partition_of_unity_and_integrals() {
        for m in 2..=20 {
            for flavor in [BasisFlavor::Indicator, BasisFlavor::Bernstein] {
                let b = PartitionBasis::new(m, flavor).unwrap();
                for k in 0..=1000 {
                    let u = k as f64 / 1000.0;
                    let s: f64 = b.phi_all(u).iter().sum();
                    assert!((s - 1.0).abs() <= 1e-12);
                    let cs: f64 = b.cap_phi_all(u).iter().sum();
                    assert!((cs - u).abs() <= 1e-12);
                }
                for c in b.cap_phi_all(1.0) {
                    assert_abs_diff_eq!(c, 1.0 / m as f64, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn bernstein_cap_phi_matches_quadrature() {
        let b = PartitionBasis::bernstein(5).unwrap();
        let n = 4000;
        for i in 0..5 {
            let u = 0.63;
            let h = u / n as f64;
            let integral: f64 = (0..n)
                .map(|k| b.phi(i, (k as f64 + 0.5) * h).unwrap() * h)
                .sum();
            assert_abs_diff_eq!(b.cap_phi(i, u).unwrap(), integral, epsilon = 1e-8);
        }
    }

    #[test]
    fn center_gives_independence() {
        for flavor in [BasisFlavor::Indicator, BasisFlavor::Bernstein] {
            let b = PartitionBasis::new(5, flavor).unwrap();
            let p = DoublyStochasticMatrix::center(5).unwrap();
            for (u, v) in [(0.1, 0.9), (0.33, 0.5), (0.77, 0.21)] {
                assert_abs_diff_eq!(copula_cdf(&p, &b, u, v), u * v, epsilon = 1e-15);
                assert_abs_diff_eq!(copula_pdf(&p, &b, u, v), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn identity_on_indicator_grid() {
        let m = 5;
        let b = PartitionBasis::indicator(m).unwrap();
        let p = DoublyStochasticMatrix::identity(m).unwrap();
        for i in 0..=m {
            for j in 0..=m {
                let got = copula_cdf(&p, &b, i as f64 / m as f64, j as f64 / m as f64);
                assert_abs_diff_eq!(got, i.min(j) as f64 / m as f64, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn margins_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_interior(4, &mut rng).unwrap();
        for flavor in [BasisFlavor::Indicator, BasisFlavor::Bernstein] {
            let b = PartitionBasis::new(4, flavor).unwrap();
            assert_abs_diff_eq!(copula_cdf(&p, &b, 0.3, 1.0), 0.3, epsilon = 1e-12);
            assert_abs_diff_eq!(copula_cdf(&p, &b, 1.0, 0.8), 0.8, epsilon = 1e-12);
        }
    }

    #[test]
    fn indicator_pdf_example() {
        let p = DoublyStochasticMatrix::from_rows(&[&[0.75, 0.25], &[0.25, 0.75]]).unwrap();
        let b = PartitionBasis::indicator(2).unwrap();
        assert_abs_diff_eq!(copula_pdf(&p, &b, 0.1, 0.1), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn pdf_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let p = random_interior(6, &mut rng).unwrap();
            let ind = PartitionBasis::indicator(6).unwrap();
            let cell_sum: f64 = (0..6)
                .flat_map(|i| (0..6).map(move |j| (i, j)))
                .map(|(i, j)| {
                    copula_pdf(&p, &ind, (i as f64 + 0.5) / 6.0, (j as f64 + 0.5) / 6.0) / 36.0
                })
                .sum();
            assert_abs_diff_eq!(cell_sum, 1.0, epsilon = 1e-12);

            let bern = PartitionBasis::bernstein(6).unwrap();
            let g = 201;
            let h = 1.0 / g as f64;
            let mut acc = 0.0;
            for i in 0..g {
                for j in 0..g {
                    acc += copula_pdf(&p, &bern, (i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                }
            }
            assert!((acc * h * h - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn grid_override_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_interior(4, &mut rng).unwrap();
        let model = ModelCopula::new(p, PartitionBasis::bernstein(4).unwrap()).unwrap();
        let us = [0.0, 0.2, 0.71, 1.0];
        let vs = [0.05, 0.5, 0.99];
        let fast = model.cdf_grid(&us, &vs);
        for (k, (u, v)) in us
            .iter()
            .flat_map(|u| vs.iter().map(move |v| (*u, *v)))
            .enumerate()
        {
            assert_abs_diff_eq!(fast[k], model.cdf(u, v), epsilon = 1e-15);
        }
    }

    #[test]
    fn discretize_independence_and_comonotone() {
        let p = discretize(&independence(), 4).unwrap();
        assert!((p.as_matrix().add_scalar(-0.25)).amax() < 1e-14);
        let p = discretize(&comonotone(), 2).unwrap();
        assert!((p.as_matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn discretize_rejects_non_copula() {
        let bad = FnCopula(|u: f64, v: f64| (u + v - 1.0).max(0.0) * 0.5 + u.min(v) * 0.5 - 0.1 * (u * v * (1.0 - u) * (1.0 - v)).sqrt());
        assert!(matches!(discretize(&bad, 10), Err(Error::NotACopula(_))));
    }

    #[test]
    fn csv_layout() {
        let grid = CopulaGrid::from_copula(&independence(), 2).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "u,v,value");
        assert_eq!(lines.len(), 10);
        assert_eq!(
            lines[7],
            "1.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0"
        );
        assert!(grid.defects().is_valid(1e-15, 1e-15));
    }
}
