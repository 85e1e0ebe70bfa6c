//! Reference copulas for simulation: Gaussian, cross and diamond, plus the
//! Student `t_7` and chi-square(4) margins.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::Copula;
use crate::dist::{bivariate_normal_cdf, chi_square4, normal_cdf, normal_quantile, student_t7};
use crate::error::{Error, Result};
use crate::fmt_sig17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CopulaFamily {
    /// `C_rho(u, v) = Phi_rho(Phi^-1(u), Phi^-1(v))`.
    Gaussian,
    /// `(C_rho(u, v) - C_rho(u, 1 - v) + u) / 2`: an equal mixture of the
    /// Gaussian copula and its reflection in `v`.
    Cross,
    /// The cross copula with its first coordinate shifted by `1/2` mod 1.
    Diamond,
}

impl CopulaFamily {
    pub const ALL: [Self; 3] = [Self::Gaussian, Self::Cross, Self::Diamond];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Cross => "cross",
            Self::Diamond => "diamond",
        }
    }
}

impl std::str::FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "cross" => Ok(Self::Cross),
            "diamond" => Ok(Self::Diamond),
            other => Err(Error::Parameter(format!("unknown copula family '{other}'"))),
        }
    }
}

impl std::fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCopula {
    family: CopulaFamily,
    rho: f64,
}

/// Default correlation grid for MISE curves.
pub const RHO_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

fn gaussian_cdf(rho: f64, u: f64, v: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return v.min(1.0);
    }
    if v >= 1.0 {
        return u;
    }
    if rho == 0.0 {
        return u * v;
    }
    if rho >= 1.0 {
        return u.min(v);
    }
    if rho <= -1.0 {
        return (u + v - 1.0).max(0.0);
    }
    bivariate_normal_cdf(normal_quantile(u), normal_quantile(v), rho).clamp(0.0, u.min(v))
}

impl ReferenceCopula {
    pub fn new(family: CopulaFamily, rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::Parameter(format!("rho = {rho} is outside [-1, 1]")));
        }
        Ok(Self { family, rho })
    }

    pub fn gaussian(rho: f64) -> Result<Self> {
        Self::new(CopulaFamily::Gaussian, rho)
    }

    pub fn cross(rho: f64) -> Result<Self> {
        Self::new(CopulaFamily::Cross, rho)
    }

    pub fn diamond(rho: f64) -> Result<Self> {
        Self::new(CopulaFamily::Diamond, rho)
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn cross_cdf(&self, u: f64, v: f64) -> f64 {
        let r = self.rho;
        0.5 * (gaussian_cdf(r, u, v) - gaussian_cdf(r, u, 1.0 - v) + u)
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = v.clamp(0.0, 1.0);
        match self.family {
            CopulaFamily::Gaussian => gaussian_cdf(self.rho, u, v),
            CopulaFamily::Cross => self.cross_cdf(u, v),
            CopulaFamily::Diamond => {
                let seam = self.cross_cdf(0.5, v);
                if u <= 0.5 {
                    self.cross_cdf(u + 0.5, v) - seam
                } else {
                    self.cross_cdf(u - 0.5, v) + v - seam
                }
            }
        }
    }

    /// One exact draw.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let z2 = self.rho * z1 + (1.0 - self.rho * self.rho).max(0.0).sqrt() * e;
        let (u, mut v) = (normal_cdf(z1), normal_cdf(z2));
        if self.family == CopulaFamily::Gaussian {
            return (u, v);
        }
        if rng.random::<f64>() > 0.5 {
            v = 1.0 - v;
        }
        if self.family == CopulaFamily::Cross {
            return (u, v);
        }
        let shifted = u + 0.5;
        (if shifted >= 1.0 { shifted - 1.0 } else { shifted }, v)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

impl Copula for ReferenceCopula {
    fn cdf(&self, u: f64, v: f64) -> f64 {
        ReferenceCopula::cdf(self, u, v)
    }
}

/// `x,y` rows with 17 significant digits.
pub fn write_samples_csv<W: Write>(pairs: &[(f64, f64)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "x,y")?;
    for (x, y) in pairs {
        writeln!(w, "{},{}", fmt_sig17(*x), fmt_sig17(*y))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Margin {
    Uniform,
    StudentT7,
    ChiSquare4,
}

impl Margin {
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match self {
            Self::Uniform => Ok(x.clamp(0.0, 1.0)),
            Self::StudentT7 => Ok(student_t7::cdf(x)),
            Self::ChiSquare4 => chi_square4::cdf(x),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Self::Uniform => p.clamp(0.0, 1.0),
            Self::StudentT7 => student_t7::quantile(p),
            Self::ChiSquare4 => chi_square4::quantile(p),
        }
    }
}

impl std::str::FromStr for Margin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "t7" => Ok(Self::StudentT7),
            "chisq4" => Ok(Self::ChiSquare4),
            other => Err(Error::Parameter(format!("unknown margin '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MarginPair {
    pub first: Margin,
    pub second: Margin,
}

impl MarginPair {
    pub fn uniform() -> Self {
        Self {
            first: Margin::Uniform,
            second: Margin::Uniform,
        }
    }

    /// `t_7` for the first coordinate, chi-square(4) for the second.
    pub fn t7_chisq4() -> Self {
        Self {
            first: Margin::StudentT7,
            second: Margin::ChiSquare4,
        }
    }

    /// Maps copula draws to the data scale.
    pub fn apply(&self, pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
        pairs
            .iter()
            .map(|&(u, v)| (self.first.quantile(u), self.second.quantile(v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::CopulaGrid;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_examples() {
        let ind = ReferenceCopula::gaussian(0.0).unwrap();
        assert_abs_diff_eq!(ind.cdf(0.3, 0.7), 0.21, epsilon = 1e-15);
        let g = ReferenceCopula::gaussian(0.5).unwrap();
        assert_abs_diff_eq!(g.cdf(0.5, 0.5), 1.0 / 3.0, epsilon = 1e-9);
        assert!(ReferenceCopula::gaussian(1.2).is_err());
    }

    #[test]
    fn cross_margin_and_symmetry() {
        for rho in [0.0, 0.3, 0.8, 1.0] {
            let c = ReferenceCopula::cross(rho).unwrap();
            for u in [0.1, 0.45, 0.9] {
                assert_abs_diff_eq!(c.cdf(u, 1.0), u, epsilon = 1e-12);
                for v in [0.2, 0.5, 0.77] {
                    assert_abs_diff_eq!(c.cdf(u, v), u - c.cdf(u, 1.0 - v), epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn diamond_is_continuous_at_the_seam() {
        let d = ReferenceCopula::diamond(0.7).unwrap();
        for v in [0.1, 0.5, 0.93] {
            assert_abs_diff_eq!(d.cdf(0.5, v), d.cdf(0.5 + 1e-13, v), epsilon = 1e-9);
        }
    }

    #[test]
    fn reference_grids_are_copulas() {
        for fam in CopulaFamily::ALL {
            for rho in [0.0, 0.5, 0.9] {
                let c = ReferenceCopula::new(fam, rho).unwrap();
                let grid = CopulaGrid::from_copula(&c, 100).unwrap();
                assert!(grid.defects().is_valid(1e-7, 1e-7), "{fam} {rho}: {:?}", grid.defects());
            }
        }
    }

    #[test]
    fn comonotone_draws_coincide() {
        let c = ReferenceCopula::gaussian(1.0).unwrap();
        let mut rng = stream_rng(2, 0);
        for (u, v) in c.sample(100, &mut rng) {
            assert_eq!(u, v);
        }
    }

    #[test]
    fn cross_draws_have_uniform_second_margin() {
        let c = ReferenceCopula::cross(0.6).unwrap();
        let mut rng = stream_rng(3, 0);
        let n = 20_000;
        let hits = c.sample(n, &mut rng).iter().filter(|p| p.1 <= 0.5).count();
        let se = (0.25 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.5).abs() <= 3.0 * se);
    }

    #[test]
    fn margins() {
        assert_abs_diff_eq!(Margin::StudentT7.cdf(0.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            Margin::ChiSquare4.cdf(2.0).unwrap(),
            1.0 - 2.0 * (-1.0f64).exp(),
            epsilon = 1e-14
        );
        assert!(matches!(Margin::ChiSquare4.cdf(-1.0), Err(Error::Domain { .. })));
        for m in [Margin::StudentT7, Margin::ChiSquare4] {
            for x in [0.1, 0.5, 1.5, 3.0, 8.0] {
                let p = m.cdf(x).unwrap();
                assert!((m.quantile(p) - x).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn samples_csv() {
        let mut buf = Vec::new();
        write_samples_csv(&[(0.5, 0.25)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x,y\n5.0000000000000000e-1,2.5000000000000000e-1\n"
        );
    }
}
