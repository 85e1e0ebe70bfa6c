//! Binomial mean absolute deviation and grid utilities on the unit square.

use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_binomial;

use crate::basis::Copula;
use crate::error::{Error, Result};

/// `g_n(p) = E|X - np|` for `X ~ Binomial(n, p)`, via the closed form
/// `2 n C(n-1, k) p^{k+1} (1-p)^{n-k}` with `k = floor(np)`.
pub fn binomial_mad(n: u64, p: f64) -> f64 {
    if n == 0 || p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    let k = ((n as f64) * p).floor() as u64;
    if k >= n {
        return 0.0;
    }
    let log = (2.0 * n as f64).ln()
        + ln_binomial(n - 1, k)
        + (k + 1) as f64 * p.ln()
        + (n - k) as f64 * (1.0 - p).ln();
    log.exp()
}

/// `sum_k |k - np| C(n, k) p^k (1-p)^{n-k}` evaluated term by term.
pub fn binomial_mad_direct(n: u64, p: f64) -> f64 {
    let np = n as f64 * p;
    (0..=n)
        .map(|k| {
            let pmf = if p == 0.0 {
                if k == 0 { 1.0 } else { 0.0 }
            } else if p == 1.0 {
                if k == n { 1.0 } else { 0.0 }
            } else {
                (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
            };
            (k as f64 - np).abs() * pmf
        })
        .sum()
}

/// `sup_p g_n(p)`, attained on the grid `p = (k+1)/(n+1)`, `k = 0..n-1`.
pub fn binomial_mad_sup(n: u64) -> f64 {
    (0..n)
        .map(|k| binomial_mad(n, (k + 1) as f64 / (n + 1) as f64))
        .fold(0.0, f64::max)
}

/// `1 / B(1/2, (n+1)/2)`, the supremum for odd `n`.
pub fn binomial_mad_sup_odd(n: u64) -> f64 {
    (-ln_beta(0.5, (n as f64 + 1.0) / 2.0)).exp()
}

/// The even-`n` expression as printed in the source literature,
/// `(1 - (n+1)^-2)^{n/2} (1 + (n+1)^-2) / B(1/2, n/2)`.
///
/// It does not equal the supremum (e.g. `40/81` against `16/27` at `n = 2`);
/// see [`binomial_mad_sup_even`].
pub fn binomial_mad_sup_even_printed(n: u64) -> f64 {
    let a = 1.0 / ((n + 1) as f64).powi(2);
    (1.0 - a).powf(n as f64 / 2.0) * (1.0 + a) * (-ln_beta(0.5, n as f64 / 2.0)).exp()
}

/// Even-`n` supremum `(1 - (n+1)^-2)^{n/2} (1 + (n+1)^-1) / B(1/2, n/2)`.
pub fn binomial_mad_sup_even(n: u64) -> f64 {
    let a = 1.0 / ((n + 1) as f64).powi(2);
    (1.0 - a).powf(n as f64 / 2.0)
        * (1.0 + 1.0 / (n + 1) as f64)
        * (-ln_beta(0.5, n as f64 / 2.0)).exp()
}

/// Midpoint rule on a `g x g` grid over `[0, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    g: usize,
}

impl QuadratureSpec {
    pub const DEFAULT_RESOLUTION: usize = 100;

    pub fn new(g: usize) -> Result<Self> {
        if g < 2 {
            return Err(Error::Parameter(format!(
                "quadrature resolution must be >= 2, got {g}"
            )));
        }
        Ok(Self { g })
    }

    pub fn resolution(&self) -> usize {
        self.g
    }

    /// Midpoints `(k + 1/2) / g`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.g).map(|k| (k as f64 + 0.5) / self.g as f64).collect()
    }

    pub fn cell_area(&self) -> f64 {
        1.0 / (self.g * self.g) as f64
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            g: Self::DEFAULT_RESOLUTION,
        }
    }
}

/// `k / g` for `k = 0..=g`.
pub fn closed_grid(g: usize) -> Vec<f64> {
    (0..=g).map(|k| k as f64 / g as f64).collect()
}

/// `max |f - h|` over the `(g+1) x (g+1)` grid `{i/g} x {j/g}`.
pub fn sup_norm_gap<F: Copula + ?Sized, H: Copula + ?Sized>(f: &F, h: &H, g: usize) -> f64 {
    let axis = closed_grid(g.max(1));
    let a = f.cdf_grid(&axis, &axis);
    let b = h.cdf_grid(&axis, &axis);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Midpoint-rule approximation of `int int (f - h)^2`.
pub fn l2_sq_gap<F: Copula + ?Sized, H: Copula + ?Sized>(f: &F, h: &H, quad: &QuadratureSpec) -> f64 {
    let nodes = quad.nodes();
    let a = f.cdf_grid(&nodes, &nodes);
    let b = h.cdf_grid(&nodes, &nodes);
    l2_sq_gap_values(&a, &b, quad)
}

/// As [`l2_sq_gap`] for values already evaluated at [`QuadratureSpec::nodes`].
pub fn l2_sq_gap_values(a: &[f64], b: &[f64], quad: &QuadratureSpec) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * quad.cell_area()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{comonotone, independence};
    use approx::assert_abs_diff_eq;

    #[test]
    fn mad_examples() {
        assert_abs_diff_eq!(binomial_mad(1, 0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(binomial_mad(2, 1.0 / 3.0), 16.0 / 27.0, epsilon = 1e-14);
        assert_eq!(binomial_mad(5, 0.0), 0.0);
        assert_eq!(binomial_mad(5, 1.0), 0.0);
        assert_eq!(binomial_mad_direct(5, 1.0), 0.0);
    }

    #[test]
    fn closed_form_matches_direct_sum() {
        for n in 1..=50 {
            for k in 1..=99 {
                let p = k as f64 / 100.0;
                let a = binomial_mad(n, p);
                let b = binomial_mad_direct(n, p);
                assert!((a - b).abs() <= 1e-12, "n={n} p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sup_small_cases() {
        assert_abs_diff_eq!(binomial_mad_sup(1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(binomial_mad_sup(2), 16.0 / 27.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binomial_mad_sup(3), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn odd_and_even_forms() {
        for n in (1..30).step_by(2) {
            assert!((binomial_mad_sup(n) - binomial_mad_sup_odd(n)).abs() <= 1e-12);
        }
        for n in (2..=30).step_by(2) {
            assert!((binomial_mad_sup(n) - binomial_mad_sup_even(n)).abs() <= 1e-12);
        }
        assert_abs_diff_eq!(binomial_mad_sup_even_printed(2), 40.0 / 81.0, epsilon = 1e-14);
    }

    #[test]
    fn gaps_on_reference_pair() {
        let quad = QuadratureSpec::new(200).unwrap();
        assert!((l2_sq_gap(&independence(), &comonotone(), &quad) - 1.0 / 90.0).abs() <= 2e-4);
        assert!((sup_norm_gap(&independence(), &comonotone(), 200) - 0.25).abs() <= 5e-3);
        assert_eq!(l2_sq_gap(&independence(), &independence(), &quad), 0.0);
        assert_eq!(sup_norm_gap(&comonotone(), &comonotone(), 50), 0.0);
    }

    #[test]
    fn quadrature_rejects_tiny_grids() {
        assert!(QuadratureSpec::new(1).is_err());
    }
}
