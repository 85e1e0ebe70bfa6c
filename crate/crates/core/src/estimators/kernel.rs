//! Gaussian-kernel copula estimator
//! `C(u, v) = F(F_X^-1(u), F_Y^-1(v))` with
//! `F(x, y) = (1/n) sum_k Phi((x - x_k)/h_x) Phi((y - y_k)/h_y)`.

use crate::basis::Copula;
use crate::data::RawSample;
use crate::dist::{mean_and_sd, normal_cdf};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    /// `h = sd * n^(-1/5)` per coordinate.
    #[default]
    NormalReference,
    Fixed { hx: f64, hy: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCopula {
    x: Vec<f64>,
    y: Vec<f64>,
    hx: f64,
    hy: f64,
}

/// Root-finding tolerance on the smoothed marginal CDF.
const INVERSION_TOL: f64 = 1e-12;

fn smoothed_cdf(data: &[f64], h: f64, t: f64) -> f64 {
    data.iter().map(|&d| normal_cdf((t - d) / h)).sum::<f64>() / data.len() as f64
}

/// Solves `smoothed_cdf(t) = p` for `p` in `(0, 1)` by bisection.
fn smoothed_quantile(data: &[f64], h: f64, p: f64) -> f64 {
    let (min, max) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut reach = 5.0 * h;
    let mut lo = min - reach;
    while smoothed_cdf(data, h, lo) > p && reach < 1e12 * h {
        reach *= 2.0;
        lo = min - reach;
    }
    let mut reach = 5.0 * h;
    let mut hi = max + reach;
    while smoothed_cdf(data, h, hi) < p && reach < 1e12 * h {
        reach *= 2.0;
        hi = max + reach;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = smoothed_cdf(data, h, mid) - p;
        if f.abs() <= INVERSION_TOL {
            return mid;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl KernelCopula {
    pub fn new(raw: &RawSample, bandwidth: Bandwidth) -> Result<Self> {
        let n = raw.len();
        if n < 2 {
            return Err(Error::DegenerateSample(format!(
                "kernel estimation needs at least 2 observations, got {n}"
            )));
        }
        let (_, sx) = mean_and_sd(raw.x());
        let (_, sy) = mean_and_sd(raw.y());
        for (name, s) in [("x", sx), ("y", sy)] {
            if s <= 0.0 {
                return Err(Error::DegenerateSample(format!("coordinate {name} has zero variance")));
            }
        }
        let (hx, hy) = match bandwidth {
            Bandwidth::NormalReference => {
                let f = (n as f64).powf(-0.2);
                (sx * f, sy * f)
            }
            Bandwidth::Fixed { hx, hy } => {
                if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "bandwidths must be positive, got ({hx}, {hy})"
                    )));
                }
                (hx, hy)
            }
        };
        Ok(Self {
            x: raw.x().to_vec(),
            y: raw.y().to_vec(),
            hx,
            hy,
        })
    }

    pub fn bandwidths(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    pub fn joint_cdf(&self, x: f64, y: f64) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(&a, &b)| normal_cdf((x - a) / self.hx) * normal_cdf((y - b) / self.hy))
            .sum::<f64>()
            / self.x.len() as f64
    }

    pub fn marginal_x(&self, x: f64) -> f64 {
        smoothed_cdf(&self.x, self.hx, x)
    }

    pub fn marginal_y(&self, y: f64) -> f64 {
        smoothed_cdf(&self.y, self.hy, y)
    }

    pub fn quantile_x(&self, u: f64) -> f64 {
        quantile(&self.x, self.hx, u)
    }

    pub fn quantile_y(&self, v: f64) -> f64 {
        quantile(&self.y, self.hy, v)
    }

    /// `Phi((q - d_k) / h)` for each `q` in `qs`, row-major.
    fn kernel_rows(data: &[f64], h: f64, qs: &[f64]) -> Vec<f64> {
        qs.iter()
            .flat_map(|&q| data.iter().map(move |&d| normal_cdf((q - d) / h)))
            .collect()
    }
}

fn quantile(data: &[f64], h: f64, p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        smoothed_quantile(data, h, p)
    }
}

impl Copula for KernelCopula {
    fn cdf(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v.min(1.0);
        }
        if v >= 1.0 {
            return u;
        }
        self.joint_cdf(self.quantile_x(u), self.quantile_y(v))
    }

    fn cdf_grid(&self, us: &[f64], vs: &[f64]) -> Vec<f64> {
        let n = self.x.len();
        let qx: Vec<f64> = us.iter().map(|&u| self.quantile_x(u)).collect();
        let qy: Vec<f64> = vs.iter().map(|&v| self.quantile_y(v)).collect();
        let a = Self::kernel_rows(&self.x, self.hx, &qx);
        let b = Self::kernel_rows(&self.y, self.hy, &qy);
        let mut out = Vec::with_capacity(us.len() * vs.len());
        for (iu, &u) in us.iter().enumerate() {
            for (iv, &v) in vs.iter().enumerate() {
                let value = if u <= 0.0 || v <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    v.min(1.0)
                } else if v >= 1.0 {
                    u
                } else {
                    let ra = &a[iu * n..(iu + 1) * n];
                    let rb = &b[iv * n..(iv + 1) * n];
                    ra.iter().zip(rb).map(|(p, q)| p * q).sum::<f64>() / n as f64
                };
                out.push(value);
            }
        }
        out
    }
}
