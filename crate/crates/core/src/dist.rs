//! Univariate and bivariate distribution functions used by the reference
//! models and the kernel estimator.
#![allow(clippy::excessive_precision)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Halley step against `erfc`, giving close to full double precision.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    // Halley refinement; work in the smaller tail to avoid cancellation.
    let e = if x < 0.0 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_cdf(-x)
    };
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    x
}

// Gauss-Legendre weights and positive abscissae on [-1, 1], from Genz's
// BVNU routine.
const GL6_W: [f64; 3] = [0.1713244923791705, 0.3607615730481384, 0.4679139345726904];
const GL6_X: [f64; 3] = [0.9324695142031522, 0.6612093864662647, 0.2386191860831970];
const GL12_W: [f64; 6] = [
    0.04717533638651177,
    0.1069393259953183,
    0.1600783285433464,
    0.2031674267230659,
    0.2334925365383547,
    0.2491470458134029,
];
const GL12_X: [f64; 6] = [
    0.9815606342467191,
    0.9041172563704750,
    0.7699026741943050,
    0.5873179542866171,
    0.3678314989981802,
    0.1252334085114692,
];
const GL20_W: [f64; 10] = [
    0.01761400713915212,
    0.04060142980038694,
    0.06267204833410906,
    0.08327674157670475,
    0.1019301198172404,
    0.1181945319615184,
    0.1316886384491766,
    0.1420961093183821,
    0.1491729864726037,
    0.1527533871307259,
];
const GL20_X: [f64; 10] = [
    0.9931285991850949,
    0.9639719272779138,
    0.9122344282513259,
    0.8391169718222188,
    0.7463319064601508,
    0.6360536807265150,
    0.5108670019508271,
    0.3737060887154196,
    0.2277858511416451,
    0.07652652113349733,
];

/// `P(X > h, Y > k)` for a standard bivariate normal with correlation `r`
/// (Drezner-Wesolowsky with Genz's double-precision modifications).
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY {
            1.0
        } else {
            normal_cdf(-k)
        };
    }
    if k == f64::NEG_INFINITY {
        return normal_cdf(-h);
    }
    if r == 0.0 {
        return normal_cdf(-h) * normal_cdf(-k);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    // Nodes are mapped to 1 -/+ x, i.e. onto [0, 2].
    let nodes = || {
        w.iter()
            .zip(x)
            .flat_map(|(&wi, &xi)| [(wi, 1.0 - xi), (wi, 1.0 + xi)])
    };
    let tp = 2.0 * PI;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        for (wi, xi) in nodes() {
            let sn = (asr * xi).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return (bvn * asr / tp + normal_cdf(-h) * normal_cdf(-k)).clamp(0.0, 1.0);
    }
    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = 1.0 - r * r;
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 80.0;
        let asr = -0.5 * (bs / as_ + hk);
        if asr > -100.0 {
            bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
        }
        if hk > -100.0 {
            let b = bs.sqrt();
            let sp = tp.sqrt() * normal_cdf(-b / a);
            bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a *= 0.5;
        let mut acc = 0.0;
        for (wi, xi) in nodes() {
            let xs = (a * xi) * (a * xi);
            let asr = -0.5 * (bs / xs + hk);
            if asr > -100.0 {
                let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                let rs = (1.0 - xs).sqrt();
                let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                acc += wi * asr.exp() * (sp - ep);
            }
        }
        bvn = (a * acc - bvn) / tp;
    }
    if r > 0.0 {
        bvn += normal_cdf(-h.max(k));
    } else if h >= k {
        bvn = -bvn;
    } else {
        let l = if h < 0.0 {
            normal_cdf(k) - normal_cdf(h)
        } else {
            normal_cdf(-h) - normal_cdf(-k)
        };
        bvn = l - bvn;
    }
    bvn.clamp(0.0, 1.0)
}

/// Standard bivariate normal CDF `P(X <= h, Y <= k)` with correlation `rho`.
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> f64 {
    if rho >= 1.0 {
        return normal_cdf(h.min(k));
    }
    if rho <= -1.0 {
        return (normal_cdf(h) - normal_cdf(-k)).max(0.0);
    }
    bvn_upper(-h, -k, rho)
}

/// Safeguarded Newton inversion of a continuous increasing CDF on `(lo, hi)`.
fn invert_cdf(
    p: f64,
    cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    start: f64,
) -> f64 {
    let mut x = start.clamp(lo, hi);
    for _ in 0..200 {
        let f = cdf(x) - p;
        if f.abs() <= 1e-15 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = pdf(x);
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Upper bound `x` with `cdf(x) > p`, starting from `x0 > 0` and doubling.
fn bracket_above(p: f64, cdf: &impl Fn(f64) -> f64, x0: f64) -> f64 {
    let mut x = x0;
    while cdf(x) <= p && x < 1e300 {
        x *= 2.0;
    }
    x
}

pub mod student_t7 {
    use super::*;

    const NU: f64 = 7.0;

    pub fn pdf(t: f64) -> f64 {
        // Gamma(4) / (sqrt(7 pi) Gamma(7/2)) = 3.2 / (pi sqrt 7)
        let c = 3.2 / (PI * NU.sqrt());
        c * (1.0 + t * t / NU).powi(-4)
    }

    /// Closed form for odd degrees of freedom.
    pub fn cdf(t: f64) -> f64 {
        if t == f64::INFINITY {
            return 1.0;
        }
        if t == f64::NEG_INFINITY {
            return 0.0;
        }
        let theta = (t / NU.sqrt()).atan();
        let (s, c) = theta.sin_cos();
        let c2 = c * c;
        let series = c * (1.0 + c2 * (2.0 / 3.0 + c2 * 8.0 / 15.0));
        0.5 + (theta + s * series) / PI
    }

    pub fn quantile(p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        if p == 0.5 {
            return 0.0;
        }
        if p < 0.5 {
            return -quantile(1.0 - p);
        }
        let hi = bracket_above(p, &cdf, 1.0);
        invert_cdf(p, cdf, pdf, 0.0, hi, normal_quantile(p))
    }
}

pub mod chi_square4 {
    use super::*;

    pub fn pdf(x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            0.25 * x * (-0.5 * x).exp()
        }
    }

    /// Erlang(2, 1/2) closed form `1 - exp(-x/2)(1 + x/2)`.
    pub fn cdf(x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain {
                distribution: "chi-square(4)",
                value: x,
            });
        }
        if x == f64::INFINITY {
            return Ok(1.0);
        }
        let h = 0.5 * x;
        Ok((-(-h).exp_m1() - h * (-h).exp()).clamp(0.0, 1.0))
    }

    pub fn quantile(p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let f = |x: f64| cdf(x.max(0.0)).unwrap_or(0.0);
        let hi = bracket_above(p, &f, 4.0);
        invert_cdf(p, f, pdf, 0.0, hi, 4.0 * p.max(1e-3))
    }
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub(crate) fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}
