//! Observed samples, their transforms to the unit square, and bin counts.

use crate::basis::indicator_bin;
use crate::error::{Error, Result};

/// `n` observed pairs on their original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RawSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if let Some(bad) = x.iter().chain(&y).find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite observation {bad}")));
        }
        Ok(Self { x, y })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Applies `fx` and `fy` coordinatewise.
    pub fn map(&self, fx: impl Fn(f64) -> f64, fy: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.x.iter().map(|&v| fx(v)).collect(),
            self.y.iter().map(|&v| fy(v)).collect(),
        )
    }
}

/// One-based ranks. Ties are broken by position: the earlier observation
/// gets the smaller rank.
pub fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; values.len()];
    for (r, &k) in order.iter().enumerate() {
        out[k] = r + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginMode {
    Known,
    Unknown,
}

impl std::str::FromStr for MarginMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known" => Ok(Self::Known),
            "unknown" => Ok(Self::Unknown),
            other => Err(Error::Parameter(format!("unknown margin mode '{other}'"))),
        }
    }
}

type Cdf<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// How to move raw data to the unit square.
#[derive(Clone, Copy)]
pub enum Margins<'a> {
    /// Probability integral transform with known marginal CDFs.
    Known(Cdf<'a>, Cdf<'a>),
    /// Rescaled ranks `rank / (n + 1)`.
    Unknown,
}

/// Points in `[0, 1]^2` ready for the copula model.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample {
    u: Vec<f64>,
    v: Vec<f64>,
    mode: MarginMode,
}

impl PseudoSample {
    /// Wraps points already on the unit square (treated as known margins).
    pub fn from_uniform(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: v.len(),
            });
        }
        check_unit(&u)?;
        check_unit(&v)?;
        Ok(Self {
            u,
            v,
            mode: MarginMode::Known,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn mode(&self) -> MarginMode {
        self.mode
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.u.iter().copied().zip(self.v.iter().copied())
    }
}

fn check_unit(values: &[f64]) -> Result<()> {
    match values
        .iter()
        .position(|&t| !(0.0..=1.0).contains(&t))
    {
        Some(index) => Err(Error::InvalidMargin {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

pub fn pseudo_observations(raw: &RawSample, margins: Margins<'_>) -> Result<PseudoSample> {
    if raw.is_empty() {
        return Err(Error::MissingData);
    }
    match margins {
        Margins::Known(fx, fy) => {
            let u: Vec<f64> = raw.x.iter().map(|&t| fx(t)).collect();
            let v: Vec<f64> = raw.y.iter().map(|&t| fy(t)).collect();
            check_unit(&u)?;
            check_unit(&v)?;
            Ok(PseudoSample {
                u,
                v,
                mode: MarginMode::Known,
            })
        }
        Margins::Unknown => {
            let denom = (raw.len() + 1) as f64;
            let to_unit = |r: Vec<usize>| r.into_iter().map(|k| k as f64 / denom).collect();
            Ok(PseudoSample {
                u: to_unit(ranks(&raw.x)),
                v: to_unit(ranks(&raw.y)),
                mode: MarginMode::Unknown,
            })
        }
    }
}

/// `N_ij = #{k : u_k in cell i, v_k in cell j}` under the indicator cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    m: usize,
    counts: Vec<u64>,
}

impl CountMatrix {
    pub fn from_rows(rows: &[&[u64]]) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        let mut counts = Vec::with_capacity(m * m);
        for r in rows {
            if r.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: r.len(),
                });
            }
            counts.extend_from_slice(r);
        }
        Ok(Self { m, counts })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.m + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Row-major counts.
    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }
}

pub fn bin_counts(ps: &PseudoSample, m: usize) -> Result<CountMatrix> {
    if m < 2 {
        return Err(Error::InvalidOrder(m));
    }
    let mut counts = vec![0u64; m * m];
    for (u, v) in ps.points() {
        counts[indicator_bin(m, u) * m + indicator_bin(m, v)] += 1;
    }
    Ok(CountMatrix { m, counts })
}
