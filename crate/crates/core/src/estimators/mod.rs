//! Copula estimators: Bayes posterior mean, constrained MLE, the empirical
//! (Deheuvels) copula and a Gaussian-kernel smoother.

pub mod kernel;
pub mod mle;

use crate::basis::{BasisFlavor, Copula, CopulaGrid, ModelCopula, PartitionBasis};
use crate::data::{ranks, PseudoSample, RawSample};
use crate::error::{Error, Result};
use crate::polytope::DoublyStochasticMatrix;
use crate::priors::PriorKind;
use crate::refmodels::ReferenceCopula;
use crate::sampler::{run_chain, ChainConfig, ChainMode};

pub use crate::data::{bin_counts, pseudo_observations};
pub use kernel::{Bandwidth, KernelCopula};
pub use mle::{mle_matrix, MleOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    BayesJeffreys,
    BayesUniform,
    Mle,
    Deheuvels,
    Kernel,
    /// Returns the data-generating copula; only meaningful in simulations.
    #[doc(hidden)]
    Truth,
}

impl EstimatorKind {
    pub const ALL: [Self; 5] = [
        Self::BayesJeffreys,
        Self::BayesUniform,
        Self::Mle,
        Self::Deheuvels,
        Self::Kernel,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::BayesJeffreys => "bayes_jeffreys",
            Self::BayesUniform => "bayes_uniform",
            Self::Mle => "mle",
            Self::Deheuvels => "deheuvels",
            Self::Kernel => "kernel",
            Self::Truth => "truth",
        }
    }

    pub fn prior(&self) -> Option<PriorKind> {
        match self {
            Self::BayesJeffreys => Some(PriorKind::Jeffreys),
            Self::BayesUniform => Some(PriorKind::Uniform),
            _ => None,
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes_jeffreys" => Ok(Self::BayesJeffreys),
            "bayes_uniform" => Ok(Self::BayesUniform),
            "mle" => Ok(Self::Mle),
            "deheuvels" => Ok(Self::Deheuvels),
            "kernel" => Ok(Self::Kernel),
            "truth" => Ok(Self::Truth),
            other => Err(Error::Parameter(format!("unknown estimator '{other}'"))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimateModel {
    Matrix(ModelCopula),
    Kernel(KernelCopula),
    Reference(ReferenceCopula),
}

/// Settings an estimate was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Provenance {
    pub n: usize,
    pub m: Option<usize>,
    pub chain: Option<ChainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopulaEstimate {
    pub kind: EstimatorKind,
    pub model: EstimateModel,
    pub provenance: Provenance,
}

impl CopulaEstimate {
    /// The matrix `P` for estimators in the `A_P` family.
    pub fn matrix(&self) -> Option<&DoublyStochasticMatrix> {
        match &self.model {
            EstimateModel::Matrix(mc) => Some(mc.matrix()),
            _ => None,
        }
    }

    pub fn grid(&self, g: usize) -> Result<CopulaGrid> {
        CopulaGrid::from_copula(self, g)
    }
}

impl Copula for CopulaEstimate {
    fn cdf(&self, u: f64, v: f64) -> f64 {
        match &self.model {
            EstimateModel::Matrix(c) => c.cdf(u, v),
            EstimateModel::Kernel(c) => c.cdf(u, v),
            EstimateModel::Reference(c) => c.cdf(u, v),
        }
    }

    fn cdf_grid(&self, us: &[f64], vs: &[f64]) -> Vec<f64> {
        match &self.model {
            EstimateModel::Matrix(c) => c.cdf_grid(us, vs),
            EstimateModel::Kernel(c) => c.cdf_grid(us, vs),
            EstimateModel::Reference(c) => c.cdf_grid(us, vs),
        }
    }
}

/// Posterior mean `A_{E[P | data]}`; linearity of `P -> A_P` makes this the
/// posterior mean of the copula itself.
pub fn bayes_estimate(ps: &PseudoSample, config: &ChainConfig) -> Result<CopulaEstimate> {
    if config.mode != ChainMode::Posterior {
        return Err(Error::InvalidConfig(
            "Bayes estimation needs a posterior-mode chain".into(),
        ));
    }
    let chain = run_chain(Some(ps), config)?;
    let kind = match config.prior.kind {
        PriorKind::Jeffreys => EstimatorKind::BayesJeffreys,
        PriorKind::Uniform => EstimatorKind::BayesUniform,
    };
    let basis = PartitionBasis::new(config.m(), config.basis)?;
    Ok(CopulaEstimate {
        kind,
        model: EstimateModel::Matrix(ModelCopula::new(chain.mean_p, basis)?),
        provenance: Provenance {
            n: ps.len(),
            m: Some(config.m()),
            chain: Some(*config),
        },
    })
}

/// Indicator-basis MLE at order `m`.
pub fn mle_estimate(ps: &PseudoSample, m: usize) -> Result<CopulaEstimate> {
    if ps.is_empty() {
        return Err(Error::MissingData);
    }
    let p = mle_matrix(&bin_counts(ps, m)?)?;
    Ok(CopulaEstimate {
        kind: EstimatorKind::Mle,
        model: EstimateModel::Matrix(ModelCopula::new(p, PartitionBasis::indicator(m)?)?),
        provenance: Provenance {
            n: ps.len(),
            m: Some(m),
            chain: None,
        },
    })
}

/// The empirical copula as `A_P` with the indicator basis of order `n` and
/// `P` the permutation matrix of the rank pairs.
pub fn deheuvels_estimate(raw: &RawSample) -> Result<CopulaEstimate> {
    let n = raw.len();
    if n == 0 {
        return Err(Error::MissingData);
    }
    // With a single observation the empirical copula is `uv`, which is the
    // center of any order.
    let p = if n == 1 {
        DoublyStochasticMatrix::center(2)?
    } else {
        let rx = ranks(raw.x());
        let ry = ranks(raw.y());
        let mut perm = vec![0; n];
        for (a, b) in rx.iter().zip(&ry) {
            perm[a - 1] = b - 1;
        }
        DoublyStochasticMatrix::permutation(&perm)?
    };
    let m = p.m();
    Ok(CopulaEstimate {
        kind: EstimatorKind::Deheuvels,
        model: EstimateModel::Matrix(ModelCopula::new(p, PartitionBasis::new(m, BasisFlavor::Indicator)?)?),
        provenance: Provenance {
            n,
            m: Some(m),
            chain: None,
        },
    })
}

pub fn kernel_estimate(raw: &RawSample, bandwidth: Bandwidth) -> Result<CopulaEstimate> {
    Ok(CopulaEstimate {
        kind: EstimatorKind::Kernel,
        model: EstimateModel::Kernel(KernelCopula::new(raw, bandwidth)?),
        provenance: Provenance {
            n: raw.len(),
            m: None,
            chain: None,
        },
    })
}

#[doc(hidden)]
pub fn truth_estimate(reference: ReferenceCopula, n: usize) -> CopulaEstimate {
    CopulaEstimate {
        kind: EstimatorKind::Truth,
        model: EstimateModel::Reference(reference),
        provenance: Provenance {
            n,
            m: None,
            chain: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Margins;
    use crate::priors::PriorSpec;
    use crate::rng::stream_rng;

    fn empirical(raw: &RawSample, i: usize, j: usize) -> f64 {
        let n = raw.len();
        let rx = ranks(raw.x());
        let ry = ranks(raw.y());
        let hits = (0..n).filter(|&k| rx[k] <= i && ry[k] <= j).count();
        hits as f64 / n as f64
    }

    #[test]
    fn deheuvels_constraint_on_random_samples() {
        let model = ReferenceCopula::cross(0.5).unwrap();
        let mut rng = stream_rng(21, 0);
        for n in [5, 30] {
            let raw = RawSample::from_pairs(&model.sample(n, &mut rng)).unwrap();
            let est = deheuvels_estimate(&raw).unwrap();
            for i in 1..=n {
                for j in 1..=n {
                    let got = est.cdf(i as f64 / n as f64, j as f64 / n as f64);
                    assert!((got - empirical(&raw, i, j)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn deheuvels_extremes() {
        let n = 7;
        let x: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let co = RawSample::new(x.clone(), x.iter().map(|t| 2.0 * t).collect()).unwrap();
        let anti = RawSample::new(x.clone(), x.iter().map(|t| -t).collect()).unwrap();
        let a = deheuvels_estimate(&co).unwrap();
        let b = deheuvels_estimate(&anti).unwrap();
        for i in 0..=n {
            for j in 0..=n {
                let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                assert!((a.cdf(u, v) - i.min(j) as f64 / n as f64).abs() <= 1e-12);
                let lower = ((i + j) as f64 / n as f64 - 1.0).max(0.0);
                assert!((b.cdf(u, v) - lower).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn deheuvels_single_point() {
        let raw = RawSample::new(vec![1.0], vec![2.0]).unwrap();
        let est = deheuvels_estimate(&raw).unwrap();
        assert!((est.cdf(0.3, 0.6) - 0.18).abs() < 1e-15);
    }

    #[test]
    fn bayes_on_diagonal_data_matches_conjugate_mean() {
        // m = 2, all observations on the diagonal cells: the posterior of p
        // is Beta(n + 1/2, 1/2) under the Jeffreys prior.
        let n = 20;
        let u: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { 0.2 } else { 0.8 }).collect();
        let ps = PseudoSample::from_uniform(u.clone(), u).unwrap();
        let mut cfg = ChainConfig::new(PriorSpec::jeffreys(2).unwrap(), ChainMode::Posterior);
        cfg.length = 40_000;
        cfg.burn_in = 1_000;
        cfg.thin = Some(1);
        cfg.seed = 17;
        let chain = run_chain(Some(&ps), &cfg).unwrap();
        let draws: Vec<f64> = chain.states.iter().map(|(_, p)| p.get(0, 0)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        // For m = 2 the chord is the whole segment, so the sampler is an
        // independence sampler whose weights are unbounded near p = 1; it
        // sticks there, and only batch means give an honest error.
        let se = crate::sampler::batch_means_se(&draws, 40).unwrap();
        let expect = (n as f64 + 0.5) / (n as f64 + 1.0);
        assert!((mean - expect).abs() <= 3.0 * se, "{mean} vs {expect} (se {se})");
        let est = bayes_estimate(&ps, &cfg).unwrap();
        assert!((est.matrix().unwrap().get(0, 0) - mean).abs() < 1e-12);
    }

    #[test]
    fn estimates_are_grid_valid() {
        let model = ReferenceCopula::diamond(0.6).unwrap();
        let raw = RawSample::from_pairs(&model.sample(30, &mut stream_rng(8, 0))).unwrap();
        let ps = pseudo_observations(&raw, Margins::Unknown).unwrap();
        let mut cfg = ChainConfig::new(PriorSpec::uniform(4).unwrap(), ChainMode::Posterior);
        cfg.length = 500;
        cfg.burn_in = 100;
        let ests = [
            bayes_estimate(&ps, &cfg).unwrap(),
            mle_estimate(&ps, 4).unwrap(),
            deheuvels_estimate(&raw).unwrap(),
            kernel_estimate(&raw, Bandwidth::default()).unwrap(),
        ];
        for e in &ests {
            let d = e.grid(60).unwrap().defects();
            assert!(d.is_valid(1e-8, 1e-10), "{}: {d:?}", e.kind);
        }
    }

    #[test]
    fn rank_estimators_ignore_monotone_maps() {
        let model = ReferenceCopula::gaussian(0.4).unwrap();
        let raw = RawSample::from_pairs(&model.sample(25, &mut stream_rng(9, 0))).unwrap();
        let moved = raw.map(|x| x.powi(3) + 1.0, f64::exp).unwrap();
        let a = pseudo_observations(&raw, Margins::Unknown).unwrap();
        let b = pseudo_observations(&moved, Margins::Unknown).unwrap();
        assert_eq!(mle_estimate(&a, 4).unwrap(), mle_estimate(&b, 4).unwrap());
        assert_eq!(deheuvels_estimate(&raw).unwrap(), deheuvels_estimate(&moved).unwrap());
        let mut cfg = ChainConfig::new(PriorSpec::jeffreys(3).unwrap(), ChainMode::Posterior);
        cfg.length = 300;
        cfg.burn_in = 10;
        assert_eq!(bayes_estimate(&a, &cfg).unwrap(), bayes_estimate(&b, &cfg).unwrap());
    }
}
