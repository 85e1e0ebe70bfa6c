//! Bayesian nonparametric estimation of bivariate copulas.
//!
//! The model is the family `A_P(u, v) = m Phi(u)' P Phi(v)` indexed by a
//! doubly stochastic matrix `P`, with a Jeffreys or uniform prior on the
//! Birkhoff polytope and a Metropolis-within-Gibbs sampler for the posterior.
//! Competing estimators (empirical/Deheuvels, Gaussian kernel, constrained
//! MLE), reference copulas and a simulation harness are included.

pub mod basis;
pub mod data;
pub mod dist;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod numerics;
pub mod polytope;
pub mod priors;
pub mod refmodels;
pub mod rng;
pub mod sampler;
pub mod validate;

pub use basis::{BasisFlavor, Copula, CopulaGrid, FnCopula, ModelCopula, PartitionBasis};
pub use data::{CountMatrix, MarginMode, Margins, PseudoSample, RawSample};
pub use error::{Error, Result};
pub use estimators::{CopulaEstimate, EstimatorKind};
pub use polytope::{AlphaCoordinates, BirkhoffDecomposition, DoublyStochasticMatrix, HilbertBasis};
pub use priors::{PriorKind, PriorSpec};
pub use refmodels::{CopulaFamily, Margin, MarginPair, ReferenceCopula};
pub use sampler::{AcceptanceRule, ChainConfig, ChainMode, ChainResult};

/// Formats `x` with 17 significant digits.
pub(crate) fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}
