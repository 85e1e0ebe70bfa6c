//! Metropolis-within-Gibbs on the Birkhoff polytope.
//!
//! A sweep visits the directions `v_i v_j'`, `i, j = 1..m-1`, in row-major
//! order. For each one it finds the chord `Gamma_ij` of admissible moves
//! through the current state, proposes `gamma ~ U(Gamma_ij)` and accepts
//! with probability `min(1, pi(P') L(P') / (pi(P) L(P)))`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;

use crate::basis::{BasisFlavor, PartitionBasis};
use crate::data::{bin_counts, CountMatrix, PseudoSample};
use crate::error::{Error, Result};
use crate::fmt_sig17;
use crate::polytope::{AlphaCoordinates, DoublyStochasticMatrix, HilbertBasis, FEASIBILITY_TOL};
use crate::priors::{log_density_raw, PriorKind, PriorSpec};
use crate::rng::{stream_rng, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChainMode {
    /// Target `pi(P) L(P | data)`.
    Posterior,
    /// Target `pi(P)`.
    PriorOnly,
}

/// Which Metropolis ratio to use for the uniform-on-chord proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AcceptanceRule {
    /// `pi' L' / (pi L)`.
    #[default]
    AsPrinted,
    /// The printed ratio times `|Gamma(current)| / |Gamma(proposed)|`.
    ///
    /// Both states lie on the same chord, so the two lengths agree up to
    /// rounding and the rules produce the same chain in exact arithmetic.
    SupportCorrected,
}

impl std::str::FromStr for AcceptanceRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "corrected" => Ok(Self::SupportCorrected),
            other => Err(Error::Parameter(format!("unknown acceptance rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub prior: PriorSpec,
    pub basis: BasisFlavor,
    /// Number of sweeps `T`.
    pub length: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub stream: u64,
    /// Keep every `thin`-th post-burn-in state; `None` keeps none.
    pub thin: Option<usize>,
    pub mode: ChainMode,
    pub acceptance: AcceptanceRule,
}

impl ChainConfig {
    pub const DEFAULT_LENGTH: usize = 10_000;
    pub const DEFAULT_BURN_IN: usize = 1_000;
    pub const DEFAULT_THIN: usize = 10;

    pub fn new(prior: PriorSpec, mode: ChainMode) -> Self {
        Self {
            prior,
            basis: BasisFlavor::Indicator,
            length: Self::DEFAULT_LENGTH,
            burn_in: Self::DEFAULT_BURN_IN,
            seed: 0,
            stream: 0,
            thin: Some(Self::DEFAULT_THIN),
            mode,
            acceptance: AcceptanceRule::AsPrinted,
        }
    }

    pub fn m(&self) -> usize {
        self.prior.m
    }

    pub fn validate(&self) -> Result<()> {
        if self.prior.m < 2 {
            return Err(Error::InvalidOrder(self.prior.m));
        }
        if self.length == 0 {
            return Err(Error::InvalidConfig("chain length must be >= 1".into()));
        }
        if self.burn_in >= self.length {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} must be smaller than the chain length {}",
                self.burn_in, self.length
            )));
        }
        if self.thin == Some(0) {
            return Err(Error::InvalidConfig("thinning interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Output of [`run_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub config: ChainConfig,
    /// Average of the states after burn-in.
    pub mean_p: DoublyStochasticMatrix,
    /// `(sweep, state)` for every `thin`-th retained sweep.
    pub states: Vec<(usize, DoublyStochasticMatrix)>,
    /// Acceptance rate of direction `(i, j)` over all sweeps.
    pub acceptance: DMatrix<f64>,
    pub radius_trace: Vec<f64>,
    pub log_posterior_trace: Vec<f64>,
    pub accept_rate_trace: Vec<f64>,
    pub final_state: AlphaCoordinates,
}

impl ChainResult {
    /// `sweep,radius,log_posterior,accept_rate`, sweeps numbered from 1.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sweep,radius,log_posterior,accept_rate")?;
        for (k, ((r, lp), a)) in self
            .radius_trace
            .iter()
            .zip(&self.log_posterior_trace)
            .zip(&self.accept_rate_trace)
            .enumerate()
        {
            writeln!(w, "{},{},{},{}", k + 1, fmt_sig17(*r), fmt_sig17(*lp), fmt_sig17(*a))?;
        }
        Ok(())
    }
}

/// What an observer sees after each sweep.
#[derive(Debug)]
pub struct SweepRecord<'a> {
    /// One-based sweep index.
    pub sweep: usize,
    pub retained: bool,
    pub matrix: &'a DMatrix<f64>,
    pub radius: f64,
    pub log_posterior: f64,
    pub accept_rate: f64,
}

enum Likelihood {
    None,
    /// Indicator basis: `log L = sum N_ij log(m P_ij)`.
    Counts(Vec<f64>),
    /// Bernstein basis: `log L = sum_k log a_P(u_k, v_k)`. `proj_u[k][i]` is
    /// `phi(u_k) . v_i` and `dens[k]` the current density at point `k`.
    Points {
        phi_u: Vec<Vec<f64>>,
        phi_v: Vec<Vec<f64>>,
        proj_u: Vec<Vec<f64>>,
        proj_v: Vec<Vec<f64>>,
        dens: Vec<f64>,
        scratch: Vec<f64>,
    },
}

fn log_lik_counts(counts: &[f64], p: &DMatrix<f64>) -> f64 {
    let m = p.nrows();
    let mf = m as f64;
    let mut acc = 0.0;
    for r in 0..m {
        for c in 0..m {
            let n = counts[r * m + c];
            if n > 0.0 {
                let x = p[(r, c)];
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                acc += n * (mf * x).ln();
            }
        }
    }
    acc
}

fn sum_log(dens: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &d in dens {
        if d <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += d.ln();
    }
    acc
}

/// `sum_k log a_P(u_k, v_k)` evaluated pointwise.
pub fn log_likelihood(p: &DoublyStochasticMatrix, basis: &PartitionBasis, ps: &PseudoSample) -> f64 {
    let mut acc = 0.0;
    for (u, v) in ps.points() {
        let d = crate::basis::copula_pdf(p, basis, u, v);
        if d <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += d.ln();
    }
    acc
}

/// `sum_ij N_ij log(m P_ij)`, with `0 log 0 = 0`.
pub fn log_likelihood_counts(p: &DoublyStochasticMatrix, counts: &CountMatrix) -> f64 {
    let c: Vec<f64> = counts.as_slice().iter().map(|&k| k as f64).collect();
    log_lik_counts(&c, p.as_matrix())
}

/// Chord of admissible steps along `v_i v_j'` through `p`, as `[lo, hi]`.
fn chord(p: &DMatrix<f64>, g: &DMatrix<f64>, i: usize, j: usize) -> (f64, f64) {
    let m = p.nrows();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for r in 0..m {
        let gr = g[(r, i)];
        if gr == 0.0 {
            continue;
        }
        for c in 0..m {
            let coef = gr * g[(c, j)];
            let x = p[(r, c)].max(0.0);
            if coef > 0.0 {
                lo = lo.max(-x / coef);
            } else if coef < 0.0 {
                hi = hi.min(-x / coef);
            }
        }
    }
    (lo.min(0.0), hi.max(0.0))
}

/// The largest interval `[lo, hi]` such that moving `alpha_ij` by any
/// `gamma` in it keeps the matrix inside the polytope.
pub fn gamma_interval(coords: &AlphaCoordinates, i: usize, j: usize) -> Result<(f64, f64)> {
    let m = coords.m();
    for idx in [i, j] {
        if idx + 1 >= m {
            return Err(Error::IndexOutOfRange { index: idx, m: m - 1 });
        }
    }
    let basis = HilbertBasis::new(m)?;
    let p = basis.from_alpha(coords)?;
    Ok(chord(p.as_matrix(), basis.g(), i, j))
}

struct Chain {
    m: usize,
    g: DMatrix<f64>,
    alpha: AlphaCoordinates,
    p: DMatrix<f64>,
    prior: PriorKind,
    lik: Likelihood,
    acceptance: AcceptanceRule,
    log_prior: f64,
    log_lik: f64,
    proposal: DMatrix<f64>,
}

impl Chain {
    fn new(data: Option<&PseudoSample>, config: &ChainConfig, start: AlphaCoordinates) -> Result<Self> {
        config.validate()?;
        let m = config.m();
        if start.m() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: start.m(),
            });
        }
        let basis = HilbertBasis::new(m)?;
        let p = basis.from_alpha(&start)?.into_matrix();
        let g = basis.g().clone();
        let lik = match (config.mode, data) {
            (ChainMode::PriorOnly, None) => Likelihood::None,
            (ChainMode::PriorOnly, Some(_)) => {
                return Err(Error::InvalidConfig("prior-only chains take no data".into()))
            }
            (ChainMode::Posterior, None) => return Err(Error::MissingData),
            (ChainMode::Posterior, Some(ps)) if ps.is_empty() => return Err(Error::MissingData),
            (ChainMode::Posterior, Some(ps)) => match config.basis {
                BasisFlavor::Indicator => Likelihood::Counts(
                    bin_counts(ps, m)?.as_slice().iter().map(|&k| k as f64).collect(),
                ),
                BasisFlavor::Bernstein => {
                    let pb = PartitionBasis::bernstein(m)?;
                    let project = |phi: &Vec<f64>| -> Vec<f64> {
                        (0..m - 1)
                            .map(|i| (0..m).map(|r| phi[r] * g[(r, i)]).sum())
                            .collect()
                    };
                    let phi_u: Vec<Vec<f64>> = ps.u().iter().map(|&u| pb.phi_all(u)).collect();
                    let phi_v: Vec<Vec<f64>> = ps.v().iter().map(|&v| pb.phi_all(v)).collect();
                    let proj_u = phi_u.iter().map(project).collect();
                    let proj_v = phi_v.iter().map(project).collect();
                    let n = phi_u.len();
                    Likelihood::Points {
                        phi_u,
                        phi_v,
                        proj_u,
                        proj_v,
                        dens: vec![0.0; n],
                        scratch: vec![0.0; n],
                    }
                }
            },
        };
        let mut chain = Self {
            m,
            g,
            alpha: start,
            p: p.clone(),
            prior: config.prior.kind,
            lik,
            acceptance: config.acceptance,
            log_prior: 0.0,
            log_lik: 0.0,
            proposal: p,
        };
        chain.refresh();
        if !(chain.log_prior + chain.log_lik).is_finite() {
            return Err(Error::InvalidConfig(
                "initial state has zero target density".into(),
            ));
        }
        Ok(chain)
    }

    /// Rebuilds `P` from `alpha` and recomputes cached densities.
    fn refresh(&mut self) {
        let m = self.m;
        let mut p = &self.g * self.alpha.as_matrix() * self.g.transpose();
        p.add_scalar_mut(1.0 / m as f64);
        p.apply(|x| {
            if *x < 0.0 && *x >= -FEASIBILITY_TOL {
                *x = 0.0;
            }
        });
        self.p = p;
        self.log_prior = log_density_raw(self.prior, &self.p);
        self.log_lik = match &mut self.lik {
            Likelihood::None => 0.0,
            Likelihood::Counts(n) => log_lik_counts(n, &self.p),
            Likelihood::Points {
                phi_u, phi_v, dens, ..
            } => {
                let mf = m as f64;
                for (k, d) in dens.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for r in 0..m {
                        let row: f64 = (0..m).map(|c| self.p[(r, c)] * phi_v[k][c]).sum();
                        acc += phi_u[k][r] * row;
                    }
                    *d = mf * acc;
                }
                sum_log(dens)
            }
        };
    }

    fn log_posterior(&self) -> f64 {
        self.log_prior + self.log_lik
    }

    fn radius(&self) -> f64 {
        self.alpha.as_matrix().norm()
    }

    /// One full sweep; returns the number of accepted moves and records
    /// per-direction acceptances in `accepted`.
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R, accepted: &mut DMatrix<f64>) -> usize {
        let m = self.m;
        let mut total = 0;
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                let (lo, hi) = chord(&self.p, &self.g, i, j);
                let gamma = lo + (hi - lo) * rng.random::<f64>();
                let log_u = rng.random::<f64>().ln();

                // Materialize the proposal.
                self.proposal.copy_from(&self.p);
                for r in 0..m {
                    let gr = self.g[(r, i)];
                    if gr == 0.0 {
                        continue;
                    }
                    for c in 0..m {
                        let x = self.proposal[(r, c)] + gamma * gr * self.g[(c, j)];
                        self.proposal[(r, c)] = if x < 0.0 && x >= -FEASIBILITY_TOL { 0.0 } else { x };
                    }
                }
                let new_prior = log_density_raw(self.prior, &self.proposal);
                if new_prior == f64::NEG_INFINITY {
                    continue;
                }
                let new_lik = match &mut self.lik {
                    Likelihood::None => 0.0,
                    Likelihood::Counts(n) => log_lik_counts(n, &self.proposal),
                    Likelihood::Points {
                        proj_u,
                        proj_v,
                        dens,
                        scratch,
                        ..
                    } => {
                        let step = gamma * m as f64;
                        for k in 0..dens.len() {
                            scratch[k] = dens[k] + step * proj_u[k][i] * proj_v[k][j];
                        }
                        sum_log(scratch)
                    }
                };
                if new_lik == f64::NEG_INFINITY {
                    continue;
                }
                let mut log_ratio = new_prior + new_lik - self.log_posterior();
                if self.acceptance == AcceptanceRule::SupportCorrected {
                    let (plo, phi) = chord(&self.proposal, &self.g, i, j);
                    log_ratio += (hi - lo).ln() - (phi - plo).ln();
                }
                if log_u < log_ratio {
                    std::mem::swap(&mut self.p, &mut self.proposal);
                    self.alpha.add(i, j, gamma);
                    self.log_prior = new_prior;
                    self.log_lik = new_lik;
                    if let Likelihood::Points { dens, scratch, .. } = &mut self.lik {
                        std::mem::swap(dens, scratch);
                    }
                    accepted[(i, j)] += 1.0;
                    total += 1;
                }
            }
        }
        self.refresh();
        total
    }
}

/// Monte Carlo standard error of the mean of a correlated series by
/// non-overlapping batch means. Trailing draws that do not fill a batch are
/// dropped. Needs at least two batches of at least one draw.
pub fn batch_means_se(xs: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || xs.len() < batches {
        return Err(Error::Parameter(format!(
            "{} draws cannot form {batches} batches",
            xs.len()
        )));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let (_, sd) = crate::dist::mean_and_sd(&means);
    Ok(sd / (batches as f64).sqrt())
}

/// One sweep from `state`. Deterministic given the RNG state.
pub fn sweep<R: Rng + ?Sized>(
    state: &AlphaCoordinates,
    data: Option<&PseudoSample>,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<AlphaCoordinates> {
    let mut chain = Chain::new(data, config, state.clone())?;
    let mut accepted = DMatrix::zeros(config.m() - 1, config.m() - 1);
    chain.sweep(rng, &mut accepted);
    Ok(chain.alpha)
}

pub fn run_chain(data: Option<&PseudoSample>, config: &ChainConfig) -> Result<ChainResult> {
    run_chain_with(data, config, |_| {})
}

/// [`run_chain`] with a callback after every sweep. The chain starts at the
/// polytope center and uses the stream `(config.seed, config.stream)`.
pub fn run_chain_with<F: FnMut(&SweepRecord<'_>)>(
    data: Option<&PseudoSample>,
    config: &ChainConfig,
    mut observer: F,
) -> Result<ChainResult> {
    config.validate()?;
    let m = config.m();
    let mut chain = Chain::new(data, config, AlphaCoordinates::zeros(m)?)?;
    let mut rng: StreamRng = stream_rng(config.seed, config.stream);
    let dirs = ((m - 1) * (m - 1)) as f64;

    let mut accepted = DMatrix::zeros(m - 1, m - 1);
    let mut sum = DMatrix::<f64>::zeros(m, m);
    let mut states = Vec::new();
    let mut radius_trace = Vec::with_capacity(config.length);
    let mut log_posterior_trace = Vec::with_capacity(config.length);
    let mut accept_rate_trace = Vec::with_capacity(config.length);

    for sweep in 1..=config.length {
        let acc = chain.sweep(&mut rng, &mut accepted);
        let retained = sweep > config.burn_in;
        let radius = chain.radius();
        let log_posterior = chain.log_posterior();
        let accept_rate = acc as f64 / dirs;
        radius_trace.push(radius);
        log_posterior_trace.push(log_posterior);
        accept_rate_trace.push(accept_rate);
        if retained {
            sum += &chain.p;
            if let Some(t) = config.thin {
                if (sweep - config.burn_in - 1) % t == 0 {
                    states.push((sweep, DoublyStochasticMatrix::from_trusted(chain.p.clone())));
                }
            }
        }
        observer(&SweepRecord {
            sweep,
            retained,
            matrix: &chain.p,
            radius,
            log_posterior,
            accept_rate,
        });
    }

    let kept = (config.length - config.burn_in) as f64;
    let mean = DoublyStochasticMatrix::with_sum_tolerance(sum / kept, 1e-10)?;
    Ok(ChainResult {
        config: *config,
        mean_p: mean,
        states,
        acceptance: accepted / config.length as f64,
        radius_trace,
        log_posterior_trace,
        accept_rate_trace,
        final_state: chain.alpha,
    })
}
