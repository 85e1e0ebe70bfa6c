//! Mean integrated squared error of the estimators over replicated samples
//! from a reference copula.

use std::io::Write;

use rayon::prelude::*;

use crate::basis::Copula;
use crate::data::{pseudo_observations, MarginMode, Margins, PseudoSample, RawSample};
use crate::dist::mean_and_sd;
use crate::error::{Error, Result};
use crate::estimators::{
    bayes_estimate, deheuvels_estimate, kernel_estimate, mle_estimate, truth_estimate, Bandwidth,
    CopulaEstimate, EstimatorKind,
};
use crate::fmt_sig17;
use crate::numerics::{l2_sq_gap_values, QuadratureSpec};
use crate::priors::{PriorKind, PriorSpec};
use crate::refmodels::{CopulaFamily, MarginPair, ReferenceCopula, RHO_GRID};
use crate::rng::{stream_id, stream_rng};
use crate::sampler::{ChainConfig, ChainMode};

use super::purpose;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: CopulaFamily,
    pub rhos: Vec<f64>,
    /// Margins applied to the copula draws when `margin_mode` is `Unknown`.
    pub margins: MarginPair,
    /// `Known`: estimators see the copula draws themselves. `Unknown`: they
    /// see data on the `margins` scale and the model-based estimators use
    /// rescaled ranks.
    pub margin_mode: MarginMode,
    pub n: usize,
    pub replications: usize,
    pub m: usize,
    pub estimators: Vec<EstimatorKind>,
    /// Template for the Bayes chains. Prior, mode, seed, stream and thinning
    /// are set per replication.
    pub chain: ChainConfig,
    pub bandwidth: Bandwidth,
    pub quadrature: QuadratureSpec,
    pub seed: u64,
}

impl ExperimentConfig {
    pub const DEFAULT_REPLICATIONS: usize = 100;
    pub const DEFAULT_M: usize = 6;

    pub fn new(family: CopulaFamily, n: usize) -> Self {
        let m = Self::DEFAULT_M;
        let mut chain = ChainConfig::new(
            PriorSpec {
                kind: PriorKind::Jeffreys,
                m,
            },
            ChainMode::Posterior,
        );
        chain.thin = None;
        Self {
            family,
            rhos: RHO_GRID.to_vec(),
            margins: MarginPair::t7_chisq4(),
            margin_mode: MarginMode::Unknown,
            n,
            replications: Self::DEFAULT_REPLICATIONS,
            m,
            estimators: EstimatorKind::ALL.to_vec(),
            chain,
            bandwidth: Bandwidth::default(),
            quadrature: QuadratureSpec::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("sample size must be >= 2, got {}", self.n)));
        }
        if self.m < 2 {
            return Err(Error::InvalidOrder(self.m));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        if self.rhos.is_empty() {
            return Err(Error::InvalidConfig("empty correlation grid".into()));
        }
        if self.rhos.len() >= 1 << 24 || self.replications as u64 >= 1 << 32 {
            return Err(Error::InvalidConfig("study too large for the stream layout".into()));
        }
        for &rho in &self.rhos {
            ReferenceCopula::new(self.family, rho)?;
        }
        self.bayes_config(PriorKind::Jeffreys, 0, 0).validate()
    }

    fn bayes_config(&self, kind: PriorKind, rho_index: usize, rep: usize) -> ChainConfig {
        let tag = match kind {
            PriorKind::Jeffreys => purpose::CHAIN_JEFFREYS,
            PriorKind::Uniform => purpose::CHAIN_UNIFORM,
        };
        ChainConfig {
            prior: PriorSpec { kind, m: self.m },
            mode: ChainMode::Posterior,
            seed: self.seed,
            stream: stream_id(rho_index as u64, rep as u64, tag),
            thin: None,
            ..self.chain
        }
    }
}

/// One `(rho, estimator)` cell of the study.
#[derive(Debug, Clone, PartialEq)]
pub struct MiseRow {
    pub family: CopulaFamily,
    pub rho: f64,
    pub n: usize,
    pub estimator: EstimatorKind,
    /// Mean of `isq` (NaN when every replication failed).
    pub mise: f64,
    /// Sample sd of `isq` over `sqrt(R)`.
    pub stderr: f64,
    /// Successful replications.
    pub replications: usize,
    /// Integrated squared error of each successful replication, in order.
    pub isq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFailure {
    pub rho: f64,
    pub replication: usize,
    pub estimator: EstimatorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiseReport {
    pub rows: Vec<MiseRow>,
    pub failures: Vec<ReplicationFailure>,
}

impl MiseReport {
    pub fn row(&self, estimator: EstimatorKind, rho: f64) -> Option<&MiseRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.rho == rho)
    }

    /// `family,rho,n,estimator,mise,stderr,R`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "family,rho,n,estimator,mise,stderr,R")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.family,
                fmt_sig17(r.rho),
                r.n,
                r.estimator,
                fmt_sig17(r.mise),
                fmt_sig17(r.stderr),
                r.replications
            )?;
        }
        Ok(())
    }

    /// `rho,replication,estimator,message`; messages are quoted.
    pub fn write_failures_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rho", "replication", "estimator", "message"])?;
        for f in &self.failures {
            out.write_record([
                fmt_sig17(f.rho),
                f.replication.to_string(),
                f.estimator.to_string(),
                f.message.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Inputs {
    raw: RawSample,
    pseudo: PseudoSample,
}

fn inputs(cfg: &ExperimentConfig, model: &ReferenceCopula, rho_index: usize, rep: usize) -> Result<Inputs> {
    let mut rng = stream_rng(cfg.seed, stream_id(rho_index as u64, rep as u64, purpose::DATA));
    let draws = model.sample(cfg.n, &mut rng);
    match cfg.margin_mode {
        MarginMode::Known => {
            let raw = RawSample::from_pairs(&draws)?;
            let pseudo = PseudoSample::from_uniform(raw.x().to_vec(), raw.y().to_vec())?;
            Ok(Inputs { raw, pseudo })
        }
        MarginMode::Unknown => {
            let raw = RawSample::from_pairs(&cfg.margins.apply(&draws))?;
            let pseudo = pseudo_observations(&raw, Margins::Unknown)?;
            Ok(Inputs { raw, pseudo })
        }
    }
}

fn estimate(
    cfg: &ExperimentConfig,
    kind: EstimatorKind,
    data: &Inputs,
    model: &ReferenceCopula,
    rho_index: usize,
    rep: usize,
) -> Result<CopulaEstimate> {
    match kind {
        EstimatorKind::BayesJeffreys => {
            bayes_estimate(&data.pseudo, &cfg.bayes_config(PriorKind::Jeffreys, rho_index, rep))
        }
        EstimatorKind::BayesUniform => {
            bayes_estimate(&data.pseudo, &cfg.bayes_config(PriorKind::Uniform, rho_index, rep))
        }
        EstimatorKind::Mle => mle_estimate(&data.pseudo, cfg.m),
        EstimatorKind::Deheuvels => deheuvels_estimate(&data.raw),
        EstimatorKind::Kernel => kernel_estimate(&data.raw, cfg.bandwidth),
        EstimatorKind::Truth => Ok(truth_estimate(*model, cfg.n)),
    }
}

/// Integrated squared error of each estimator on one replication.
fn replicate(
    cfg: &ExperimentConfig,
    model: &ReferenceCopula,
    truth: &[f64],
    rho_index: usize,
    rep: usize,
) -> Vec<Result<f64, String>> {
    let nodes = cfg.quadrature.nodes();
    let data = match inputs(cfg, model, rho_index, rep) {
        Ok(d) => d,
        Err(e) => return vec![Err(e.to_string()); cfg.estimators.len()],
    };
    cfg.estimators
        .iter()
        .map(|&kind| {
            let est = estimate(cfg, kind, &data, model, rho_index, rep).map_err(|e| e.to_string())?;
            let values = est.cdf_grid(&nodes, &nodes);
            let isq = l2_sq_gap_values(&values, truth, &cfg.quadrature);
            if isq.is_finite() {
                Ok(isq)
            } else {
                Err("integrated squared error is not finite".to_string())
            }
        })
        .collect()
}

/// Runs every `(rho, replication)` pair in parallel on its own random
/// streams and reduces in `(rho, estimator, replication)` order, so the
/// report depends only on the config. Estimator failures are recorded, not
/// raised.
pub fn run_mise_study(cfg: &ExperimentConfig) -> Result<MiseReport> {
    cfg.validate()?;
    let nodes = cfg.quadrature.nodes();
    let models: Vec<ReferenceCopula> = cfg
        .rhos
        .iter()
        .map(|&rho| ReferenceCopula::new(cfg.family, rho))
        .collect::<Result<_>>()?;
    let truths: Vec<Vec<f64>> = models.par_iter().map(|c| c.cdf_grid(&nodes, &nodes)).collect();

    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|r| (0..cfg.replications).map(move |k| (r, k)))
        .collect();
    let outcomes: Vec<Vec<Result<f64, String>>> = jobs
        .par_iter()
        .map(|&(r, k)| replicate(cfg, &models[r], &truths[r], r, k))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, model) in models.iter().enumerate() {
        let block = &outcomes[r * cfg.replications..(r + 1) * cfg.replications];
        for (e, &kind) in cfg.estimators.iter().enumerate() {
            let mut isq = Vec::with_capacity(cfg.replications);
            for (k, outcome) in block.iter().enumerate() {
                match &outcome[e] {
                    Ok(v) => isq.push(*v),
                    Err(message) => failures.push(ReplicationFailure {
                        rho: model.rho(),
                        replication: k,
                        estimator: kind,
                        message: message.clone(),
                    }),
                }
            }
            let (mise, stderr) = if isq.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let (mean, sd) = mean_and_sd(&isq);
                (mean, sd / (isq.len() as f64).sqrt())
            };
            rows.push(MiseRow {
                family: cfg.family,
                rho: model.rho(),
                n: cfg.n,
                estimator: kind,
                mise,
                stderr,
                replications: isq.len(),
                isq,
            });
        }
    }
    Ok(MiseReport { rows, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(family: CopulaFamily, estimators: &[EstimatorKind]) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(family, 30);
        cfg.rhos = vec![0.0, 0.5];
        cfg.replications = 4;
        cfg.m = 3;
        cfg.estimators = estimators.to_vec();
        cfg.chain.length = 300;
        cfg.chain.burn_in = 50;
        cfg.quadrature = QuadratureSpec::new(20).unwrap();
        cfg.seed = 5;
        cfg
    }

    #[test]
    fn truth_has_zero_mise() {
        let report = run_mise_study(&small(CopulaFamily::Diamond, &[EstimatorKind::Truth])).unwrap();
        for row in &report.rows {
            assert_eq!(row.mise, 0.0);
            assert_eq!(row.stderr, 0.0);
            assert_eq!(row.replications, 4);
        }
    }

    #[test]
    fn empirical_copula_has_positive_mise() {
        let mut cfg = small(CopulaFamily::Gaussian, &[EstimatorKind::Deheuvels]);
        cfg.rhos = vec![0.0];
        let report = run_mise_study(&cfg).unwrap();
        let row = report.row(EstimatorKind::Deheuvels, 0.0).unwrap();
        assert!(row.mise > 0.0 && row.stderr > 0.0);
        assert!(row.isq.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn layout_and_standard_error() {
        let est = EstimatorKind::ALL;
        let report = run_mise_study(&small(CopulaFamily::Cross, &est)).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        assert_eq!(report.rows.len(), 2 * est.len());
        for (i, row) in report.rows.iter().enumerate() {
            assert_eq!(row.estimator, est[i % est.len()]);
            assert!(row.mise >= 0.0);
            let (mean, sd) = mean_and_sd(&row.isq);
            assert_eq!(row.mise, mean);
            assert!((row.stderr - sd / 2.0).abs() <= 1e-18);
        }
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "family,rho,n,estimator,mise,stderr,R");
        assert_eq!(lines.len(), 1 + report.rows.len());
        assert!(lines[1].starts_with("cross,0.0000000000000000e0,30,bayes_jeffreys,"));
        assert!(lines[1].ends_with(",4"));
    }

    #[test]
    fn deterministic_across_runs() {
        let cfg = small(CopulaFamily::Gaussian, &[EstimatorKind::BayesUniform, EstimatorKind::Mle]);
        assert_eq!(run_mise_study(&cfg).unwrap(), run_mise_study(&cfg).unwrap());
    }

    #[test]
    fn replications_are_prefix_stable() {
        // Each replication has its own streams, so adding replications leaves
        // the earlier ones unchanged.
        let mut cfg = small(CopulaFamily::Gaussian, &[EstimatorKind::BayesJeffreys]);
        let a = run_mise_study(&cfg).unwrap();
        cfg.replications = 6;
        let b = run_mise_study(&cfg).unwrap();
        assert_eq!(a.rows[0].isq[..], b.rows[0].isq[..4]);
    }

    #[test]
    fn rank_estimators_ignore_margins() {
        let kinds = [
            EstimatorKind::BayesJeffreys,
            EstimatorKind::Mle,
            EstimatorKind::Deheuvels,
            EstimatorKind::Kernel,
        ];
        let mut cfg = small(CopulaFamily::Cross, &kinds);
        let plain = {
            cfg.margins = MarginPair::uniform();
            run_mise_study(&cfg).unwrap()
        };
        cfg.margins = MarginPair::t7_chisq4();
        let skewed = run_mise_study(&cfg).unwrap();
        for (a, b) in plain.rows.iter().zip(&skewed.rows) {
            if a.estimator == EstimatorKind::Kernel {
                assert_ne!(a.isq, b.isq);
            } else {
                assert_eq!(a.isq, b.isq, "{}", a.estimator);
            }
        }
        cfg.margin_mode = MarginMode::Known;
        let known = run_mise_study(&cfg).unwrap();
        for (a, b) in known.rows.iter().zip(&skewed.rows) {
            if a.estimator == EstimatorKind::Deheuvels {
                assert_eq!(a.isq, b.isq);
            }
        }
    }

    #[test]
    fn failures_are_recorded_not_raised() {
        let mut cfg = small(CopulaFamily::Gaussian, &[EstimatorKind::Kernel, EstimatorKind::Truth]);
        cfg.bandwidth = Bandwidth::Fixed { hx: -1.0, hy: 1.0 };
        let report = run_mise_study(&cfg).unwrap();
        assert_eq!(report.failures.len(), 2 * 4);
        let kernel = report.row(EstimatorKind::Kernel, 0.5).unwrap();
        assert_eq!(kernel.replications, 0);
        assert!(kernel.mise.is_nan());
        assert_eq!(report.row(EstimatorKind::Truth, 0.5).unwrap().replications, 4);
        let mut out = Vec::new();
        report.write_failures_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.contains("kernel"));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(CopulaFamily::Gaussian, &[EstimatorKind::Mle]);
        cfg.replications = 0;
        assert!(run_mise_study(&cfg).is_err());
        let mut cfg = small(CopulaFamily::Gaussian, &[]);
        assert!(run_mise_study(&cfg).is_err());
        cfg.estimators = vec![EstimatorKind::Mle];
        cfg.rhos = vec![1.5];
        assert!(run_mise_study(&cfg).is_err());
    }
}
