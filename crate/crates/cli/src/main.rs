//! `bcop`: command-line front end for birkhoff-copula.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 when the run fails.
//! `BCOP_WORKERS` sets the number of worker threads for parallel chains and
//! replications.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use birkhoff_copula::estimators::{
    bayes_estimate, deheuvels_estimate, kernel_estimate, mle_estimate, pseudo_observations,
    Bandwidth,
};
use birkhoff_copula::experiments::{
    ball_probability, radius_density, read_sample_file, run_mise_study, ExperimentConfig,
};
use birkhoff_copula::numerics::QuadratureSpec;
use birkhoff_copula::refmodels::{write_samples_csv, RHO_GRID};
use birkhoff_copula::rng::stream_rng;
use birkhoff_copula::sampler::run_chain;
use birkhoff_copula::validate::{self, Scale};
use birkhoff_copula::{
    AcceptanceRule, BasisFlavor, ChainConfig, ChainMode, CopulaFamily, Error, EstimatorKind,
    Margin, MarginMode, MarginPair, Margins, PriorKind, PriorSpec, PseudoSample, ReferenceCopula,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const WORKERS_VAR: &str = "BCOP_WORKERS";

#[derive(Parser)]
#[command(name = "bcop", version, about = "Bayesian copula estimation on the Birkhoff polytope")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a copula from an `x,y` CSV file and write it on a grid.
    Estimate(EstimateArgs),
    /// Draw matrices from the prior with a prior-only chain.
    PriorSample(PriorSampleArgs),
    /// Prior probability of the largest ball around the center.
    BallProb(BallArgs),
    /// Distribution of the distance from the center under the prior.
    RadiusDensity(RadiusArgs),
    /// Mean integrated squared error of the estimators on simulated data.
    MiseStudy(MiseArgs),
    /// Simulate `x,y` data from a reference copula.
    Sample(SampleArgs),
    /// Run the oracle checks; fails if any check fails.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct ChainArgs {
    /// Sweeps per chain.
    #[arg(long, default_value_t = ChainConfig::DEFAULT_LENGTH)]
    length: usize,
    #[arg(long, default_value_t = ChainConfig::DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BasisArg::Indicator)]
    basis: BasisArg,
    /// `as-printed` or `corrected` (explicit chord-length ratio).
    #[arg(long, default_value = "as-printed")]
    acceptance: AcceptanceRule,
}

impl ChainArgs {
    fn config(&self, prior: PriorSpec, mode: ChainMode) -> Result<ChainConfig, Error> {
        let mut c = ChainConfig::new(prior, mode);
        c.length = self.length;
        c.burn_in = self.burn_in;
        c.seed = self.seed;
        c.basis = self.basis.into();
        c.acceptance = self.acceptance;
        c.thin = None;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Indicator,
    Bernstein,
}

impl From<BasisArg> for BasisFlavor {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Indicator => BasisFlavor::Indicator,
            BasisArg::Bernstein => BasisFlavor::Bernstein,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Bayes,
    Mle,
    Deheuvels,
    Kernel,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Where to write the `u,v,value` grid; stdout if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Bayes)]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 6)]
    m: usize,
    #[arg(long, default_value = "jeffreys")]
    prior: PriorKind,
    /// `known` applies `--margin-x`/`--margin-y` CDFs; `unknown` uses ranks.
    #[arg(long, default_value = "unknown")]
    margins: MarginMode,
    #[arg(long, default_value = "uniform")]
    margin_x: Margin,
    #[arg(long, default_value = "uniform")]
    margin_y: Margin,
    /// Grid points per axis, including both ends.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Also write the chain trace (`sweep,radius,log_posterior,accept_rate`).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args)]
struct PriorSampleArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value = "jeffreys")]
    prior: PriorKind,
    /// Keep every `thin`-th sweep after burn-in.
    #[arg(long, default_value_t = ChainConfig::DEFAULT_THIN)]
    thin: usize,
    /// Matrices as `sweep,p_1_1,...,p_m_m`; stdout if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args)]
struct BallArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value = "uniform")]
    prior: PriorKind,
    #[arg(long, default_value_t = 100)]
    chains: usize,
    /// `iteration,min,mean,max` running-mean envelope.
    #[arg(long, default_value = "ball_envelope.csv")]
    envelope: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args)]
struct RadiusArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value = "jeffreys")]
    prior: PriorKind,
    #[arg(long, default_value_t = 10)]
    chains: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Density evaluation points on `[0, q95]`.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// `radius,density`.
    #[arg(long, default_value = "radius_density.csv")]
    output: PathBuf,
    /// Raw radius draws, one per line.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args)]
struct MiseArgs {
    #[arg(long, default_value = "gaussian")]
    family: CopulaFamily,
    /// Comma-separated correlations.
    #[arg(long, value_delimiter = ',', default_values_t = RHO_GRID.to_vec())]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = ExperimentConfig::DEFAULT_REPLICATIONS)]
    replications: usize,
    /// Use the 1000 replications of the full-size study.
    #[arg(long, conflicts_with = "replications")]
    full_scale: bool,
    #[arg(long, default_value_t = ExperimentConfig::DEFAULT_M)]
    m: usize,
    /// Comma-separated subset of bayes_jeffreys, bayes_uniform, mle,
    /// deheuvels, kernel.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "bayes_jeffreys,bayes_uniform,mle,deheuvels,kernel"
    )]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value = "unknown")]
    margins: MarginMode,
    #[arg(long, default_value = "t7")]
    margin_x: Margin,
    #[arg(long, default_value = "chisq4")]
    margin_y: Margin,
    /// Midpoint quadrature resolution per axis.
    #[arg(long, default_value_t = QuadratureSpec::DEFAULT_RESOLUTION)]
    quadrature: usize,
    /// `family,rho,n,estimator,mise,stderr,R`; stdout if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Failed replications, if any.
    #[arg(long)]
    failures: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value = "gaussian")]
    family: CopulaFamily,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "uniform")]
    margin_x: Margin,
    #[arg(long, default_value = "uniform")]
    margin_y: Margin,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Full acceptance sizes instead of the quick pass.
    #[arg(long)]
    full: bool,
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(value) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{WORKERS_VAR} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn known_pseudo(raw: &birkhoff_copula::RawSample, fx: Margin, fy: Margin) -> Result<PseudoSample, Error> {
    let u = raw.x().iter().map(|&x| fx.cdf(x)).collect::<Result<Vec<_>, _>>()?;
    let v = raw.y().iter().map(|&y| fy.cdf(y)).collect::<Result<Vec<_>, _>>()?;
    PseudoSample::from_uniform(u, v)
}

fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    if a.grid < 2 {
        return Err(Failure::Usage("--grid must be at least 2".into()));
    }
    let raw = read_sample_file(&a.input)?;
    let pseudo = || match a.margins {
        MarginMode::Known => known_pseudo(&raw, a.margin_x, a.margin_y),
        MarginMode::Unknown => pseudo_observations(&raw, Margins::Unknown),
    };
    let est = match a.estimator {
        EstimatorArg::Bayes => {
            let cfg = a.chain.config(PriorSpec::new(a.prior, a.m)?, ChainMode::Posterior)?;
            let ps = pseudo()?;
            if let Some(path) = &a.trace {
                run_chain(Some(&ps), &cfg)?.write_trace_csv(create(path)?)?;
            }
            bayes_estimate(&ps, &cfg)?
        }
        EstimatorArg::Mle => mle_estimate(&pseudo()?, a.m)?,
        EstimatorArg::Deheuvels => deheuvels_estimate(&raw)?,
        EstimatorArg::Kernel => kernel_estimate(&raw, Bandwidth::default())?,
    };
    let mut out = open_output(a.output.as_deref())?;
    est.grid(a.grid - 1)?.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn prior_sample(a: PriorSampleArgs) -> Result<(), Failure> {
    let mut cfg = a.chain.config(PriorSpec::new(a.prior, a.m)?, ChainMode::PriorOnly)?;
    cfg.thin = Some(a.thin);
    cfg.validate()?;
    let chain = run_chain(None, &cfg)?;
    let mut out = open_output(a.output.as_deref())?;
    let mut header = vec!["sweep".to_string()];
    for i in 1..=a.m {
        for j in 1..=a.m {
            header.push(format!("p_{i}_{j}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for (sweep, p) in &chain.states {
        let m = p.as_matrix();
        let cells: Vec<String> = (0..a.m)
            .flat_map(|i| (0..a.m).map(move |j| (i, j)))
            .map(|(i, j)| format!("{:.16e}", m[(i, j)]))
            .collect();
        writeln!(out, "{sweep},{}", cells.join(","))?;
    }
    out.flush()?;
    if let Some(path) = &a.trace {
        chain.write_trace_csv(create(path)?)?;
    }
    Ok(())
}

fn ball_prob(a: BallArgs) -> Result<(), Failure> {
    let prior = PriorSpec::new(a.prior, a.m)?;
    let cfg = a.chain.config(prior, ChainMode::PriorOnly)?;
    let result = ball_probability(prior, a.m, a.chains, &cfg)?;
    let mut env = create(&a.envelope)?;
    result.write_envelope_csv(&mut env)?;
    env.flush()?;
    println!(
        "estimate {:.6} ({} of {} draws within radius {:.6}); envelope written to {}",
        result.estimate,
        result.hits,
        result.samples,
        result.ball_radius,
        a.envelope.display()
    );
    Ok(())
}

fn radius(a: RadiusArgs) -> Result<(), Failure> {
    let prior = PriorSpec::new(a.prior, a.m)?;
    let mut cfg = a.chain.config(prior, ChainMode::PriorOnly)?;
    cfg.thin = Some(a.thin);
    cfg.validate()?;
    let rd = radius_density(prior, a.m, a.chains, &cfg, a.points)?;
    let mut out = create(&a.output)?;
    rd.write_density_csv(&mut out)?;
    out.flush()?;
    if let Some(path) = &a.samples {
        let mut s = create(path)?;
        rd.write_samples_csv(&mut s)?;
        s.flush()?;
    }
    println!(
        "{} draws, mean radius {:.6}, q95 {:.6}, bandwidth {:.3e}",
        rd.samples.len(),
        rd.mean(),
        rd.q95,
        rd.bandwidth
    );
    Ok(())
}

fn mise(a: MiseArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::new(a.family, a.n);
    cfg.rhos = a.rho;
    cfg.replications = if a.full_scale { 1_000 } else { a.replications };
    cfg.m = a.m;
    cfg.estimators = a.estimators;
    cfg.margin_mode = a.margins;
    cfg.margins = MarginPair {
        first: a.margin_x,
        second: a.margin_y,
    };
    cfg.quadrature = QuadratureSpec::new(a.quadrature)?;
    cfg.seed = a.chain.seed;
    cfg.chain = a.chain.config(PriorSpec::jeffreys(a.m.max(2))?, ChainMode::Posterior)?;
    let report = run_mise_study(&cfg)?;
    let mut out = open_output(a.output.as_deref())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    if let Some(path) = &a.failures {
        report.write_failures_csv(create(path)?)?;
    }
    if !report.failures.is_empty() {
        eprintln!("{} estimator runs failed", report.failures.len());
    }
    Ok(())
}

fn sample(a: SampleArgs) -> Result<(), Failure> {
    let model = ReferenceCopula::new(a.family, a.rho)?;
    let draws = model.sample(a.n, &mut stream_rng(a.seed, 0));
    let margins = MarginPair {
        first: a.margin_x,
        second: a.margin_y,
    };
    let mut out = open_output(a.output.as_deref())?;
    write_samples_csv(&margins.apply(&draws), &mut out)?;
    out.flush()?;
    Ok(())
}

fn run_validate(a: ValidateArgs) -> Result<(), Failure> {
    let scale = if a.full { Scale::Full } else { Scale::Quick };
    let ids: Vec<u8> = if a.only.is_empty() {
        validate::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        a.only
    };
    if let Some(bad) = ids.iter().find(|id| !(1..=10).contains(*id)) {
        return Err(Failure::Usage(format!("no criterion {bad}; expected 1-10")));
    }
    let mut failed = 0;
    for id in ids {
        let report = validate::run(id, scale);
        println!("{}", report.line());
        if !report.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = configure_workers().and_then(|()| match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::PriorSample(a) => prior_sample(a),
        Command::BallProb(a) => ball_prob(a),
        Command::RadiusDensity(a) => radius(a),
        Command::MiseStudy(a) => mise(a),
        Command::Sample(a) => sample(a),
        Command::Validate(a) => run_validate(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Checks(n)) => {
            eprintln!("{n} criteria failed");
            ExitCode::from(2)
        }
    }
}
