//! Prior-only runs: ball probability with running-mean envelopes, and the
//! distribution of the distance to the center.

use std::io::Write;

use rayon::prelude::*;

use crate::dist::{mean_and_sd, normal_pdf};
use crate::error::{Error, Result};
use crate::fmt_sig17;
use crate::polytope::inscribed_radius;
use crate::priors::PriorSpec;
use crate::rng::stream_id;
use crate::sampler::{run_chain_with, ChainConfig, ChainMode};

use super::purpose;

/// Chains are run in groups of this size and folded in index order, which
/// keeps memory flat without making the result depend on the worker count.
const CHAIN_BATCH: usize = 64;

/// Per-chain config: prior-only target on `prior`, stream
/// `(config.stream, chain, PRIOR_CHAIN)`, no stored states.
fn chain_config(prior: PriorSpec, config: &ChainConfig, chain: usize) -> ChainConfig {
    ChainConfig {
        prior,
        mode: ChainMode::PriorOnly,
        thin: None,
        stream: stream_id(config.stream, chain as u64, purpose::PRIOR_CHAIN),
        ..*config
    }
}

fn check(prior: PriorSpec, m: usize, chains: usize, config: &ChainConfig) -> Result<()> {
    if prior.m != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: prior.m,
        });
    }
    if chains == 0 {
        return Err(Error::InvalidConfig("need at least one chain".into()));
    }
    if config.stream >= 1 << 24 || chains as u64 >= 1 << 32 {
        return Err(Error::InvalidConfig("stream key or chain count too large".into()));
    }
    chain_config(prior, config, 0).validate()
}

/// One line of the running-mean envelope over parallel chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRow {
    /// Retained draws so far in each chain.
    pub iteration: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallProbability {
    /// Fraction of retained draws with `radius <= 1/(m-1)`.
    pub estimate: f64,
    pub ball_radius: f64,
    pub hits: u64,
    pub samples: u64,
    /// Final hit frequency of each chain.
    pub per_chain: Vec<f64>,
    pub envelope: Vec<EnvelopeRow>,
}

impl BallProbability {
    /// `iteration,min,mean,max`.
    pub fn write_envelope_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,min,mean,max")?;
        for r in &self.envelope {
            writeln!(
                w,
                "{},{},{},{}",
                r.iteration,
                fmt_sig17(r.min),
                fmt_sig17(r.mean),
                fmt_sig17(r.max)
            )?;
        }
        Ok(())
    }
}

/// Prior mass of the largest ball around the center that fits in the
/// polytope, estimated from `chains` independent prior-only chains. Burn-in,
/// length and seed come from `config`; its prior and mode are overridden.
pub fn ball_probability(
    prior: PriorSpec,
    m: usize,
    chains: usize,
    config: &ChainConfig,
) -> Result<BallProbability> {
    check(prior, m, chains, config)?;
    let ball = inscribed_radius(m);
    let kept = config.length - config.burn_in;
    let mut lo = vec![f64::INFINITY; kept];
    let mut hi = vec![f64::NEG_INFINITY; kept];
    let mut sum = vec![0.0; kept];
    let mut per_chain = Vec::with_capacity(chains);
    let mut hits = 0u64;

    let ids: Vec<usize> = (0..chains).collect();
    for group in ids.chunks(CHAIN_BATCH) {
        let runs: Vec<Result<Vec<u32>>> = group
            .par_iter()
            .map(|&c| {
                let cfg = chain_config(prior, config, c);
                let mut cumulative = Vec::with_capacity(kept);
                let mut count = 0u32;
                run_chain_with(None, &cfg, |rec| {
                    if rec.retained {
                        if rec.radius <= ball {
                            count += 1;
                        }
                        cumulative.push(count);
                    }
                })?;
                Ok(cumulative)
            })
            .collect();
        for run in runs {
            let cumulative = run?;
            for (k, &c) in cumulative.iter().enumerate() {
                let running = f64::from(c) / (k + 1) as f64;
                lo[k] = lo[k].min(running);
                hi[k] = hi[k].max(running);
                sum[k] += running;
            }
            let total = cumulative.last().copied().unwrap_or(0);
            hits += u64::from(total);
            per_chain.push(f64::from(total) / kept as f64);
        }
    }

    let samples = (chains * kept) as u64;
    let envelope = (0..kept)
        .map(|k| EnvelopeRow {
            iteration: k + 1,
            min: lo[k],
            mean: sum[k] / chains as f64,
            max: hi[k],
        })
        .collect();
    Ok(BallProbability {
        estimate: hits as f64 / samples as f64,
        ball_radius: ball,
        hits,
        samples,
        per_chain,
        envelope,
    })
}

/// Linear-interpolation sample quantile (type 7) of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusDensity {
    /// Retained radii, chain by chain, thinned by `config.thin`.
    pub samples: Vec<f64>,
    pub q95: f64,
    pub bandwidth: f64,
    /// `(r, density)` on an even grid over `[0, q95]`.
    pub density: Vec<(f64, f64)>,
}

impl RadiusDensity {
    pub fn mean(&self) -> f64 {
        mean_and_sd(&self.samples).0
    }

    /// `radius,density`.
    pub fn write_density_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "radius,density")?;
        for (r, d) in &self.density {
            writeln!(w, "{},{}", fmt_sig17(*r), fmt_sig17(*d))?;
        }
        Ok(())
    }

    /// `radius`, one sample per line.
    pub fn write_samples_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "radius")?;
        for r in &self.samples {
            writeln!(w, "{}", fmt_sig17(*r))?;
        }
        Ok(())
    }
}

/// Radius draws under the prior and a Gaussian kernel density estimate on
/// `[0, q95]` at `points` grid points. The bandwidth is Silverman's rule,
/// `0.9 min(sd, IQR/1.34) n^(-1/5)`.
pub fn radius_density(
    prior: PriorSpec,
    m: usize,
    chains: usize,
    config: &ChainConfig,
    points: usize,
) -> Result<RadiusDensity> {
    check(prior, m, chains, config)?;
    if points < 2 {
        return Err(Error::Parameter(format!("need at least 2 density points, got {points}")));
    }
    let thin = config.thin.unwrap_or(1);
    let runs: Vec<Result<Vec<f64>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let cfg = chain_config(prior, config, c);
            let mut radii = Vec::new();
            run_chain_with(None, &cfg, |rec| {
                if rec.retained && (rec.sweep - config.burn_in - 1) % thin == 0 {
                    radii.push(rec.radius);
                }
            })?;
            Ok(radii)
        })
        .collect();
    let mut samples = Vec::new();
    for run in runs {
        samples.extend(run?);
    }

    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let q95 = quantile(&sorted, 0.95);
    let (_, sd) = mean_and_sd(&sorted);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bandwidth = 0.9 * spread * (sorted.len() as f64).powf(-0.2);
    let density = (0..points)
        .map(|k| {
            let r = q95 * k as f64 / (points - 1) as f64;
            let d = if bandwidth > 0.0 {
                sorted.iter().map(|&s| normal_pdf((r - s) / bandwidth)).sum::<f64>()
                    / (sorted.len() as f64 * bandwidth)
            } else {
                f64::NAN
            };
            (r, d)
        })
        .collect();
    Ok(RadiusDensity {
        samples,
        q95,
        bandwidth,
        density,
    })
}
