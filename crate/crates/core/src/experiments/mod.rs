//! Simulation harness: data ingestion, prior-validation runs and the MISE
//! study.

mod mise;
mod prior;

use std::io::Read;
use std::path::Path;

use crate::data::RawSample;
use crate::error::{Error, Result};

pub use mise::{run_mise_study, ExperimentConfig, MiseReport, MiseRow, ReplicationFailure};
pub use prior::{
    ball_probability, quantile, radius_density, BallProbability, EnvelopeRow, RadiusDensity,
};

/// Stream purposes inside one `(outer, index)` key.
pub(crate) mod purpose {
    pub const DATA: u8 = 0;
    pub const CHAIN_JEFFREYS: u8 = 1;
    pub const CHAIN_UNIFORM: u8 = 2;
    pub const PRIOR_CHAIN: u8 = 3;
}

/// Reads two numeric columns `x,y`. A first line with a non-numeric field is
/// taken as a header. Errors carry one-based line numbers.
pub fn read_sample_csv<R: Read>(reader: R) -> Result<RawSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut first = true;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|f| f.parse::<f64>().ok()).collect();
        if first {
            first = false;
            if parsed.iter().any(Option::is_none) {
                if record.len() != 2 {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected 2 columns, found {}", record.len()),
                    });
                }
                continue;
            }
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let mut pair = [0.0; 2];
        for (k, (field, value)) in record.iter().zip(&parsed).enumerate() {
            match value {
                Some(v) if v.is_finite() => pair[k] = *v,
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("column {} is not a finite number: '{field}'", k + 1),
                    })
                }
            }
        }
        x.push(pair[0]);
        y.push(pair[1]);
    }
    if x.is_empty() {
        return Err(Error::MissingData);
    }
    RawSample::new(x, y)
}

pub fn read_sample_file(path: impl AsRef<Path>) -> Result<RawSample> {
    read_sample_csv(std::fs::File::open(path)?)
}
