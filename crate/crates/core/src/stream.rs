//! Standalone streaming mixture over a fixed feature matrix, with no encoder.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mixture::{init_mixture, Batch, GmmConfig, MeanInit, MixtureState, OnlineGmm};
use crate::rng::stream;

pub const LOGLIK_HEADER: &str = "batch,pass,mean_loglik";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamInit {
    FarthestPoint,
    Sample,
    Random,
}

impl StreamInit {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamInit::FarthestPoint => "farthest",
            StreamInit::Sample => "sample",
            StreamInit::Random => "random",
        }
    }
}

impl FromStr for StreamInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "farthest" => Ok(StreamInit::FarthestPoint),
            "sample" => Ok(StreamInit::Sample),
            "random" => Ok(StreamInit::Random),
            _ => Err(Error::invalid(format!("unknown init '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub k: usize,
    pub batch: usize,
    /// Passes over the file; the η schedule spans all of them.
    pub passes: usize,
    /// Reshuffle the rows before every pass.
    pub shuffle: bool,
    /// Means are placed using the first batch of the first pass.
    pub init: StreamInit,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            k: 8,
            batch: 256,
            passes: 1,
            shuffle: true,
            init: StreamInit::FarthestPoint,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.batch == 0 || self.passes == 0 {
            return Err(Error::invalid(
                "stream K, batch and passes must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLog {
    pub batch: usize,
    pub pass: usize,
    pub mean_loglik: f64,
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    pub state: MixtureState,
    pub log: Vec<BatchLog>,
}

pub fn loglik_csv(log: &[BatchLog]) -> String {
    let mut out = String::from(LOGLIK_HEADER);
    out.push('\n');
    for r in log {
        let _ = writeln!(out, "{},{},{:?}", r.batch, r.pass, r.mean_loglik);
    }
    out
}

/// Feeds `features` through one online update per batch. A trailing partial
/// batch is used as is; the last batch of a pass is never empty.
pub fn cluster_stream(
    features: &Array2<f64>,
    config: &StreamConfig,
    gmm: &GmmConfig,
    seed: u64,
) -> Result<StreamOutput> {
    config.validate()?;
    let (n, d) = features.dim();
    if n == 0 || d == 0 {
        return Err(Error::invalid("feature matrix is empty"));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature matrix has non-finite values"));
    }
    let per_pass = n.div_ceil(config.batch);
    let mut gmm = gmm.clone();
    gmm.eta.total_steps = (per_pass * config.passes) as u64;
    gmm.rng_seed = seed;

    let mut order_rng = stream(seed, "batch-order");
    let mut order: Vec<usize> = (0..n).collect();
    let mut runner: Option<OnlineGmm> = None;
    let mut log = Vec::with_capacity(per_pass * config.passes);
    for pass in 0..config.passes {
        if config.shuffle {
            order.shuffle(&mut order_rng);
        }
        for (b, idx) in order.chunks(config.batch).enumerate() {
            let batch = Batch::new(features.select(Axis(0), idx))?;
            if runner.is_none() {
                let init = match config.init {
                    StreamInit::FarthestPoint => MeanInit::FarthestPoint(&batch),
                    StreamInit::Sample => MeanInit::Sample(&batch),
                    StreamInit::Random => MeanInit::Random,
                };
                let state =
                    init_mixture(config.k, d, init, &gmm, &mut stream(seed, "prototype-init"))?;
                runner = Some(OnlineGmm::new(state, gmm.clone(), 1)?);
            }
            let report = runner.as_mut().expect("initialised").update(&batch)?;
            log.push(BatchLog {
                batch: pass * per_pass + b,
                pass,
                mean_loglik: report.mean_loglik,
            });
        }
    }
    Ok(StreamOutput {
        state: runner.expect("at least one batch").state,
        log,
    })
}
