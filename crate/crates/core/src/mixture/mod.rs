//! Online diagonal-covariance Gaussian mixture whose means serve as prototypes.
//!
//! One update consumes a batch of latent vectors and runs
//!
//! 1. an annealed E-step (`e_step`),
//! 2. per-batch sufficient statistics (`batch_suffstats`),
//! 3. either the first-step initialisation (`initialize_suffstats`) or the
//!    responsibility-weighted moving average (`forget_and_merge`),
//! 4. the M-step (`m_step`),
//! 5. split-resurrect and dominant-mean rescaling.
//!
//! [`gmm_update`] composes the stages and [`OnlineGmm`] carries the schedules
//! and the random stream between calls.

mod checkpoint;
mod estep;
mod mstep;
mod regularize;
mod stats;
mod update;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, write_text_export,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use estep::{e_step, e_step_with_loglik, log_density};
pub use mstep::{m_step, MStepOutput};
pub use regularize::{rescale_dominant_mean, split_resurrect, MixtureEvent, Rescale};
pub use stats::{batch_suffstats, forget_and_merge, initialize_suffstats};
pub use update::{
    farthest_point_rows, gmm_update, init_mixture, MeanInit, OnlineGmm, StepParams, UpdateReport,
};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Per-component accumulators `{Σγ, Σγh, Σγh⊙h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub s_pi: Array1<f64>,
    pub s_mu: Array2<f64>,
    /// Diagonal of the second-moment accumulator.
    pub s_sigma: Array2<f64>,
}

impl SufficientStats {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            s_pi: Array1::zeros(k),
            s_mu: Array2::zeros((k, d)),
            s_sigma: Array2::zeros((k, d)),
        }
    }

    pub fn k(&self) -> usize {
        self.s_pi.len()
    }

    pub fn d(&self) -> usize {
        self.s_mu.ncols()
    }

    fn check_shape(&self, k: usize, d: usize) -> Result<()> {
        if self.s_pi.len() != k || self.s_mu.dim() != (k, d) || self.s_sigma.dim() != (k, d) {
            return Err(Error::invalid(format!(
                "sufficient statistics shaped ({}, {:?}, {:?}), expected K={k}, D={d}",
                self.s_pi.len(),
                self.s_mu.dim(),
                self.s_sigma.dim()
            )));
        }
        Ok(())
    }
}

/// Complete state of the online mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub weights: Array1<f64>,
    /// K×D; row k is prototype k.
    pub means: Array2<f64>,
    /// K×D diagonal covariances.
    pub variances: Array2<f64>,
    /// `None` until the first update.
    pub suffstats: Option<SufficientStats>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl MixtureState {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn d(&self) -> usize {
        self.means.ncols()
    }

    /// Checks the structural invariants: simplex weights, floored variances and
    /// finite means.
    pub fn validate(&self, variance_floor: f64) -> Result<()> {
        let (k, d) = self.means.dim();
        if self.weights.len() != k || self.variances.dim() != (k, d) {
            return Err(Error::InvalidState("inconsistent mixture shapes".into()));
        }
        if let Some(s) = &self.suffstats {
            s.check_shape(k, d)?;
        }
        let total: f64 = self.weights.sum();
        if (total - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidState(format!(
                "weights off the simplex (sum {total})"
            )));
        }
        if self.variances.iter().any(|&v| !(v >= variance_floor)) {
            return Err(Error::InvalidState("variance below floor".into()));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidState("non-finite mean".into()));
        }
        Ok(())
    }
}

/// Linear ramp from `start` to `end` across `total_steps` updates, constant
/// afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub total_steps: u64,
}

impl LinearSchedule {
    pub fn constant(value: f64) -> Self {
        Self {
            start: value,
            end: value,
            total_steps: 1,
        }
    }

    /// Value used by the update with zero-based index `step`.
    pub fn at(&self, step: u64) -> f64 {
        if self.total_steps <= 1 {
            return self.end;
        }
        let frac = (step as f64 / (self.total_steps - 1) as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

/// Feature switches mirroring the component ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Toggles {
    pub responsibility_forgetting: bool,
    pub annealing: bool,
    pub resurrect: bool,
    pub rescaling: bool,
}

impl Toggles {
    pub const ALL: Toggles = Toggles {
        responsibility_forgetting: true,
        annealing: true,
        resurrect: true,
        rescaling: true,
    };
    pub const NONE: Toggles = Toggles {
        responsibility_forgetting: false,
        annealing: false,
        resurrect: false,
        rescaling: false,
    };

    /// All sixteen on/off combinations, in a stable order.
    pub fn grid() -> Vec<Toggles> {
        (0..16u8)
            .map(|bits| Toggles {
                responsibility_forgetting: bits & 8 != 0,
                annealing: bits & 4 != 0,
                resurrect: bits & 2 != 0,
                rescaling: bits & 1 != 0,
            })
            .collect()
    }

    /// Short label such as `rf1-an0-rs1-sc1`.
    pub fn label(&self) -> String {
        format!(
            "rf{}-an{}-rs{}-sc{}",
            u8::from(self.responsibility_forgetting),
            u8::from(self.annealing),
            u8::from(self.resurrect),
            u8::from(self.rescaling)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    /// Annealing exponent; the constant value when annealing is off and the
    /// ramp's end point when it is on.
    pub beta: f64,
    /// Ramp start used when `toggles.annealing` is set.
    pub beta_start: f64,
    /// Forgetting factor schedule. `total_steps == 0` means "set by the driver".
    pub eta: LinearSchedule,
    pub variance_floor: f64,
    /// Variance given to fresh and resurrected components.
    pub init_variance: f64,
    pub resurrect_threshold: f64,
    pub toggles: Toggles,
    pub rng_seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            beta_start: 0.5,
            eta: LinearSchedule {
                start: 0.1,
                end: 0.5,
                total_steps: 0,
            },
            variance_floor: 1e-6,
            init_variance: 1.0,
            resurrect_threshold: 0.3,
            toggles: Toggles::ALL,
            rng_seed: 0,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("beta", self.beta)?;
        unit("beta_start", self.beta_start)?;
        unit("eta.start", self.eta.start)?;
        unit("eta.end", self.eta.end)?;
        if !(self.resurrect_threshold > 0.0 && self.resurrect_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "resurrect threshold {} outside (0, 1]",
                self.resurrect_threshold
            )));
        }
        if !(self.variance_floor > 0.0) || !self.variance_floor.is_finite() {
            return Err(Error::invalid("variance floor must be positive"));
        }
        if !(self.init_variance >= self.variance_floor) || !self.init_variance.is_finite() {
            return Err(Error::invalid(
                "initial variance must be at least the floor",
            ));
        }
        Ok(())
    }

    /// Annealing exponent for the update with zero-based index `step`.
    pub fn beta_at(&self, step: u64) -> f64 {
        if self.toggles.annealing {
            LinearSchedule {
                start: self.beta_start,
                end: self.beta,
                total_steps: self.eta.total_steps,
            }
            .at(step)
        } else {
            self.beta
        }
    }

    pub fn eta_at(&self, step: u64) -> f64 {
        self.eta.at(step)
    }
}

/// N×D matrix of latent vectors (views × batch rows).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    rows: Array2<f64>,
}

impl Batch {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::invalid(
                "batch must have at least one row and column",
            ));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite batch entry at row {}",
                pos / rows.ncols()
            )));
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged batch rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(arr)
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.rows
    }
}

/// N×K soft assignments; every row lies on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(pub Array2<f64>);

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    /// Mean responsibility per component over the batch.
    pub fn column_means(&self) -> Array1<f64> {
        let n = self.n() as f64;
        let mut out = Array1::zeros(self.k());
        for row in self.0.rows() {
            for (o, &g) in out.iter_mut().zip(row) {
                *o += g;
            }
        }
        out.mapv_inplace(|s| s / n);
        out
    }
}
