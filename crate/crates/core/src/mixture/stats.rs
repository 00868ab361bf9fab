use ndarray::Axis;

use super::{Batch, MixtureState, Responsibilities, SufficientStats};
use crate::error::{Error, Result};

/// Per-batch statistics `S̃_k = {Σ_i γ_ik, Σ_i γ_ik h_i, Σ_i γ_ik h_i⊙h_i}`.
pub fn batch_suffstats(batch: &Batch, resp: &Responsibilities) -> Result<SufficientStats> {
    if resp.n() != batch.n() {
        return Err(Error::invalid(format!(
            "{} responsibility rows for {} batch rows",
            resp.n(),
            batch.n()
        )));
    }
    let x = batch.rows();
    let g = resp.as_array();
    Ok(SufficientStats {
        s_pi: g.sum_axis(Axis(0)),
        s_mu: g.t().dot(x),
        s_sigma: g.t().dot(&x.mapv(|v| v * v)),
    })
}

/// Moving average `S_k ← η^γ̂_k S_k + (1 − η^γ̂_k) S̃_k`, where `γ̂_k` is the
/// batch-mean responsibility. With `use_resp_forgetting == false` the plain
/// factor `η` is used for every component.
///
/// A component with exactly zero responsibility keeps its statistics bit for
/// bit when responsibility forgetting is enabled.
pub fn forget_and_merge(
    state: &MixtureState,
    fresh: &SufficientStats,
    resp: &Responsibilities,
    eta: f64,
    use_resp_forgetting: bool,
) -> Result<SufficientStats> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("eta = {eta} outside [0, 1]")));
    }
    let prev = match (&state.suffstats, state.step) {
        (Some(s), t) if t >= 1 => s,
        _ => {
            return Err(Error::InvalidState(
                "forget_and_merge needs initialised statistics (step >= 1)".into(),
            ))
        }
    };
    let (k, d) = (state.k(), state.d());
    fresh.check_shape(k, d)?;
    if resp.k() != k {
        return Err(Error::invalid("responsibility width does not match K"));
    }
    let mean_resp = resp.column_means();
    let mut out = prev.clone();
    for c in 0..k {
        let f = if use_resp_forgetting {
            eta.powf(mean_resp[c])
        } else {
            eta
        };
        let g = 1.0 - f;
        out.s_pi[c] = f * prev.s_pi[c] + g * fresh.s_pi[c];
        for j in 0..d {
            out.s_mu[[c, j]] = f * prev.s_mu[[c, j]] + g * fresh.s_mu[[c, j]];
            out.s_sigma[[c, j]] = f * prev.s_sigma[[c, j]] + g * fresh.s_sigma[[c, j]];
        }
    }
    Ok(out)
}

/// First-update statistics: every component receives the pseudo-count `JB/K`
/// and first/second moments that reproduce its current mean and variance.
///
/// `fresh` is only checked for shape; the first batch contributes through the
/// pseudo-count alone, so the M-step that follows returns the current
/// parameters unchanged.
pub fn initialize_suffstats(
    state: &MixtureState,
    fresh: &SufficientStats,
    views: usize,
    batch_size: usize,
) -> Result<SufficientStats> {
    if state.step != 0 {
        return Err(Error::InvalidState(format!(
            "initialize_suffstats called at step {}",
            state.step
        )));
    }
    if views == 0 || batch_size == 0 {
        return Err(Error::invalid("views and batch size must be positive"));
    }
    let (k, d) = (state.k(), state.d());
    fresh.check_shape(k, d)?;
    let pseudo = (views * batch_size) as f64 / k as f64;
    let mut out = SufficientStats::zeros(k, d);
    for c in 0..k {
        out.s_pi[c] = pseudo;
        for j in 0..d {
            let m = state.means[[c, j]] * pseudo;
            out.s_mu[[c, j]] = m;
            out.s_sigma[[c, j]] = state.variances[[c, j]] * pseudo + m * m / pseudo;
        }
    }
    Ok(out)
}
