use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};

use super::{Batch, MixtureState, Responsibilities};
use crate::error::{Error, Result};

/// Log-density of `x` under a diagonal Gaussian.
pub fn log_density(
    x: ArrayView1<'_, f64>,
    mean: ArrayView1<'_, f64>,
    var: ArrayView1<'_, f64>,
) -> f64 {
    let mut acc = 0.0;
    for ((&xi, &mi), &vi) in x.iter().zip(mean).zip(var) {
        let diff = xi - mi;
        acc += (2.0 * PI * vi).ln() + diff * diff / vi;
    }
    -0.5 * acc
}

/// Annealed responsibilities `γ_ik ∝ π_k · N(h_i | μ_k, Σ_k)^β`.
pub fn e_step(state: &MixtureState, batch: &Batch, beta: f64) -> Result<Responsibilities> {
    e_step_with_loglik(state, batch, beta).map(|(r, _)| r)
}

/// As [`e_step`], also returning the per-row log normaliser
/// `log Σ_k π_k N(h_i | μ_k, Σ_k)^β` (the data log-likelihood when β = 1).
pub fn e_step_with_loglik(
    state: &MixtureState,
    batch: &Batch,
    beta: f64,
) -> Result<(Responsibilities, Array1<f64>)> {
    if batch.d() != state.d() {
        return Err(Error::invalid(format!(
            "batch dimension {} does not match mixture dimension {}",
            batch.d(),
            state.d()
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta = {beta} outside [0, 1]")));
    }
    let (n, k) = (batch.n(), state.k());
    let log_w: Vec<f64> = state.weights.iter().map(|w| w.ln()).collect();
    // Per-component normalising constant −½ Σ_d ln(2π σ²_kd).
    let log_norm: Vec<f64> = state
        .variances
        .rows()
        .into_iter()
        .map(|v| -0.5 * v.iter().map(|&s| (2.0 * PI * s).ln()).sum::<f64>())
        .collect();

    let d = state.d();
    let means = state.means.as_standard_layout();
    let inv_var = state.variances.mapv(|v| 1.0 / v);
    let (means, inv_var) = (
        means.as_slice().expect("standard layout"),
        inv_var.as_slice().expect("standard layout"),
    );
    let rows = batch.rows().as_standard_layout();
    let rows = rows.as_slice().expect("standard layout");

    let mut resp = Array2::zeros((n, k));
    let mut loglik = Array1::zeros(n);
    let mut scores = vec![0.0; k];
    for i in 0..n {
        let x = &rows[i * d..(i + 1) * d];
        let mut max = f64::NEG_INFINITY;
        for c in 0..k {
            let mean = &means[c * d..(c + 1) * d];
            let iv = &inv_var[c * d..(c + 1) * d];
            let mut quad = 0.0;
            for j in 0..d {
                let diff = x[j] - mean[j];
                quad += diff * diff * iv[j];
            }
            let s = log_w[c] + beta * (log_norm[c] - 0.5 * quad);
            scores[c] = s;
            if s > max {
                max = s;
            }
        }
        if !max.is_finite() {
            return Err(Error::InvalidState(format!(
                "row {i}: no component has finite log-probability"
            )));
        }
        let mut total = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            total += *s;
        }
        let mut row = resp.row_mut(i);
        for (r, s) in row.iter_mut().zip(&scores) {
            *r = s / total;
        }
        loglik[i] = max + total.ln();
    }
    Ok((Responsibilities(resp), loglik))
}
