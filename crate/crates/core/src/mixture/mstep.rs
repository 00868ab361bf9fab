use ndarray::{Array1, Array2};

use super::SufficientStats;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MStepOutput {
    pub weights: Array1<f64>,
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
}

/// Maximum-likelihood parameters from accumulated statistics. Variances are
/// clamped elementwise to `variance_floor`.
pub fn m_step(stats: &SufficientStats, variance_floor: f64) -> Result<MStepOutput> {
    if let Some((index, &mass)) = stats
        .s_pi
        .iter()
        .enumerate()
        .find(|(_, &m)| !(m > 0.0) || !m.is_finite())
    {
        return Err(Error::DegenerateComponent { index, mass });
    }
    let total: f64 = stats.s_pi.sum();
    let weights = stats.s_pi.mapv(|m| m / total);
    let (k, d) = (stats.k(), stats.d());
    let mut means = Array2::zeros((k, d));
    let mut variances = Array2::zeros((k, d));
    for c in 0..k {
        let n = stats.s_pi[c];
        for j in 0..d {
            let mu = stats.s_mu[[c, j]] / n;
            means[[c, j]] = mu;
            let var = stats.s_sigma[[c, j]] / n - mu * mu;
            variances[[c, j]] = if var > variance_floor {
                var
            } else {
                variance_floor
            };
        }
    }
    Ok(MStepOutput {
        weights,
        means,
        variances,
    })
}
