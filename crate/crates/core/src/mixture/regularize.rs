//! Split-resurrect and dominant-mean rescaling.
//!
//! Both operate on the parameters after the M-step. When a component's
//! parameters are changed here, its sufficient statistics are rewritten to
//! encode the new parameters so that the next M-step does not undo the edit.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use super::MixtureState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum MixtureEvent {
    /// Component `dominant` (weight `old_weight` before the split) gave half its
    /// mass to the reinitialised component `resurrected`.
    Split {
        dominant: usize,
        resurrected: usize,
        old_weight: f64,
    },
    /// A dominant component was resurrected earlier in the same call, or
    /// found no partner.
    SplitSkipped { dominant: usize },
    /// Split-resurrect needs at least two components.
    SingleComponent,
    Rescaled {
        component: usize,
        old_norm: f64,
        new_norm: f64,
    },
    /// Rescaling skipped because the mean is the zero vector.
    ZeroNormMean { component: usize },
}

/// Outcome of [`rescale_dominant_mean`].
#[derive(Debug, Clone, PartialEq)]
pub enum Rescale {
    /// Weight at or below the threshold.
    Unchanged,
    Rescaled(Array1<f64>),
    /// Weight above the threshold but the mean has zero norm.
    ZeroNorm,
}

/// `μ / sqrt(‖μ‖₂)` for components whose weight exceeds `threshold`.
pub fn rescale_dominant_mean(mean: ArrayView1<'_, f64>, weight: f64, threshold: f64) -> Rescale {
    if weight <= threshold {
        return Rescale::Unchanged;
    }
    let norm = mean.dot(&mean).sqrt();
    if norm == 0.0 {
        return Rescale::ZeroNorm;
    }
    let scale = norm.sqrt();
    Rescale::Rescaled(mean.mapv(|m| m / scale))
}

/// Apply [`rescale_dominant_mean`] to every component of `state`.
pub(crate) fn rescale_state(state: &mut MixtureState, threshold: f64) -> Vec<MixtureEvent> {
    let mut events = Vec::new();
    for c in 0..state.k() {
        let old_norm = state.means.row(c).dot(&state.means.row(c)).sqrt();
        match rescale_dominant_mean(state.means.row(c), state.weights[c], threshold) {
            Rescale::Unchanged => {}
            Rescale::ZeroNorm => events.push(MixtureEvent::ZeroNormMean { component: c }),
            Rescale::Rescaled(m) => {
                let new_norm = m.dot(&m).sqrt();
                state.means.row_mut(c).assign(&m);
                if let Some(s) = state.suffstats.as_mut() {
                    let n = s.s_pi[c];
                    for j in 0..m.len() {
                        s.s_mu[[c, j]] = m[j] * n;
                        s.s_sigma[[c, j]] = (state.variances[[c, j]] + m[j] * m[j]) * n;
                    }
                }
                events.push(MixtureEvent::Rescaled {
                    component: c,
                    old_norm,
                    new_norm,
                });
            }
        }
    }
    events
}

/// Random direction with norm `target` (entries `N(0,1)/√D` when `target` is
/// not positive).
pub(crate) fn random_mean<R: Rng + ?Sized>(d: usize, target: f64, rng: &mut R) -> Array1<f64> {
    let mut z: Array1<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = z.dot(&z).sqrt();
    if target > 0.0 && norm > 0.0 {
        z.mapv_inplace(|v| v * target / norm);
    } else {
        let s = (d as f64).sqrt();
        z.mapv_inplace(|v| v / s);
    }
    z
}

/// Split every component heavier than `threshold` with the currently lightest
/// other component.
///
/// Dominant components are taken from the weights at call time and processed
/// in descending weight order, one split each. A dominant that was already
/// resurrected earlier in the call is skipped. The partner `j` is the lightest
/// component other than `k` that has not been resurrected in this call
/// (lowest index on ties). Both receive half of `k`'s working weight, `j` gets
/// a random mean whose norm matches the average norm of the other means and a
/// variance of `reset_variance`. The weights are renormalised once at the end.
///
/// The heaviest component always ends lighter. Others can end above the old
/// maximum, since the partners' previous mass is discarded before
/// renormalising.
pub fn split_resurrect<R: Rng + ?Sized>(
    state: &mut MixtureState,
    threshold: f64,
    reset_variance: f64,
    rng: &mut R,
) -> Result<Vec<MixtureEvent>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "resurrect threshold {threshold} outside (0, 1]"
        )));
    }
    let k = state.k();
    if k == 1 {
        return Ok(vec![MixtureEvent::SingleComponent]);
    }
    let mut dominant: Vec<usize> = (0..k).filter(|&c| state.weights[c] > threshold).collect();
    if dominant.is_empty() {
        return Ok(Vec::new());
    }
    dominant.sort_by(|&a, &b| {
        state.weights[b]
            .total_cmp(&state.weights[a])
            .then(a.cmp(&b))
    });

    let d = state.d();
    let mut work = state.weights.clone();
    let mut resurrected = vec![false; k];
    let mut events = Vec::new();
    for &dom in &dominant {
        let partner = (0..k)
            .filter(|&c| c != dom && !resurrected[c])
            .min_by(|&a, &b| work[a].total_cmp(&work[b]).then(a.cmp(&b)));
        let (false, Some(j)) = (resurrected[dom], partner) else {
            events.push(MixtureEvent::SplitSkipped { dominant: dom });
            continue;
        };
        let old_weight = work[dom];
        work[dom] = 0.5 * old_weight;
        work[j] = 0.5 * old_weight;
        resurrected[j] = true;

        let live: Vec<f64> = (0..k)
            .filter(|&c| c != j)
            .map(|c| state.means.row(c).dot(&state.means.row(c)).sqrt())
            .collect();
        let target = live.iter().sum::<f64>() / live.len() as f64;
        let mean = random_mean(d, target, rng);
        state.means.row_mut(j).assign(&mean);
        state.variances.row_mut(j).fill(reset_variance);
        events.push(MixtureEvent::Split {
            dominant: dom,
            resurrected: j,
            old_weight,
        });
    }
    if !events
        .iter()
        .any(|e| matches!(e, MixtureEvent::Split { .. }))
    {
        return Ok(events);
    }

    let total: f64 = work.sum();
    work.mapv_inplace(|w| w / total);
    if let Some(s) = state.suffstats.as_mut() {
        let mass: f64 = s.s_pi.sum();
        for c in 0..k {
            let n = work[c] * mass;
            if resurrected[c] {
                s.s_pi[c] = n;
                for j in 0..d {
                    let m = state.means[[c, j]];
                    s.s_mu[[c, j]] = m * n;
                    s.s_sigma[[c, j]] = (state.variances[[c, j]] + m * m) * n;
                }
            } else {
                let scale = n / s.s_pi[c];
                s.s_pi[c] = n;
                s.s_mu.row_mut(c).mapv_inplace(|v| v * scale);
                s.s_sigma.row_mut(c).mapv_inplace(|v| v * scale);
            }
        }
    }
    state.weights = work;
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::{array, Array2};

    fn state(weights: Array1<f64>, d: usize) -> MixtureState {
        let k = weights.len();
        MixtureState {
            weights,
            means: Array2::from_shape_fn((k, d), |(c, j)| {
                (c + 1) as f64 * if j == 0 { 1.0 } else { 0.5 }
            }),
            variances: Array2::from_elem((k, d), 0.2),
            suffstats: None,
            step: 3,
        }
    }

    #[test]
    fn three_weight_fixture_splits_in_halves() {
        let mut st = state(array![0.4, 0.35, 0.25], 3);
        let before = st.clone();
        let mut rng = stream(1, "resurrect");
        let events = split_resurrect(&mut st, 0.3, 1.0, &mut rng).unwrap();
        // 0.4 → 0.2/0.2 with component 2; then 0.35 → 0.175/0.175 with the
        // now-lightest component 0; renormalised by 0.55.
        assert_eq!(
            events[0],
            MixtureEvent::Split {
                dominant: 0,
                resurrected: 2,
                old_weight: 0.4
            }
        );
        assert_eq!(
            events[1],
            MixtureEvent::Split {
                dominant: 1,
                resurrected: 0,
                old_weight: 0.35
            }
        );
        let expected = [0.175 / 0.55, 0.175 / 0.55, 0.2 / 0.55];
        for (w, e) in st.weights.iter().zip(expected) {
            assert!((w - e).abs() < 1e-12);
        }
        assert!((st.weights.sum() - 1.0).abs() < 1e-12);
        assert_ne!(st.means.row(2), before.means.row(2));
        assert_eq!(st.variances.row(2), array![1.0, 1.0, 1.0]);
        assert!(st.weights.iter().cloned().fold(0.0, f64::max) < 0.4);
    }

    #[test]
    fn resurrected_dominant_does_not_split_again() {
        let mut st = state(array![0.4, 0.35, 0.25], 2);
        let events = split_resurrect(&mut st, 0.2, 1.0, &mut stream(2, "r")).unwrap();
        assert_eq!(events[2], MixtureEvent::SplitSkipped { dominant: 2 });
        assert!(st.weights[0] < 0.4);
        assert!((st.weights.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renormalisation_can_lift_an_untouched_component() {
        let mut st = state(array![0.31, 0.3, 0.29, 0.1], 2);
        split_resurrect(&mut st, 0.3, 1.0, &mut stream(3, "r")).unwrap();
        // 0.31 splits with 0.1; 0.3 is not over the threshold and grows to 0.3 / 0.9.
        assert!((st.weights[0] - 0.155 / 0.9).abs() < 1e-12);
        assert!((st.weights[1] - 0.3 / 0.9).abs() < 1e-12);
        assert!(st.weights[1] > 0.31);
    }

    #[test]
    fn nothing_over_threshold() {
        let mut st = state(Array1::from_elem(5, 0.2), 2);
        let before = st.clone();
        let ev = split_resurrect(&mut st, 0.3, 1.0, &mut stream(0, "r")).unwrap();
        assert!(ev.is_empty());
        assert_eq!(st, before);
    }

    #[test]
    fn single_component_is_a_noop() {
        let mut st = state(array![1.0], 2);
        let before = st.clone();
        let ev = split_resurrect(&mut st, 0.3, 1.0, &mut stream(0, "r")).unwrap();
        assert_eq!(ev, vec![MixtureEvent::SingleComponent]);
        assert_eq!(st, before);
    }

    #[test]
    fn resurrected_norm_matches_live_means() {
        let mut st = state(array![0.9, 0.05, 0.05], 4);
        split_resurrect(&mut st, 0.3, 1.0, &mut stream(3, "r")).unwrap();
        // lightest is component 1 (lowest index among ties)
        let norms: Vec<f64> = (0..3)
            .map(|c| st.means.row(c).dot(&st.means.row(c)).sqrt())
            .collect();
        let target = (norms[0] + norms[2]) / 2.0;
        assert!((norms[1] - target).abs() < 1e-12);
        assert!((st.weights[0] - st.weights[1]).abs() < 1e-15);
    }

    #[test]
    fn rescale_contract() {
        let m = array![0.0, 4.0];
        match rescale_dominant_mean(m.view(), 0.5, 0.3) {
            Rescale::Rescaled(v) => assert!((v.dot(&v).sqrt() - 2.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        let unit = array![0.6, 0.8];
        match rescale_dominant_mean(unit.view(), 0.5, 0.3) {
            Rescale::Rescaled(v) => assert!((v.dot(&v).sqrt() - 1.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            rescale_dominant_mean(m.view(), 0.3, 0.3),
            Rescale::Unchanged
        );
        assert_eq!(
            rescale_dominant_mean(array![0.0, 0.0].view(), 0.9, 0.3),
            Rescale::ZeroNorm
        );
    }
}
