use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::Rng;

use super::regularize::{random_mean, rescale_state};
use super::{
    batch_suffstats, e_step_with_loglik, forget_and_merge, initialize_suffstats, m_step,
    split_resurrect, Batch, GmmConfig, MixtureEvent, MixtureState, Responsibilities,
    SufficientStats,
};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

/// How initial means are chosen.
#[derive(Debug, Clone, Copy)]
pub enum MeanInit<'a> {
    /// i.i.d. `N(0, 1/D)` entries.
    Random,
    /// K distinct rows drawn uniformly without replacement.
    Sample(&'a Batch),
    /// Farthest-point traversal: a random first row, then repeatedly the row
    /// whose largest cosine similarity to the rows chosen so far is smallest.
    FarthestPoint(&'a Batch),
}

/// Uniform weights, unit (or `config.init_variance`) variances and means chosen
/// by `init`. Statistics stay unset until the first update.
pub fn init_mixture<R: Rng + ?Sized>(
    k: usize,
    d: usize,
    init: MeanInit<'_>,
    config: &GmmConfig,
    rng: &mut R,
) -> Result<MixtureState> {
    if k == 0 || d == 0 {
        return Err(Error::invalid(format!(
            "K = {k} and D = {d} must be positive"
        )));
    }
    config.validate()?;
    let points = match init {
        MeanInit::Random => None,
        MeanInit::Sample(b) | MeanInit::FarthestPoint(b) => Some(b),
    };
    if let Some(b) = points {
        if b.d() != d {
            return Err(Error::invalid(format!(
                "init points have dimension {}, expected {d}",
                b.d()
            )));
        }
        if b.n() < k {
            return Err(Error::invalid(format!(
                "need at least K = {k} init points, got {}",
                b.n()
            )));
        }
    }
    let mut means = Array2::zeros((k, d));
    match init {
        MeanInit::Random => {
            for c in 0..k {
                means.row_mut(c).assign(&random_mean(d, 0.0, rng));
            }
        }
        MeanInit::Sample(b) => {
            for (c, i) in sample(rng, b.n(), k).into_iter().enumerate() {
                means.row_mut(c).assign(&b.row(i));
            }
        }
        MeanInit::FarthestPoint(b) => {
            for (c, i) in farthest_point_rows(b, k, rng).into_iter().enumerate() {
                means.row_mut(c).assign(&b.row(i));
            }
        }
    }
    Ok(MixtureState {
        weights: Array1::from_elem(k, 1.0 / k as f64),
        means,
        variances: Array2::from_elem((k, d), config.init_variance),
        suffstats: None,
        step: 0,
    })
}

/// Indices of `k` rows chosen by farthest-point traversal under cosine
/// similarity. Zero rows are never preferred.
pub fn farthest_point_rows<R: Rng + ?Sized>(points: &Batch, k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.n();
    let norms: Vec<f64> = (0..n)
        .map(|i| points.row(i).dot(&points.row(i)).sqrt())
        .collect();
    let cos = |a: usize, b: usize| {
        let den = norms[a] * norms[b];
        if den > 0.0 {
            points.row(a).dot(&points.row(b)) / den
        } else {
            1.0
        }
    };
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut taken = vec![false; n];
    taken[first] = true;
    let mut closest: Vec<f64> = (0..n).map(|i| cos(i, first)).collect();
    while chosen.len() < k.min(n) {
        let next = (0..n)
            .filter(|&i| !taken[i])
            .min_by(|&a, &b| closest[a].total_cmp(&closest[b]).then(a.cmp(&b)))
            .expect("k <= n leaves a candidate");
        taken[next] = true;
        chosen.push(next);
        for i in 0..n {
            let c = cos(i, next);
            if c > closest[i] {
                closest[i] = c;
            }
        }
    }
    chosen
}

/// Per-call hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub beta: f64,
    pub eta: f64,
    /// Number of views J stacked in the batch; the batch holds `J·B` rows.
    pub views: usize,
}

#[derive(Debug, Clone)]
pub struct UpdateReport {
    pub responsibilities: Responsibilities,
    /// Statistics after the moving average, before split-resurrect/rescaling.
    pub merged: SufficientStats,
    pub events: Vec<MixtureEvent>,
    /// Mean of the per-row log normaliser under the pre-update parameters.
    pub mean_loglik: f64,
}

/// One online EM update, mutating `state` in place. On error `state` is left
/// untouched.
pub fn gmm_update<R: Rng + ?Sized>(
    state: &mut MixtureState,
    batch: &Batch,
    params: StepParams,
    config: &GmmConfig,
    rng: &mut R,
) -> Result<UpdateReport> {
    if params.views == 0 || batch.n() % params.views != 0 {
        return Err(Error::invalid(format!(
            "batch of {} rows is not a whole number of {} views",
            batch.n(),
            params.views
        )));
    }
    let (resp, loglik) = e_step_with_loglik(state, batch, params.beta)?;
    let fresh = batch_suffstats(batch, &resp)?;
    let merged = if state.step == 0 {
        initialize_suffstats(state, &fresh, params.views, batch.n() / params.views)?
    } else {
        forget_and_merge(
            state,
            &fresh,
            &resp,
            params.eta,
            config.toggles.responsibility_forgetting,
        )?
    };
    let m = m_step(&merged, config.variance_floor)?;

    state.weights = m.weights;
    state.means = m.means;
    state.variances = m.variances;
    state.suffstats = Some(merged.clone());
    let mut events = Vec::new();
    if config.toggles.resurrect {
        events.extend(split_resurrect(
            state,
            config.resurrect_threshold,
            config.init_variance,
            rng,
        )?);
    }
    if config.toggles.rescaling {
        events.extend(rescale_state(state, config.resurrect_threshold));
    }
    state.step += 1;
    Ok(UpdateReport {
        responsibilities: resp,
        merged,
        events,
        mean_loglik: loglik.mean().unwrap_or(f64::NAN),
    })
}

/// Mixture plus the schedules and random stream that drive it.
#[derive(Debug, Clone)]
pub struct OnlineGmm {
    pub state: MixtureState,
    pub config: GmmConfig,
    pub views: usize,
    rng: StreamRng,
}

impl OnlineGmm {
    /// Wraps an initialised state. The η schedule length must be set.
    pub fn new(state: MixtureState, config: GmmConfig, views: usize) -> Result<Self> {
        config.validate()?;
        if config.eta.total_steps == 0 {
            return Err(Error::invalid("eta schedule length (total_steps) is unset"));
        }
        let rng = stream(config.rng_seed, "mixture");
        Ok(Self {
            state,
            config,
            views,
            rng,
        })
    }

    pub fn step_params(&self) -> StepParams {
        StepParams {
            beta: self.config.beta_at(self.state.step),
            eta: self.config.eta_at(self.state.step),
            views: self.views,
        }
    }

    pub fn update(&mut self, batch: &Batch) -> Result<UpdateReport> {
        let params = self.step_params();
        gmm_update(&mut self.state, batch, params, &self.config, &mut self.rng)
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.state.means
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{LinearSchedule, Toggles};
    use ndarray::array;

    fn cfg(toggles: Toggles) -> GmmConfig {
        GmmConfig {
            toggles,
            eta: LinearSchedule {
                start: 0.1,
                end: 0.5,
                total_steps: 10,
            },
            ..GmmConfig::default()
        }
    }

    #[test]
    fn uniform_weights_without_points() {
        let st = init_mixture(
            4,
            2,
            MeanInit::Random,
            &cfg(Toggles::ALL),
            &mut stream(0, "i"),
        )
        .unwrap();
        assert_eq!(st.weights, array![0.25, 0.25, 0.25, 0.25]);
        assert!(st.variances.iter().all(|&v| v == 1.0));
        assert!(st.suffstats.is_none());
    }

    #[test]
    fn means_come_from_points() {
        let pts = Batch::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let st = init_mixture(
            2,
            2,
            MeanInit::Sample(&pts),
            &cfg(Toggles::ALL),
            &mut stream(5, "i"),
        )
        .unwrap();
        let mut rows: Vec<Vec<f64>> = st.means.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn init_preconditions() {
        let pts = Batch::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let c = cfg(Toggles::ALL);
        let mut rng = stream(0, "i");
        assert!(matches!(
            init_mixture(3, 2, MeanInit::Sample(&pts), &c, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
        assert!(init_mixture(0, 2, MeanInit::Random, &c, &mut rng).is_err());
        assert!(init_mixture(2, 0, MeanInit::Random, &c, &mut rng).is_err());
    }

    #[test]
    fn farthest_point_spreads_out() {
        let pts = Batch::from_rows(&[
            vec![1.0, 0.0],
            vec![0.99, 0.01],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.01, 0.99],
        ])
        .unwrap();
        let idx = farthest_point_rows(&pts, 3, &mut stream(2, "fp"));
        let mut dirs: Vec<usize> = idx
            .iter()
            .map(|&i| match i {
                0 | 1 => 0,
                2 => 1,
                _ => 2,
            })
            .collect();
        dirs.sort();
        assert_eq!(dirs, vec![0, 1, 2]);
    }

    #[test]
    fn first_update_initialises_statistics() {
        let c = cfg(Toggles::NONE);
        let mut st = init_mixture(2, 2, MeanInit::Random, &c, &mut stream(1, "i")).unwrap();
        let before = st.clone();
        let batch = Batch::from_rows(&[
            vec![0.5, 1.0],
            vec![2.0, -1.0],
            vec![0.0, 0.1],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let params = StepParams {
            beta: 1.0,
            eta: 0.1,
            views: 2,
        };
        gmm_update(&mut st, &batch, params, &c, &mut stream(1, "u")).unwrap();
        assert_eq!(st.step, 1);
        let s = st.suffstats.as_ref().unwrap();
        assert_eq!(s.s_pi, array![2.0, 2.0]);
        for (a, b) in st.means.iter().zip(before.means.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in st.variances.iter().zip(before.variances.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn view_count_must_divide_batch() {
        let c = cfg(Toggles::NONE);
        let mut st = init_mixture(2, 1, MeanInit::Random, &c, &mut stream(1, "i")).unwrap();
        let batch = Batch::from_rows(&[vec![0.5], vec![2.0], vec![0.0]]).unwrap();
        let params = StepParams {
            beta: 1.0,
            eta: 0.1,
            views: 2,
        };
        assert!(gmm_update(&mut st, &batch, params, &c, &mut stream(1, "u")).is_err());
        assert_eq!(st.step, 0);
    }

    #[test]
    fn online_gmm_requires_schedule_length() {
        let mut c = cfg(Toggles::ALL);
        let st = init_mixture(2, 1, MeanInit::Random, &c, &mut stream(1, "i")).unwrap();
        c.eta.total_steps = 0;
        assert!(OnlineGmm::new(st, c, 1).is_err());
    }
}
