//! Desk-scale teacher-student simulator comparing jointly learned prototypes
//! with prototypes estimated by the online mixture on teacher latents.
//!
//! Each iteration draws `J` views of a batch, encodes them with the EMA
//! teacher and then
//! * (decoupled) feeds the teacher latents to the mixture and copies its
//!   means into the prototype matrix,
//! * computes teacher targets `softmax(h_φ Cᵀ/τ_t)`,
//! * takes one gradient step on the student (and on `C` when joint),
//! * moves the teacher towards the student.

pub mod data;
pub mod encoder;
pub mod loss;
pub mod probe;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Zip};
use rand::seq::SliceRandom;

use crate::collapse::{epsilon_sweep, normalize_rows, DEFAULT_EPSILONS};
use crate::error::{Error, Result};
use crate::mixture::{
    init_mixture, write_checkpoint, Batch, GmmConfig, LinearSchedule, MeanInit, MixtureState,
    OnlineGmm, Toggles, UpdateReport,
};
use crate::rng::{stream, StreamRng};

pub use data::{generate, make_views, DataMode, DataSpec, Dataset, Split, SplitData};
pub use encoder::{EncoderParams, Forward};
pub use loss::{assign, assign_rows, consistency_loss, multiview_consistency, softmax_rows};
pub use probe::{centroid_accuracy, ProbeAccuracy};

/// ε values logged per epoch.
pub const TELEMETRY_EPSILONS: [f64; 5] = [
    DEFAULT_EPSILONS[1],
    DEFAULT_EPSILONS[2],
    DEFAULT_EPSILONS[3],
    DEFAULT_EPSILONS[4],
    DEFAULT_EPSILONS[5],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Prototypes are trained by gradient descent together with the encoder.
    Joint,
    /// Prototypes are the online mixture means on teacher latents.
    Decoupled,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Joint => "joint",
            Regime::Decoupled => "decoupled",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Regime::Joint),
            "decoupled" => Ok(Regime::Decoupled),
            _ => Err(Error::invalid(format!("unknown regime `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub regime: Regime,
    /// Number of prototypes.
    pub k: usize,
    /// Latent dimension.
    pub d: usize,
    pub hidden: usize,
    pub tau_s: f64,
    pub tau_t: f64,
    pub momentum: f64,
    pub lr: f64,
    /// Linear weight-decay schedule (start, end) for the encoder weights;
    /// biases are not decayed.
    pub weight_decay: (f64, f64),
    /// Linear weight-decay schedule for the prototype matrix (joint regime).
    pub prototype_weight_decay: (f64, f64),
    /// Gradients with a larger global norm are rescaled to this norm.
    pub grad_clip: f64,
    /// Momentum of the running mean subtracted from teacher scores before
    /// the teacher softmax; `None` disables centering.
    pub center_momentum: Option<f64>,
    pub epochs: usize,
    pub views: usize,
    pub batch: usize,
    pub view_noise: f64,
    pub view_dropout: f64,
    /// Orthogonal-init gains for the two layers.
    pub init_gain: (f64, f64),
    pub data: DataSpec,
    pub gmm: GmmConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let gmm = GmmConfig {
            toggles: Toggles {
                annealing: false,
                ..Toggles::ALL
            },
            init_variance: 1.0 / 16.0,
            ..GmmConfig::default()
        };
        Self {
            regime: Regime::Decoupled,
            k: 64,
            d: 16,
            hidden: 16,
            tau_s: 0.1,
            tau_t: 0.04,
            momentum: 0.99,
            lr: 0.05,
            weight_decay: (0.0, 0.0),
            prototype_weight_decay: (0.04, 0.4),
            grad_clip: 100.0,
            center_momentum: Some(0.9),
            epochs: 50,
            views: 2,
            batch: 256,
            view_noise: 0.2,
            view_dropout: 0.1,
            init_gain: (0.5, 1.0),
            data: DataSpec::default(),
            gmm,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.tau_s, "tau_s")?;
        pos(self.tau_t, "tau_t")?;
        pos(self.grad_clip, "grad_clip")?;
        if let Some(m) = self.center_momentum {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::invalid(format!(
                    "center momentum {m} must be in [0, 1)"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum {} must be in [0, 1)",
                self.momentum
            )));
        }
        if self.views < 2 {
            return Err(Error::invalid("need at least two views"));
        }
        if self.k == 0 || self.d == 0 || self.hidden == 0 || self.batch == 0 {
            return Err(Error::invalid("K, D, hidden and batch must be positive"));
        }
        let decays = [self.weight_decay, self.prototype_weight_decay];
        if !(self.lr >= 0.0) || decays.iter().any(|&(a, b)| !(a >= 0.0 && b >= 0.0)) {
            return Err(Error::invalid(
                "learning rate and weight decay must be >= 0",
            ));
        }
        if !(0.0..1.0).contains(&self.view_dropout) || !(self.view_noise >= 0.0) {
            return Err(Error::invalid(
                "view noise must be >= 0 and dropout in [0, 1)",
            ));
        }
        self.data.validate()?;
        self.gmm.validate()
    }

    fn iters_per_epoch(&self, n_train: usize) -> usize {
        n_train / self.batch
    }
}

/// Student `θ`, teacher `φ`, prototype matrix `C` and, when decoupled, the
/// mixture that owns `C`.
#[derive(Debug, Clone)]
pub struct SimState {
    pub regime: Regime,
    pub student: EncoderParams,
    pub teacher: EncoderParams,
    pub prototypes: Array2<f64>,
    pub mixture: Option<OnlineGmm>,
    pub step: u64,
    pub clip_events: u64,
    /// Running mean of teacher scores per prototype (zeros when centering is
    /// off).
    pub center: Array1<f64>,
}

/// Loss and gradients of the student objective.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub encoder: EncoderParams,
    pub prototypes: Array2<f64>,
}

/// Result of one student update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Hyperparameters of a single student update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentHyper {
    pub lr: f64,
    pub weight_decay: f64,
    pub prototype_weight_decay: f64,
    pub tau_s: f64,
    pub views: usize,
    pub grad_clip: f64,
}

/// Consistency loss of `student` on view-stacked inputs `x` against fixed
/// teacher targets.
pub fn student_loss(
    student: &EncoderParams,
    prototypes: &Array2<f64>,
    x: &Array2<f64>,
    teacher_p: &Array2<f64>,
    views: usize,
    tau_s: f64,
) -> Result<f64> {
    let h = student.encode(x)?;
    let scores = h.dot(&prototypes.t());
    Ok(multiview_consistency(&scores, teacher_p, views, tau_s)?.0)
}

/// [`student_loss`] with analytic gradients for the encoder and the
/// prototype matrix.
pub fn student_loss_grad(
    student: &EncoderParams,
    prototypes: &Array2<f64>,
    x: &Array2<f64>,
    teacher_p: &Array2<f64>,
    views: usize,
    tau_s: f64,
) -> Result<LossGrad> {
    if prototypes.ncols() != student.output_dim() {
        return Err(Error::invalid(
            "prototype dimension differs from encoder output",
        ));
    }
    let fw = student.forward(x)?;
    let scores = fw.out.dot(&prototypes.t());
    let (loss, g_scores) = multiview_consistency(&scores, teacher_p, views, tau_s)?;
    let g_h = g_scores.dot(prototypes);
    let g_c = g_scores.t().dot(&fw.out);
    Ok(LossGrad {
        loss,
        encoder: student.backward(x, &fw, &g_h),
        prototypes: g_c,
    })
}

/// Teacher scores `h_φ Cᵀ` and targets `softmax((h_φ Cᵀ − center)/τ_t)` for
/// view-stacked inputs.
pub fn teacher_targets(
    state: &SimState,
    x: &Array2<f64>,
    tau_t: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let h = state.teacher.encode(x)?;
    let scores = h.dot(&state.prototypes.t());
    let p = softmax_rows(&(&scores - &state.center), tau_t)?;
    Ok((scores, p))
}

/// `center ← m·center + (1 − m)·mean(scores)`.
pub fn update_center(state: &mut SimState, scores: &Array2<f64>, momentum: f64) {
    let mean = scores.mean_axis(ndarray::Axis(0)).expect("nonempty batch");
    Zip::from(&mut state.center)
        .and(&mean)
        .for_each(|c, &b| *c = momentum * *c + (1.0 - momentum) * b);
}

/// One gradient step on the student; in the joint regime also on `C`.
pub fn student_step(
    state: &mut SimState,
    x: &Array2<f64>,
    teacher_p: &Array2<f64>,
    hyper: &StudentHyper,
) -> Result<StepOutcome> {
    let mut g = student_loss_grad(
        &state.student,
        &state.prototypes,
        x,
        teacher_p,
        hyper.views,
        hyper.tau_s,
    )?;
    let joint = state.regime == Regime::Joint;
    let mut norm_sq = g.encoder.norm_sq();
    if joint {
        norm_sq += g.prototypes.iter().map(|v| v * v).sum::<f64>();
    }
    let grad_norm = norm_sq.sqrt();
    if !grad_norm.is_finite() {
        return Err(Error::InvalidState("student gradient is not finite".into()));
    }
    let clipped = grad_norm > hyper.grad_clip;
    if clipped {
        let s = hyper.grad_clip / grad_norm;
        g.encoder.scale(s);
        g.prototypes *= s;
        state.clip_events += 1;
    }
    let (lr, wd, pwd) = (hyper.lr, hyper.weight_decay, hyper.prototype_weight_decay);
    let decayed = |p: &mut f64, &g: &f64| *p -= lr * (g + wd * *p);
    let plain = |p: &mut f64, &g: &f64| *p -= lr * g;
    let s = &mut state.student;
    Zip::from(&mut s.w1).and(&g.encoder.w1).for_each(decayed);
    Zip::from(&mut s.b1).and(&g.encoder.b1).for_each(plain);
    Zip::from(&mut s.w2).and(&g.encoder.w2).for_each(decayed);
    Zip::from(&mut s.b2).and(&g.encoder.b2).for_each(plain);
    if joint {
        Zip::from(&mut state.prototypes)
            .and(&g.prototypes)
            .for_each(|p, &g| *p -= lr * (g + pwd * *p));
    }
    Ok(StepOutcome {
        loss: g.loss,
        grad_norm,
        clipped,
    })
}

/// `φ ← mφ + (1 − m)θ`.
pub fn teacher_step(state: &mut SimState, momentum: f64) -> Result<()> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::invalid(format!(
            "momentum {momentum} must be in [0, 1)"
        )));
    }
    state.teacher.ema_from(&state.student, momentum);
    Ok(())
}

/// Online mixture update on teacher latents, then `C ←` the new means.
pub fn prototype_step_decoupled(
    state: &mut SimState,
    teacher_latents: &Array2<f64>,
) -> Result<UpdateReport> {
    let gmm = state.mixture.as_mut().ok_or_else(|| {
        Error::InvalidState("prototype estimation requires the decoupled regime".into())
    })?;
    let report = gmm.update(&Batch::new(teacher_latents.clone())?)?;
    state.prototypes.assign(gmm.means());
    Ok(report)
}

/// Builds the initial state: orthogonal student, identical teacher, and
/// prototypes placed by farthest-point traversal over the teacher latents of
/// the training inputs. Both regimes start from the same prototypes.
pub fn init_state(config: &SimConfig, train: &Dataset, total_steps: u64) -> Result<SimState> {
    config.validate()?;
    let mut rng = stream(config.seed, "encoder-init");
    let student = EncoderParams::orthogonal_init(
        config.data.input_dim,
        config.hidden,
        config.d,
        config.init_gain.0,
        config.init_gain.1,
        &mut rng,
    );
    let teacher = student.clone();
    let latents = Batch::new(teacher.encode(&train.x)?)?;
    let mut gmm_config = config.gmm.clone();
    gmm_config.eta.total_steps = total_steps.max(1);
    gmm_config.rng_seed = config.seed;
    let mut init_rng = stream(config.seed, "prototype-init");
    let mix = init_mixture(
        config.k,
        config.d,
        MeanInit::FarthestPoint(&latents),
        &gmm_config,
        &mut init_rng,
    )?;
    let prototypes = mix.means.clone();
    let mixture = match config.regime {
        Regime::Decoupled => Some(OnlineGmm::new(mix, gmm_config, config.views)?),
        Regime::Joint => None,
    };
    Ok(SimState {
        regime: config.regime,
        student,
        teacher,
        prototypes,
        mixture,
        step: 0,
        clip_events: 0,
        center: Array1::zeros(config.k),
    })
}

/// One full iteration on a batch of clean inputs.
pub fn train_iteration(
    state: &mut SimState,
    config: &SimConfig,
    batch: &Array2<f64>,
    decay: (f64, f64),
    view_rng: &mut StreamRng,
) -> Result<StepOutcome> {
    let x = make_views(
        batch,
        config.views,
        config.view_noise,
        config.view_dropout,
        view_rng,
    );
    if state.regime == Regime::Decoupled {
        let h = state.teacher.encode(&x)?;
        prototype_step_decoupled(state, &h)?;
    }
    let (scores, teacher_p) = teacher_targets(state, &x, config.tau_t)?;
    let out = student_step(
        state,
        &x,
        &teacher_p,
        &StudentHyper {
            lr: config.lr,
            weight_decay: decay.0,
            prototype_weight_decay: decay.1,
            tau_s: config.tau_s,
            views: config.views,
            grad_clip: config.grad_clip,
        },
    )?;
    teacher_step(state, config.momentum)?;
    if let Some(m) = config.center_momentum {
        update_center(state, &scores, m);
    }
    state.step += 1;
    Ok(out)
}

/// Prototype matrix wrapped as a mixture state for checkpointing. The
/// decoupled regime stores the mixture itself; the joint regime stores `C`
/// with uniform weights, unit variances and no statistics.
pub fn prototype_snapshot(state: &SimState) -> MixtureState {
    match &state.mixture {
        Some(g) => g.state.clone(),
        None => {
            let (k, d) = state.prototypes.dim();
            MixtureState {
                weights: Array1::from_elem(k, 1.0 / k as f64),
                means: state.prototypes.clone(),
                variances: Array2::ones((k, d)),
                suffstats: None,
                step: state.step,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochTelemetry {
    pub epoch: usize,
    /// Mean consistency loss over the epoch's iterations; for epoch 0, the
    /// loss of the initial state over one pass without updates.
    pub loss: f64,
    /// `(ε, unique count)` over [`TELEMETRY_EPSILONS`].
    pub unique_counts: Vec<(f64, usize)>,
    pub accuracy: ProbeAccuracy,
    pub clip_events: u64,
}

pub const TELEMETRY_HEADER: &str =
    "epoch,loss,uniq_eps_0.025,uniq_eps_0.05,uniq_eps_0.1,uniq_eps_0.25,uniq_eps_0.5,acc_all,acc_head,acc_med,acc_tail";

/// Telemetry as CSV. Unique counts are integers; accuracies of empty splits
/// are written as `NaN`.
pub fn telemetry_csv(rows: &[EpochTelemetry]) -> String {
    let mut s = String::from(TELEMETRY_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    for r in rows {
        let _ = write!(s, "{},{:?}", r.epoch, r.loss);
        for (_, c) in &r.unique_counts {
            let _ = write!(s, ",{c}");
        }
        let a = &r.accuracy;
        let _ = writeln!(
            s,
            ",{:?},{:?},{:?},{:?}",
            a.all,
            opt(a.head),
            opt(a.medium),
            opt(a.tail)
        );
    }
    s
}

/// Unique counts of the current prototypes over [`TELEMETRY_EPSILONS`].
pub fn unique_counts(prototypes: &Array2<f64>) -> Result<Vec<(f64, usize)>> {
    let p = normalize_rows(prototypes)?;
    Ok(epsilon_sweep(&p, &TELEMETRY_EPSILONS)?
        .into_iter()
        .map(|r| (r.epsilon, r.unique_count))
        .collect())
}

fn probe(state: &SimState, data: &SplitData) -> Result<ProbeAccuracy> {
    let train = state.teacher.encode(&data.train.x)?;
    let test = state.teacher.encode(&data.test.x)?;
    centroid_accuracy(
        &train,
        &data.train.y,
        &test,
        &data.test.y,
        &data.class_splits,
    )
}

fn evaluation_loss(
    state: &SimState,
    config: &SimConfig,
    train: &Dataset,
    iters: usize,
) -> Result<f64> {
    let mut rng = stream(config.seed, "evaluation-views");
    let mut total = 0.0;
    for i in 0..iters {
        let idx: Vec<usize> = (i * config.batch..(i + 1) * config.batch).collect();
        let x = make_views(
            &train.rows(&idx),
            config.views,
            config.view_noise,
            config.view_dropout,
            &mut rng,
        );
        let (_, t) = teacher_targets(state, &x, config.tau_t)?;
        total += student_loss(
            &state.student,
            &state.prototypes,
            &x,
            &t,
            config.views,
            config.tau_s,
        )?;
    }
    Ok(total / iters as f64)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub telemetry: Vec<EpochTelemetry>,
    pub state: SimState,
    pub data: SplitData,
    pub telemetry_path: Option<PathBuf>,
    pub snapshot_paths: Vec<PathBuf>,
}

/// File name of the prototype snapshot taken after `epoch`.
pub fn snapshot_name(epoch: usize) -> String {
    format!("prototypes_epoch_{epoch:04}.pdgm")
}

/// Runs the full experiment. With `out_dir`, writes `telemetry.csv` and one
/// prototype snapshot per logged epoch under `snapshots/`.
pub fn run_experiment(config: &SimConfig, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    config.validate()?;
    let data = generate(&config.data, &mut stream(config.seed, "data"))?;
    let iters = config.iters_per_epoch(data.train.len());
    if iters == 0 {
        return Err(Error::invalid(format!(
            "batch size {} exceeds the {} training samples",
            config.batch,
            data.train.len()
        )));
    }
    let total = (iters * config.epochs) as u64;
    let mut state = init_state(config, &data.train, total)?;
    let schedule = |(start, end): (f64, f64)| LinearSchedule {
        start,
        end,
        total_steps: total,
    };
    let (wd, pwd) = (
        schedule(config.weight_decay),
        schedule(config.prototype_weight_decay),
    );

    let snap_dir = out_dir.map(|d| d.join("snapshots"));
    if let Some(d) = &snap_dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut snapshot_paths = Vec::new();
    let mut log =
        |state: &SimState, epoch: usize, loss: f64, clips: u64| -> Result<EpochTelemetry> {
            if let Some(d) = &snap_dir {
                let p = d.join(snapshot_name(epoch));
                write_checkpoint(&p, &prototype_snapshot(state))?;
                snapshot_paths.push(p);
            }
            Ok(EpochTelemetry {
                epoch,
                loss,
                unique_counts: unique_counts(&state.prototypes)?,
                accuracy: probe(state, &data)?,
                clip_events: clips,
            })
        };

    let mut telemetry = vec![log(
        &state,
        0,
        evaluation_loss(&state, config, &data.train, iters)?,
        0,
    )?];
    let mut order_rng = stream(config.seed, "batch-order");
    let mut view_rng = stream(config.seed, "views");
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let clips_before = state.clip_events;
        let mut loss = 0.0;
        for i in 0..iters {
            let batch = data
                .train
                .rows(&order[i * config.batch..(i + 1) * config.batch]);
            let decay = (wd.at(state.step), pwd.at(state.step));
            loss += train_iteration(&mut state, config, &batch, decay, &mut view_rng)?.loss;
        }
        let clips = state.clip_events - clips_before;
        telemetry.push(log(&state, epoch, loss / iters as f64, clips)?);
    }

    let telemetry_path = match out_dir {
        Some(d) => {
            let p = d.join("telemetry.csv");
            fs::write(&p, telemetry_csv(&telemetry)).map_err(|e| Error::io(&p, e))?;
            Some(p)
        }
        None => None,
    };
    Ok(ExperimentOutput {
        telemetry,
        state,
        data,
        telemetry_path,
        snapshot_paths,
    })
}
