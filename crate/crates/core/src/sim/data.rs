//! Synthetic labelled data: Gaussian classes around random unit directions,
//! with balanced or power-law class sizes, and noisy views.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataMode {
    Balanced,
    LongTail,
}

impl DataMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DataMode::Balanced => "balanced",
            DataMode::LongTail => "longtail",
        }
    }
}

impl std::str::FromStr for DataMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(DataMode::Balanced),
            "longtail" | "long-tail" => Ok(DataMode::LongTail),
            _ => Err(Error::invalid(format!("unknown data mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Head,
    Medium,
    Tail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub mode: DataMode,
    pub n_classes: usize,
    pub input_dim: usize,
    /// Training samples per class in balanced mode.
    pub per_class: usize,
    /// Class `c` (0-based) gets a share proportional to `(c + 1)^−exponent`.
    pub longtail_exponent: f64,
    /// Approximate training-set size in long-tail mode.
    pub longtail_total: usize,
    /// Norm of the class centres.
    pub radius: f64,
    /// Per-coordinate standard deviation around a centre.
    pub spread: f64,
    /// Held-out samples per class (always balanced).
    pub test_per_class: usize,
    /// Classes with more than this many training samples are head classes.
    pub head_above: usize,
    /// Classes with at most this many training samples are tail classes.
    pub tail_at_most: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            mode: DataMode::Balanced,
            n_classes: 8,
            input_dim: 16,
            per_class: 512,
            longtail_exponent: 1.5,
            longtail_total: 5000,
            radius: 1.0,
            spread: 1.0,
            test_per_class: 64,
            head_above: 100,
            tail_at_most: 20,
        }
    }
}

impl DataSpec {
    /// 40 power-law classes with tighter clusters than the balanced default,
    /// so that per-split probe accuracy stays well above chance.
    pub fn long_tail() -> Self {
        Self {
            mode: DataMode::LongTail,
            n_classes: 40,
            spread: 0.25,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.input_dim == 0 {
            return Err(Error::invalid(
                "data needs at least one class and one input dimension",
            ));
        }
        if self.tail_at_most >= self.head_above {
            return Err(Error::invalid(format!(
                "tail threshold {} must be below head threshold {}",
                self.tail_at_most, self.head_above
            )));
        }
        if !(self.spread >= 0.0 && self.radius >= 0.0) {
            return Err(Error::invalid("radius and spread must be nonnegative"));
        }
        match self.mode {
            DataMode::Balanced if self.per_class == 0 => {
                Err(Error::invalid("per-class sample count must be positive"))
            }
            DataMode::LongTail if !(self.longtail_exponent >= 0.0) || self.longtail_total == 0 => {
                Err(Error::invalid(
                    "long-tail exponent must be >= 0 and total positive",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Training-set size of each class (each at least 1).
    pub fn class_sizes(&self) -> Vec<usize> {
        match self.mode {
            DataMode::Balanced => vec![self.per_class; self.n_classes],
            DataMode::LongTail => {
                let shares: Vec<f64> = (0..self.n_classes)
                    .map(|c| ((c + 1) as f64).powf(-self.longtail_exponent))
                    .collect();
                let total: f64 = shares.iter().sum();
                let top = self.longtail_total as f64 / total;
                shares
                    .iter()
                    .map(|s| ((top * s).round() as usize).max(1))
                    .collect()
            }
        }
    }

    pub fn split_of(&self, count: usize) -> Split {
        if count > self.head_above {
            Split::Head
        } else if count > self.tail_at_most {
            Split::Medium
        } else {
            Split::Tail
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.x.select(ndarray::Axis(0), idx)
    }
}

#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
    pub centers: Array2<f64>,
    /// Training samples per class.
    pub class_counts: Vec<usize>,
    pub class_splits: Vec<Split>,
}

fn gaussian_row<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Array1<f64> {
    (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn sample_classes<R: Rng + ?Sized>(
    centers: &Array2<f64>,
    sizes: &[usize],
    spread: f64,
    rng: &mut R,
) -> Dataset {
    let d = centers.ncols();
    let n: usize = sizes.iter().sum();
    let mut x = Array2::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    let mut row = 0;
    for (c, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let noise = gaussian_row(d, rng);
            x.row_mut(row)
                .assign(&(&centers.row(c) + &(noise * spread)));
            y.push(c);
            row += 1;
        }
    }
    Dataset { x, y }
}

pub fn generate<R: Rng + ?Sized>(layout: &DataSpec, rng: &mut R) -> Result<SplitData> {
    layout.validate()?;
    let mut centers = Array2::zeros((layout.n_classes, layout.input_dim));
    for mut c in centers.rows_mut() {
        let v = loop {
            let v = gaussian_row(layout.input_dim, rng);
            let n = v.dot(&v).sqrt();
            if n > 1e-12 {
                break v / n;
            }
        };
        c.assign(&(v * layout.radius));
    }
    let class_counts = layout.class_sizes();
    let train = sample_classes(&centers, &class_counts, layout.spread, rng);
    let test = sample_classes(
        &centers,
        &vec![layout.test_per_class; layout.n_classes],
        layout.spread,
        rng,
    );
    let class_splits = class_counts.iter().map(|&c| layout.split_of(c)).collect();
    Ok(SplitData {
        train,
        test,
        centers,
        class_counts,
        class_splits,
    })
}

/// `views` perturbed copies of `x`, stacked view-major. Each copy adds
/// `N(0, noise²)` to every coordinate and then zeroes each coordinate with
/// probability `dropout`, unless that would zero the whole row.
pub fn make_views<R: Rng + ?Sized>(
    x: &Array2<f64>,
    views: usize,
    noise: f64,
    dropout: f64,
    rng: &mut R,
) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n * views, d));
    let (mut vals, mut keep) = (vec![0.0; d], vec![false; d]);
    for v in 0..views {
        for i in 0..n {
            for j in 0..d {
                vals[j] = x[[i, j]] + noise * rng.sample::<f64, _>(StandardNormal);
                keep[j] = rng.random::<f64>() >= dropout;
            }
            // A fully dropped row would carry no signal; it is kept whole.
            let any = keep.iter().any(|&k| k);
            let mut r = out.row_mut(v * n + i);
            for j in 0..d {
                r[j] = if keep[j] || !any { vals[j] } else { 0.0 };
            }
        }
    }
    out
}
