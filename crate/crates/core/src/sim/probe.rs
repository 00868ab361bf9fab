//! Nearest-class-centroid accuracy on frozen features.

use ndarray::Array2;

use super::data::Split;
use crate::error::{Error, Result};

/// Accuracy overall and per class-frequency split; a split with no classes
/// has no accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeAccuracy {
    pub all: f64,
    pub head: Option<f64>,
    pub medium: Option<f64>,
    pub tail: Option<f64>,
}

/// Class centroids from `train`, then each test row is assigned to the
/// centroid with the largest cosine similarity (ties go to the lower class).
pub fn centroid_accuracy(
    train: &Array2<f64>,
    train_y: &[usize],
    test: &Array2<f64>,
    test_y: &[usize],
    class_splits: &[Split],
) -> Result<ProbeAccuracy> {
    let n_classes = class_splits.len();
    let d = train.ncols();
    if train.nrows() != train_y.len() || test.nrows() != test_y.len() || test.ncols() != d {
        return Err(Error::invalid(
            "probe features and labels disagree in shape",
        ));
    }
    if test_y.is_empty() {
        return Err(Error::invalid("probe needs at least one test sample"));
    }
    let mut centroids = Array2::<f64>::zeros((n_classes, d));
    let mut counts = vec![0usize; n_classes];
    for (row, &y) in train.rows().into_iter().zip(train_y) {
        if y >= n_classes {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        let mut c = centroids.row_mut(y);
        c += &row;
        counts[y] += 1;
    }
    for (mut c, &n) in centroids.rows_mut().into_iter().zip(&counts) {
        let norm = c.dot(&c).sqrt();
        if n == 0 || norm == 0.0 {
            c.fill(0.0);
        } else {
            c /= norm;
        }
    }
    let scores = test.dot(&centroids.t());
    let mut hit = [0usize; 4];
    let mut seen = [0usize; 4];
    for (s, &y) in scores.rows().into_iter().zip(test_y) {
        if y >= n_classes {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        let pred = s
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                if v > best.1 {
                    (k, v)
                } else {
                    best
                }
            })
            .0;
        let bucket = match class_splits[y] {
            Split::Head => 1,
            Split::Medium => 2,
            Split::Tail => 3,
        };
        let ok = (pred == y) as usize;
        for b in [0, bucket] {
            hit[b] += ok;
            seen[b] += 1;
        }
    }
    let frac = |b: usize| (seen[b] > 0).then(|| hit[b] as f64 / seen[b] as f64);
    Ok(ProbeAccuracy {
        all: frac(0).expect("nonempty test set"),
        head: frac(1),
        medium: frac(2),
        tail: frac(3),
    })
}
