//! Softmax prototype assignments and the cross-view consistency loss.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "temperature {tau} must be positive"
        )))
    }
}

/// Stable softmax of `scores / tau` in place.
fn softmax_inplace(row: &mut [f64], tau: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / tau));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v / tau - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `softmax(h Cᵀ / τ)` for one latent vector.
pub fn assign(h: ArrayView1<'_, f64>, protos: &Array2<f64>, tau: f64) -> Result<Array1<f64>> {
    check_tau(tau)?;
    if h.len() != protos.ncols() {
        return Err(Error::invalid(format!(
            "latent has dimension {}, prototypes have {}",
            h.len(),
            protos.ncols()
        )));
    }
    let mut p = protos.dot(&h);
    softmax_inplace(p.as_slice_mut().expect("contiguous"), tau);
    Ok(p)
}

/// Row-wise [`assign`].
pub fn assign_rows(h: &Array2<f64>, protos: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    check_tau(tau)?;
    if h.ncols() != protos.ncols() {
        return Err(Error::invalid(format!(
            "latents have dimension {}, prototypes have {}",
            h.ncols(),
            protos.ncols()
        )));
    }
    softmax_rows(&h.dot(&protos.t()), tau)
}

/// Row-wise `softmax(scores / τ)`.
pub fn softmax_rows(scores: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    check_tau(tau)?;
    let mut p = scores.as_standard_layout().into_owned();
    for mut r in p.rows_mut() {
        softmax_inplace(r.as_slice_mut().expect("contiguous"), tau);
    }
    Ok(p)
}

/// `H(t, s) = −Σ t_k log s_k` and its gradient `(s − t)/τ_s` with respect to
/// the student scores `hCᵀ`.
pub fn consistency_loss(
    student_p: ArrayView1<'_, f64>,
    teacher_p: ArrayView1<'_, f64>,
    tau_s: f64,
) -> Result<(f64, Array1<f64>)> {
    check_tau(tau_s)?;
    if student_p.len() != teacher_p.len() {
        return Err(Error::invalid(
            "student and teacher distributions differ in length",
        ));
    }
    let loss = student_p
        .iter()
        .zip(teacher_p)
        .filter(|(_, &t)| t > 0.0)
        .map(|(&s, &t)| -t * s.ln())
        .sum();
    let grad = (&student_p - &teacher_p) / tau_s;
    Ok((loss, grad))
}

/// Cross-entropy averaged over samples and ordered view pairs `(a, b)`, `a ≠ b`,
/// with the teacher distribution of view `a` as target for the student on view
/// `b`. Rows are view-major: view `v` occupies rows `v·n .. (v+1)·n`.
///
/// Returns the loss and its gradient with respect to the student scores
/// `hCᵀ` (before the temperature).
pub fn multiview_consistency(
    student_scores: &Array2<f64>,
    teacher_p: &Array2<f64>,
    views: usize,
    tau_s: f64,
) -> Result<(f64, Array2<f64>)> {
    check_tau(tau_s)?;
    if views < 2 {
        return Err(Error::invalid("need at least two views"));
    }
    if student_scores.dim() != teacher_p.dim() {
        return Err(Error::invalid(
            "student scores and teacher targets differ in shape",
        ));
    }
    let rows = student_scores.nrows();
    if rows % views != 0 || rows == 0 {
        return Err(Error::invalid(format!(
            "{rows} rows do not split into {views} views"
        )));
    }
    let n = rows / views;
    let k = student_scores.ncols();
    let pairs = (views * (views - 1)) as f64;
    let scale = 1.0 / (pairs * n as f64);

    // log-softmax of the student, computed from scores
    let mut log_s = student_scores.mapv(|v| v / tau_s);
    for mut r in log_s.rows_mut() {
        let max = r.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + r.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        r.mapv_inplace(|v| v - lse);
    }

    let view = |m: &Array2<f64>, v: usize| m.slice(s![v * n..(v + 1) * n, ..]).to_owned();
    let mut t_total = Array2::<f64>::zeros((n, k));
    for a in 0..views {
        t_total += &teacher_p.slice(s![a * n..(a + 1) * n, ..]);
    }
    let others = (views - 1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros((rows, k));
    for b in 0..views {
        // targets from every other view of the same sample
        let t_other = &t_total - &teacher_p.slice(s![b * n..(b + 1) * n, ..]);
        let ls = view(&log_s, b);
        loss -= (&t_other * &ls).sum();
        let g = (ls.mapv(f64::exp) * others - &t_other) * (scale / tau_s);
        grad.slice_mut(s![b * n..(b + 1) * n, ..]).assign(&g);
    }
    Ok((loss * scale, grad))
}
