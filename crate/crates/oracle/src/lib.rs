//! Independent reference implementations used by tests.
//!
//! Everything here is plain scalar code over `Vec`s. Nothing is shared with
//! the production crate; cross-checks compare the two.

use std::f64::consts::PI;
use std::fmt;

pub const MAX_K: usize = 16;
pub const MAX_D: usize = 16;
pub const MAX_N: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// Input exceeds the oracle size caps.
    TooLarge(String),
    Shape(String),
    /// The function evaluated to a non-finite value while perturbing this
    /// coordinate.
    NonFinite {
        coordinate: usize,
    },
    InvalidArgument(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooLarge(m) => write!(f, "oracle input too large: {m}"),
            OracleError::Shape(m) => write!(f, "shape mismatch: {m}"),
            OracleError::NonFinite { coordinate } => {
                write!(f, "non-finite evaluation at coordinate {coordinate}")
            }
            OracleError::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
        }
    }
}

impl std::error::Error for OracleError {}

pub type Result<T> = std::result::Result<T, OracleError>;

/// A reference value and the elementwise absolute tolerance it is meant to be
/// compared with.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub value: T,
    pub tolerance: f64,
}

impl<T> OracleResult<T> {
    fn new(value: T, tolerance: f64) -> Self {
        Self { value, tolerance }
    }
}

/// Largest elementwise absolute difference; infinite on a length mismatch.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut m = 0.0;
    for i in 0..a.len() {
        let d = (a[i] - b[i]).abs();
        if !(d <= m) {
            m = d;
        }
    }
    m
}

// ---------------------------------------------------------------- batch EM

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    pub state: EmState,
    /// Components whose total responsibility was zero. Their parameters are
    /// copied through unchanged and their weight is zero.
    pub empty: Vec<usize>,
}

/// One textbook EM step for a diagonal Gaussian mixture.
pub fn batch_em_step(
    points: &[Vec<f64>],
    state: &EmState,
    variance_floor: f64,
) -> Result<OracleResult<EmStep>> {
    let n = points.len();
    let k = state.weights.len();
    if n == 0 || k == 0 {
        return Err(OracleError::Shape("no points or no components".into()));
    }
    let d = points[0].len();
    if n > MAX_N || k > MAX_K || d > MAX_D {
        return Err(OracleError::TooLarge(format!("N={n}, K={k}, D={d}")));
    }
    if state.means.len() != k || state.variances.len() != k {
        return Err(OracleError::Shape("state rows do not match K".into()));
    }
    for c in 0..k {
        if state.means[c].len() != d || state.variances[c].len() != d {
            return Err(OracleError::Shape(format!("component {c} has wrong width")));
        }
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(OracleError::Shape(format!(
                "point {i} has width {}",
                p.len()
            )));
        }
    }

    // E-step in log space.
    let mut resp = vec![vec![0.0; k]; n];
    for i in 0..n {
        let mut logp = vec![0.0; k];
        for c in 0..k {
            let mut s = state.weights[c].ln();
            for j in 0..d {
                let v = state.variances[c][j];
                let diff = points[i][j] - state.means[c][j];
                s -= 0.5 * ((2.0 * PI * v).ln() + diff * diff / v);
            }
            logp[c] = s;
        }
        let mut top = f64::NEG_INFINITY;
        for c in 0..k {
            if logp[c] > top {
                top = logp[c];
            }
        }
        let mut total = 0.0;
        for c in 0..k {
            total += (logp[c] - top).exp();
        }
        for c in 0..k {
            resp[i][c] = (logp[c] - top).exp() / total;
        }
    }

    // M-step, two-pass variances.
    let mut out = state.clone();
    let mut empty = Vec::new();
    let mut mass_total = 0.0;
    for c in 0..k {
        let mut mass = 0.0;
        for i in 0..n {
            mass += resp[i][c];
        }
        if !(mass > 0.0) {
            empty.push(c);
            out.weights[c] = 0.0;
            continue;
        }
        mass_total += mass;
        out.weights[c] = mass;
        for j in 0..d {
            let mut m = 0.0;
            for i in 0..n {
                m += resp[i][c] * points[i][j];
            }
            m /= mass;
            let mut v = 0.0;
            for i in 0..n {
                let diff = points[i][j] - m;
                v += resp[i][c] * diff * diff;
            }
            v /= mass;
            out.means[c][j] = m;
            out.variances[c][j] = if v > variance_floor {
                v
            } else {
                variance_floor
            };
        }
    }
    for c in 0..k {
        out.weights[c] /= mass_total;
    }
    Ok(OracleResult::new(EmStep { state: out, empty }, 1e-9))
}

// ------------------------------------------------------ finite differences

/// Central-difference gradient of `f` at `params`.
pub fn finite_diff<F>(mut f: F, params: &[f64], step: f64) -> Result<OracleResult<Vec<f64>>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(OracleError::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    let mut x = params.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x);
        x[i] = orig - step;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(OracleError::NonFinite { coordinate: i });
        }
        grad[i] = (up - down) / (2.0 * step);
    }
    // Truncation error of the central difference is O(step²).
    Ok(OracleResult::new(grad, step * step))
}

// ------------------------------------------------------- greedy uniqueness

/// Greedy first-fit count of unique unit vectors: a row joins the first
/// earlier representative with `‖v − c‖²/2 < ε`, else becomes one.
pub fn greedy_unique_reference(protos: &[Vec<f64>], epsilon: f64) -> Result<usize> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(OracleError::InvalidArgument(format!("epsilon {epsilon}")));
    }
    if protos.is_empty() {
        return Err(OracleError::Shape("no prototypes".into()));
    }
    let d = protos[0].len();
    for (i, p) in protos.iter().enumerate() {
        if p.len() != d {
            return Err(OracleError::Shape(format!("row {i} has width {}", p.len())));
        }
        let mut sq = 0.0;
        for v in p {
            sq += v * v;
        }
        if (sq.sqrt() - 1.0).abs() > 1e-9 {
            return Err(OracleError::InvalidArgument(format!(
                "row {i} is not unit norm"
            )));
        }
    }
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..protos.len() {
        let mut covered = false;
        for &r in &reps {
            let mut sq = 0.0;
            for j in 0..d {
                let diff = protos[r][j] - protos[i][j];
                sq += diff * diff;
            }
            if sq / 2.0 < epsilon {
                covered = true;
                break;
            }
        }
        if !covered {
            reps.push(i);
        }
    }
    Ok(reps.len())
}

// ------------------------------------------------------- softmax / losses

pub fn softmax(scores: &[f64], tau: f64) -> Vec<f64> {
    let mut top = f64::NEG_INFINITY;
    for &s in scores {
        if s / tau > top {
            top = s / tau;
        }
    }
    let mut e = Vec::with_capacity(scores.len());
    let mut total = 0.0;
    for &s in scores {
        let v = (s / tau - top).exp();
        total += v;
        e.push(v);
    }
    for v in e.iter_mut() {
        *v /= total;
    }
    e
}

/// `−Σ_k t_k ln p_k`.
pub fn cross_entropy(target: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..target.len() {
        if target[k] != 0.0 {
            s -= target[k] * p[k].ln();
        }
    }
    s
}

// -------------------------------------------------------- eigen / Jacobi

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors (one `Vec` per eigenvalue).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    for (i, r) in a.iter().enumerate() {
        if r.len() != n {
            return Err(OracleError::Shape(format!("row {i} of a {n}×{n} matrix")));
        }
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i][j] * m[i][j];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[y][y].total_cmp(&m[x][x]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    Ok((values, vectors))
}

// ------------------------------------------------------------------ KDEs

/// Gaussian KDE value at every `(xs[i], ys[j])`, as `out[i][j]`.
pub fn gaussian_kde2d_reference(
    points: &[[f64; 2]],
    xs: &[f64],
    ys: &[f64],
    h: f64,
) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; ys.len()]; xs.len()];
    for i in 0..xs.len() {
        for j in 0..ys.len() {
            let mut s = 0.0;
            for p in points {
                let dx = xs[i] - p[0];
                let dy = ys[j] - p[1];
                s += (-(dx * dx + dy * dy) / (2.0 * h * h)).exp() / (2.0 * PI * h * h);
            }
            out[i][j] = s / points.len() as f64;
        }
    }
    out
}

/// `I₀(κ) = (1/π) ∫₀^π exp(κ cos θ) dθ` by the trapezoid rule, which
/// converges geometrically for this periodic integrand. Returned scaled by
/// `e^{−κ}`.
pub fn bessel_i0_scaled_quadrature(kappa: f64) -> f64 {
    let m = 4096;
    let h = PI / m as f64;
    let mut s = 0.0;
    for i in 0..=m {
        let w = if i == 0 || i == m { 0.5 } else { 1.0 };
        s += w * (kappa * ((i as f64 * h).cos() - 1.0)).exp();
    }
    s * h / PI
}

/// von Mises mixture density at each angle in `alphas`.
pub fn vmf_density_reference(centres: &[f64], kappa: f64, alphas: &[f64]) -> Vec<f64> {
    let z = 2.0 * PI * bessel_i0_scaled_quadrature(kappa);
    alphas
        .iter()
        .map(|&a| {
            let mut s = 0.0;
            for &c in centres {
                s += (kappa * ((a - c).cos() - 1.0)).exp();
            }
            s / (z * centres.len() as f64)
        })
        .collect()
}

// ------------------------------------------------------------- matching

/// Minimum-cost perfect matching of a square cost matrix by trying every
/// permutation. `perm[i]` is the column assigned to row `i`.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 || n > 9 {
        return Err(OracleError::TooLarge(format!("{n} rows (1..=9 supported)")));
    }
    if cost.iter().any(|r| r.len() != n) {
        return Err(OracleError::Shape("cost matrix must be square".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (perm.clone(), f64::INFINITY);
    // Heap's algorithm.
    let mut c = vec![0usize; n];
    let score = |p: &[usize]| (0..n).map(|i| cost[i][p[i]]).sum::<f64>();
    best.1 = score(&perm);
    best.0 = perm.clone();
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = score(&perm);
            if s < best.1 {
                best = (perm.clone(), s);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_square() {
        let g = finite_diff(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g.value[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_constant() {
        let g = finite_diff(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert!(g.value.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn finite_diff_names_coordinate() {
        let e = finite_diff(
            |x| if x[1] > 1.0 { f64::NAN } else { x[0] },
            &[0.0, 1.0],
            1e-3,
        )
        .unwrap_err();
        assert_eq!(e, OracleError::NonFinite { coordinate: 1 });
        assert!(finite_diff(|x| x[0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn em_single_component_is_sample_moments() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![2.0, 5.0]];
        let st = EmState {
            weights: vec![1.0],
            means: vec![vec![0.0, 0.0]],
            variances: vec![vec![1.0, 1.0]],
        };
        let out = batch_em_step(&pts, &st, 1e-6).unwrap().value;
        assert!(out.empty.is_empty());
        assert!(max_abs_diff(&out.state.means[0], &[2.0, 3.0]) < 1e-12);
        assert!(max_abs_diff(&out.state.variances[0], &[2.0 / 3.0, 2.0]) < 1e-12);
        assert_eq!(out.state.weights, vec![1.0]);
    }

    #[test]
    fn em_separates_two_clusters() {
        // Deterministic jitter of size ≤ 0.01 around ±1.
        let mut pts = Vec::new();
        for i in 0..40 {
            let j = 0.01 * ((i * 37 % 17) as f64 / 8.0 - 1.0);
            let centre = if i % 2 == 0 { 1.0 } else { -1.0 };
            pts.push(vec![centre + j, -centre + 0.5 * j]);
        }
        let mut st = EmState {
            weights: vec![0.5, 0.5],
            means: vec![vec![0.3, 0.1], vec![-0.2, 0.2]],
            variances: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        for _ in 0..20 {
            st = batch_em_step(&pts, &st, 1e-6).unwrap().value.state;
        }
        assert!(max_abs_diff(&st.means[0], &[1.0, -1.0]) < 0.05);
        assert!(max_abs_diff(&st.means[1], &[-1.0, 1.0]) < 0.05);
    }

    #[test]
    fn em_flags_empty_component() {
        let pts = vec![vec![0.0], vec![0.1]];
        let st = EmState {
            weights: vec![1.0, 0.0],
            means: vec![vec![0.0], vec![5.0]],
            variances: vec![vec![1.0], vec![1.0]],
        };
        let out = batch_em_step(&pts, &st, 1e-6).unwrap().value;
        assert_eq!(out.empty, vec![1]);
        assert_eq!(out.state.means[1], vec![5.0]);
    }

    #[test]
    fn em_caps() {
        let pts = vec![vec![0.0; 17]];
        let st = EmState {
            weights: vec![1.0],
            means: vec![vec![0.0; 17]],
            variances: vec![vec![1.0; 17]],
        };
        assert!(matches!(
            batch_em_step(&pts, &st, 1e-6),
            Err(OracleError::TooLarge(_))
        ));
    }

    #[test]
    fn greedy_reference_basics() {
        let s = 0.5f64.sqrt();
        let rows = vec![vec![1.0, 0.0], vec![s, s], vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(greedy_unique_reference(&rows, 0.0).unwrap(), 4);
        assert_eq!(greedy_unique_reference(&rows, 0.025).unwrap(), 3);
        assert_eq!(greedy_unique_reference(&rows, 0.5).unwrap(), 2);
        assert_eq!(greedy_unique_reference(&rows, 1.01).unwrap(), 1);
        assert!(greedy_unique_reference(&[vec![2.0, 0.0]], 0.1).is_err());
    }

    #[test]
    fn softmax_and_cross_entropy() {
        let p = softmax(&[0.0, 0.0, 0.0, 0.0], 0.1);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!((cross_entropy(&p, &p) - 4f64.ln()).abs() < 1e-15);
        let q = softmax(&[1000.0, 0.0], 1.0);
        assert_eq!(q, vec![1.0, 0.0]);
    }

    #[test]
    fn jacobi_diagonalises() {
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ];
        let (vals, vecs) = jacobi_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for (lambda, v) in vals.iter().zip(&vecs) {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * v[j]).sum();
                assert!((av - lambda * v[i]).abs() < 1e-12);
            }
        }
        let trace: f64 = vals.iter().sum();
        assert!((trace - 9.0).abs() < 1e-12);
    }

    #[test]
    fn i0_quadrature() {
        assert!(
            (bessel_i0_scaled_quadrature(1.0) * 1f64.exp() - 1.266_065_877_752_008_4).abs() < 1e-13
        );
        assert!((bessel_i0_scaled_quadrature(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn assignment_small() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let (perm, total) = brute_force_assignment(&cost).unwrap();
        assert_eq!(perm, vec![1, 0, 2]);
        assert_eq!(total, 5.0);
    }
}
