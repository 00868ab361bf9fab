//! Planar views of a prototype set: PCA to two dimensions, a Gaussian KDE on
//! the plane and a von Mises–Fisher KDE over the polar angle.

use std::f64::consts::PI;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::collapse::PrototypeMatrix;
use crate::error::{Error, Result};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;
pub const ANGLE_SAMPLES: usize = 1024;
pub const KDE2D_HEADER: &str = "x_grid,y_grid,prob";
pub const ANGULAR_HEADER: &str = "x,prob";

/// Points with a smaller norm have no defined angle.
const MIN_POINT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    /// K×2 coordinates in the principal basis.
    pub points: Array2<f64>,
    /// Variance along each of the two directions.
    pub explained_variance: (f64, f64),
    /// Total variance of the centred rows.
    pub total_variance: f64,
    pub mean: Array1<f64>,
    /// D×2, orthonormal columns.
    pub basis: Array2<f64>,
}

impl Projection2D {
    pub fn explained_ratio(&self) -> (f64, f64) {
        let t = self.total_variance;
        (self.explained_variance.0 / t, self.explained_variance.1 / t)
    }
}

/// Projects the rows of `protos` (as stored) onto their top two principal
/// directions.
pub fn pca_project(protos: &PrototypeMatrix) -> Result<Projection2D> {
    pca_project_rows(protos.rows().view())
}

pub fn pca_project_rows(x: ArrayView2<'_, f64>) -> Result<Projection2D> {
    let (k, d) = x.dim();
    if k < 3 {
        return Err(Error::DegenerateRank(format!(
            "PCA needs at least 3 rows, got {k}"
        )));
    }
    if d < 2 {
        return Err(Error::DegenerateRank(format!("dimension {d} < 2")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in PCA input"));
    }
    let mean = x.mean_axis(Axis(0)).expect("k >= 3");
    let centred = &x - &mean;
    let mut cov = centred.t().dot(&centred) / k as f64;
    let total_variance = cov.diag().sum();

    let mut basis = Array2::zeros((d, 2));
    let mut values = [0.0; 2];
    for c in 0..2 {
        let (lambda, v) = power_iteration(&cov);
        // Relative to the total so that scaling the input does not matter.
        if !(lambda > 1e-12 * total_variance) || total_variance <= 0.0 {
            return Err(Error::DegenerateRank(format!(
                "centred rows have rank {c} (eigenvalue {lambda:e})"
            )));
        }
        for i in 0..d {
            for j in 0..d {
                cov[[i, j]] -= lambda * v[i] * v[j];
            }
        }
        values[c] = lambda;
        basis.column_mut(c).assign(&v);
    }
    let points = centred.dot(&basis);
    Ok(Projection2D {
        points,
        explained_variance: (values[0], values[1]),
        total_variance,
        mean,
        basis,
    })
}

/// Dominant eigenpair of a symmetric PSD matrix, with the sign fixed so the
/// largest-magnitude coordinate is positive.
fn power_iteration(a: &Array2<f64>) -> (f64, Array1<f64>) {
    let d = a.nrows();
    // Fixed, generic start vector: the golden-ratio sequence has no exact
    // orthogonality to a coordinate-aligned eigenvector.
    let mut v: Array1<f64> =
        Array1::from_iter((0..d).map(|i| 0.5 + ((i + 1) as f64 * 0.618_033_988_749_895).fract()));
    v /= v.dot(&v).sqrt();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = a.dot(&v);
        let n = w.dot(&w).sqrt();
        if n == 0.0 {
            return (0.0, v);
        }
        let next = w / n;
        let diff = (&next - &v).mapv(f64::abs).fold(0.0f64, |m, &x| m.max(x));
        v = next;
        lambda = v.dot(&a.dot(&v));
        if diff < POWER_TOL {
            break;
        }
    }
    let lead = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &x)| {
            if x.abs() > bv {
                (i, x.abs())
            } else {
                (bi, bv)
            }
        })
        .0;
    if v[lead] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    (lambda, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    /// Samples per axis, endpoints included.
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: -1.1,
            hi: 1.1,
            n: 128,
        }
    }
}

impl GridSpec {
    pub fn coords(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.n)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Scott-style bandwidth: `K^(−1/6)` times the root mean per-axis variance.
pub fn scott_bandwidth(points: &Array2<f64>) -> Result<f64> {
    let k = points.nrows();
    if k < 2 || points.ncols() != 2 {
        return Err(Error::invalid("bandwidth needs at least 2 planar points"));
    }
    let var = points.var_axis(Axis(0), 1.0);
    let sigma = ((var[0] + var[1]) / 2.0).sqrt();
    let h = sigma * (k as f64).powf(-1.0 / 6.0);
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::invalid(format!(
            "points give a non-positive bandwidth {h}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `density[[i, j]]` is the value at `(x[i], y[j])`.
    pub density: Array2<f64>,
    pub bandwidth: f64,
}

impl KdeGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(KDE2D_HEADER);
        out.push('\n');
        for (i, x) in self.x.iter().enumerate() {
            for (j, y) in self.y.iter().enumerate() {
                let _ = writeln!(out, "{x:?},{y:?},{:?}", self.density[[i, j]]);
            }
        }
        out
    }
}

/// `density(g) = (1/K) Σ_i N(g; p_i, h²I)` on a square grid.
pub fn gaussian_kde2d(points: &Array2<f64>, grid: &GridSpec, bandwidth: f64) -> Result<KdeGrid> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::invalid(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if points.ncols() != 2 || points.nrows() == 0 {
        return Err(Error::invalid(format!(
            "expected a nonempty K×2 point set, got {:?}",
            points.dim()
        )));
    }
    let coords = grid.coords();
    let k = points.nrows() as f64;
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let norm = 1.0 / (2.0 * PI * bandwidth * bandwidth * k);
    let n = coords.len();
    let mut density = Array2::zeros((n, n));
    for (i, &gx) in coords.iter().enumerate() {
        for (j, &gy) in coords.iter().enumerate() {
            let s: f64 = points
                .rows()
                .into_iter()
                .map(|p| {
                    let (dx, dy) = (gx - p[0], gy - p[1]);
                    (-(dx * dx + dy * dy) * inv).exp()
                })
                .sum();
            density[[i, j]] = s * norm;
        }
    }
    Ok(KdeGrid {
        x: coords.clone(),
        y: coords,
        density,
        bandwidth,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularKde {
    /// Uniform samples over `[−π, π]`, endpoints included.
    pub angles: Vec<f64>,
    pub density: Vec<f64>,
    pub kappa: f64,
    /// Points dropped for having (near) zero length.
    pub skipped: usize,
}

impl AngularKde {
    /// Trapezoid rule over the sample grid.
    pub fn integral(&self) -> f64 {
        self.angles
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(a, p)| (a[1] - a[0]) * (p[0] + p[1]) / 2.0)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(ANGULAR_HEADER);
        out.push('\n');
        for (a, p) in self.angles.iter().zip(&self.density) {
            let _ = writeln!(out, "{a:?},{p:?}");
        }
        out
    }
}

/// `e^{−x} I₀(x)` for `x ≥ 0`: power series up to 500, asymptotic beyond.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let x = x.abs();
    if x <= 500.0 {
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let t = 1.0 / (8.0 * x);
        let series = 1.0 + t * (1.0 + t * (9.0 / 2.0 + t * (225.0 / 6.0 + t * 11025.0 / 24.0)));
        series / (2.0 * PI * x).sqrt()
    }
}

/// von Mises KDE over the polar angles of planar points:
/// `density(α) = (1/K) Σ_i exp(κ cos(α − α_i)) / (2π I₀(κ))`.
pub fn vmf_kde_angles(points: &Array2<f64>, kappa: f64, n_samples: usize) -> Result<AngularKde> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    if points.ncols() != 2 {
        return Err(Error::invalid(format!(
            "expected K×2 points, got {:?}",
            points.dim()
        )));
    }
    if n_samples < 2 {
        return Err(Error::invalid("need at least 2 angle samples"));
    }
    let mut centres = Vec::with_capacity(points.nrows());
    let mut skipped = 0;
    for p in points.rows() {
        if p[0].hypot(p[1]) < MIN_POINT_NORM {
            skipped += 1;
        } else {
            centres.push(p[1].atan2(p[0]));
        }
    }
    if centres.is_empty() {
        return Err(Error::invalid("every point has zero length"));
    }
    let angles = linspace(-PI, PI, n_samples);
    // exp(κ cos Δ) / I₀(κ) = exp(κ (cos Δ − 1)) / (e^{−κ} I₀(κ)).
    let norm = 1.0 / (2.0 * PI * bessel_i0_scaled(kappa) * centres.len() as f64);
    let density = angles
        .iter()
        .map(|&a| {
            centres
                .iter()
                .map(|&c| (kappa * ((a - c).cos() - 1.0)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(AngularKde {
        angles,
        density,
        kappa,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn i0_known_values() {
        // I0(1), I0(20) from tables.
        assert!((bessel_i0_scaled(1.0) * 1f64.exp() - 1.266_065_877_752_008_4).abs() < 1e-14);
        let i20 = 4.355_828_255_955_353e7;
        assert!((bessel_i0_scaled(20.0) * 20f64.exp() / i20 - 1.0).abs() < 1e-12);
        assert_eq!(bessel_i0_scaled(0.0), 1.0);
    }

    #[test]
    fn i0_branches_agree_at_switch() {
        let a = bessel_i0_scaled(500.0);
        let t = 1.0 / 4000.0;
        let asym = (1.0 + t * (1.0 + t * (4.5 + t * 37.5))) / (2.0 * PI * 500.0f64).sqrt();
        assert!((a / asym - 1.0).abs() < 1e-10);
    }

    #[test]
    fn line_with_noise_is_one_dimensional() {
        let x = Array2::from_shape_fn((40, 5), |(i, j)| {
            let t = i as f64 / 10.0;
            let noise = 1e-4 * (((i * 7 + j * 3) % 11) as f64 - 5.0);
            t * [1.0, -2.0, 0.5, 0.0, 3.0][j] + noise
        });
        let p = pca_project_rows(x.view()).unwrap();
        assert!(p.explained_ratio().0 > 0.99);
    }

    #[test]
    fn planar_data_reconstructs() {
        let u = array![1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 2.0];
        let v = array![0.0, 1.0, 3.0, 1.0, 0.0, -1.0, 0.0, 0.0, 2.0, 0.0];
        let x = Array2::from_shape_fn((30, 10), |(i, j)| {
            let (a, b) = ((i as f64 * 0.37).sin(), (i as f64 * 0.91).cos() * 0.6);
            1.0 + a * u[j] + b * v[j]
        });
        let p = pca_project_rows(x.view()).unwrap();
        let recon = p.points.dot(&p.basis.t()) + &p.mean;
        let err = (&recon - &x).mapv(f64::abs).fold(0.0f64, |m, &e| m.max(e));
        assert!(err < 1e-8, "{err}");
        let g = p.basis.t().dot(&p.basis);
        assert!((&g - &Array2::<f64>::eye(2)).mapv(f64::abs).sum() < 1e-9);
    }

    #[test]
    fn rank_one_is_degenerate() {
        let x = Array2::from_shape_fn((6, 3), |(i, j)| i as f64 * [1.0, 2.0, 3.0][j]);
        assert!(matches!(
            pca_project_rows(x.view()),
            Err(Error::DegenerateRank(_))
        ));
        assert!(pca_project_rows(Array2::<f64>::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn sign_convention() {
        let x = array![[3.0, 0.1], [-3.0, -0.1], [0.0, 1.0], [0.0, -1.0]];
        let p = pca_project_rows(x.view()).unwrap();
        for c in p.basis.columns() {
            let lead = c
                .iter()
                .cloned()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn kde_single_point_peaks_there() {
        let pts = array![[0.3, -0.4]];
        let grid = GridSpec {
            lo: -1.0,
            hi: 1.0,
            n: 21,
        };
        let kde = gaussian_kde2d(&pts, &grid, 0.2).unwrap();
        let (mut bi, mut bj, mut best) = (0, 0, 0.0);
        for ((i, j), &v) in kde.density.indexed_iter() {
            if v > best {
                (bi, bj, best) = (i, j, v);
            }
        }
        assert!((kde.x[bi] - 0.3).abs() < 1e-12 && (kde.y[bj] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn kde_symmetric_pair() {
        let pts = array![[0.5, 0.2], [-0.5, -0.2]];
        let kde = gaussian_kde2d(&pts, &GridSpec::default(), 0.3).unwrap();
        let n = kde.x.len();
        for i in 0..n {
            for j in 0..n {
                let d = kde.density[[i, j]] - kde.density[[n - 1 - i, n - 1 - j]];
                assert!(d.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kde_rejects_bad_bandwidth() {
        let pts = array![[0.0, 0.0]];
        assert!(gaussian_kde2d(&pts, &GridSpec::default(), 0.0).is_err());
        assert!(gaussian_kde2d(&pts, &GridSpec::default(), -1.0).is_err());
    }

    #[test]
    fn csv_layouts() {
        let pts = array![[0.0, 1.0], [1.0, 0.0]];
        let kde = gaussian_kde2d(
            &pts,
            &GridSpec {
                lo: 0.0,
                hi: 1.0,
                n: 2,
            },
            0.5,
        )
        .unwrap();
        let csv = kde.to_csv();
        assert_eq!(csv.lines().next(), Some(KDE2D_HEADER));
        assert_eq!(csv.lines().count(), 5);
        let a = vmf_kde_angles(&pts, 1.0, 8).unwrap();
        assert!(a.to_csv().starts_with("x,prob\n"));
    }

    #[test]
    fn vmf_peak_closed_form() {
        let pts = array![[1.0, 0.0], [2.0, 0.0]];
        let kde = vmf_kde_angles(&pts, 20.0, 1025).unwrap();
        let mid = 512;
        assert!(kde.angles[mid].abs() < 1e-12);
        let expected = 20f64.exp() / (2.0 * PI * bessel_i0_scaled(20.0) * 20f64.exp());
        assert!((kde.density[mid] / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vmf_small_kappa_is_uniform() {
        let pts = array![[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]];
        let kde = vmf_kde_angles(&pts, 1e-7, 64).unwrap();
        for p in kde.density {
            assert!((p - 1.0 / (2.0 * PI)).abs() < 1e-6);
        }
    }

    #[test]
    fn vmf_skips_zero_points() {
        let pts = array![[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]];
        let kde = vmf_kde_angles(&pts, 5.0, 16).unwrap();
        assert_eq!(kde.skipped, 2);
        assert!(vmf_kde_angles(&array![[0.0, 0.0]], 5.0, 16).is_err());
        assert!(vmf_kde_angles(&pts, 0.0, 16).is_err());
    }

    #[test]
    fn vmf_integrates_to_one() {
        let pts = array![[1.0, 0.2], [-0.3, 0.9], [-0.5, -0.5], [0.1, -1.0]];
        for kappa in [0.1, 1.0, 20.0, 100.0] {
            let kde = vmf_kde_angles(&pts, kappa, ANGLE_SAMPLES).unwrap();
            assert!((kde.integral() - 1.0).abs() < 1e-3, "kappa {kappa}");
        }
    }
}
