#![allow(dead_code)]

use ndarray::Array2;
use protogmm::rng::StreamRng;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix(rng: &mut StreamRng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

pub fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    let c = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), c), |(i, j)| rows[i][j])
}

pub fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Points drawn around `k` Gaussian centres.
pub fn clustered(
    rng: &mut StreamRng,
    k: usize,
    n: usize,
    d: usize,
    centre_scale: f64,
    noise: f64,
) -> Array2<f64> {
    let centres = normal_matrix(rng, k, d, centre_scale);
    Array2::from_shape_fn((n, d), |(i, j)| centres[[i % k, j]]) + normal_matrix(rng, n, d, noise)
}
