//! Partial prototype collapse diagnostics.
//!
//! Prototypes are compared on the unit sphere. A prototype `c` is covered by
//! a representative `v` when `1 − vᵀc < ε`; the number of representatives is
//! the number of unique prototypes `M`. Finding the smallest such cover is a
//! set-cover problem, so [`count_unique`] uses greedy first-fit in row order,
//! which gives a deterministic upper bound on the minimum.

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;

/// ε grid used for sweeps and telemetry.
pub const DEFAULT_EPSILONS: [f64; 6] = [0.0, 0.025, 0.05, 0.1, 0.25, 0.5];

/// Unit-norm tolerance checked by [`PrototypeMatrix::from_normalized`].
const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeMatrix {
    rows: Array2<f64>,
    normalized: bool,
}

impl PrototypeMatrix {
    /// Wraps a matrix without normalising it.
    pub fn raw(rows: Array2<f64>) -> Self {
        Self {
            rows,
            normalized: false,
        }
    }

    /// Wraps rows that are already unit norm (checked to 1e-9).
    pub fn from_normalized(rows: Array2<f64>) -> Result<Self> {
        for (i, r) in rows.rows().into_iter().enumerate() {
            let n = r.dot(&r).sqrt();
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidState(format!("row {i} has norm {n}")));
            }
        }
        Ok(Self {
            rows,
            normalized: true,
        })
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn k(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::InvalidState(
                "prototype rows are not normalised".into(),
            ))
        }
    }
}

/// Divides every row by its L2 norm.
pub fn normalize_rows(matrix: &Array2<f64>) -> Result<PrototypeMatrix> {
    if matrix.nrows() == 0 {
        return Err(Error::invalid("prototype matrix has no rows"));
    }
    let mut rows = matrix.clone();
    for (i, mut r) in rows.rows_mut().into_iter().enumerate() {
        let n = r.dot(&r).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid(format!(
                "row {i} has zero or non-finite norm"
            )));
        }
        r.mapv_inplace(|v| v / n);
    }
    Ok(PrototypeMatrix {
        rows,
        normalized: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub epsilon: f64,
    pub unique_count: usize,
    pub unique_fraction: f64,
    /// Size of each partition, in the order the representatives were found.
    pub partition_sizes: Vec<usize>,
    /// Row index of each partition's representative.
    pub representative_indices: Vec<usize>,
}

impl CollapseReport {
    fn from_partition(epsilon: f64, k: usize, reps: Vec<usize>, sizes: Vec<usize>) -> Self {
        Self {
            epsilon,
            unique_count: reps.len(),
            unique_fraction: reps.len() as f64 / k as f64,
            partition_sizes: sizes,
            representative_indices: reps,
        }
    }

    /// Rows of the CSV layout `epsilon,unique_count,unique_fraction`.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{}",
            self.epsilon, self.unique_count, self.unique_fraction
        )
    }
}

pub const REPORT_CSV_HEADER: &str = "epsilon,unique_count,unique_fraction";

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "epsilon {epsilon} must be finite and >= 0"
        )))
    }
}

/// Greedy first-fit partitioning: each row joins the first representative it
/// is within ε of, or becomes a new representative.
pub fn count_unique(protos: &PrototypeMatrix, epsilon: f64) -> Result<CollapseReport> {
    protos.require_normalized()?;
    check_epsilon(epsilon)?;
    if epsilon == 0.0 {
        // 1 − vᵀc ≥ 0 on the sphere; rounding can push it below zero for
        // identical rows, so the empty cover is taken directly.
        let k = protos.k();
        return Ok(CollapseReport::from_partition(
            0.0,
            k,
            (0..k).collect(),
            vec![1; k],
        ));
    }
    let mut reps: Vec<usize> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for j in 0..protos.k() {
        let c = protos.row(j);
        match reps
            .iter()
            .position(|&r| 1.0 - protos.row(r).dot(&c) < epsilon)
        {
            Some(m) => sizes[m] += 1,
            None => {
                reps.push(j);
                sizes.push(1);
            }
        }
    }
    Ok(CollapseReport::from_partition(
        epsilon,
        protos.k(),
        reps,
        sizes,
    ))
}

/// One report per ε (ascending). A partition valid at ε is also valid at any
/// larger ε, so when first-fit at a larger ε finds more partitions than the
/// previous entry, the previous partition is carried forward; the counts are
/// therefore nonincreasing along the sweep.
pub fn epsilon_sweep(protos: &PrototypeMatrix, epsilons: &[f64]) -> Result<Vec<CollapseReport>> {
    if epsilons.is_empty() {
        return Err(Error::invalid("epsilon list is empty"));
    }
    for &e in epsilons {
        check_epsilon(e)?;
    }
    if epsilons.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("epsilon list must be sorted ascending"));
    }
    let mut out: Vec<CollapseReport> = Vec::with_capacity(epsilons.len());
    for &e in epsilons {
        let mut rep = count_unique(protos, e)?;
        if let Some(prev) = out.last() {
            if prev.unique_count < rep.unique_count {
                rep = CollapseReport {
                    epsilon: e,
                    ..prev.clone()
                };
            }
        }
        out.push(rep);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularStats {
    pub min_angle_deg: f64,
    pub mean_angle_deg: f64,
    /// Width of each histogram bin in degrees; bins cover [0, 180].
    pub bin_width_deg: f64,
    pub histogram: Vec<u64>,
    pub pairs_used: u64,
    pub total_pairs: u64,
    pub subsampled: bool,
}

/// Above this many prototypes the pairwise histogram is subsampled.
pub const ANGULAR_PAIR_CAP_K: usize = 10_000;
/// Number of pairs drawn when subsampling.
pub const ANGULAR_SAMPLED_PAIRS: u64 = 2_000_000;

fn angle_deg(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Pairwise angle statistics. All `K(K−1)/2` pairs are used up to
/// `cap_k` prototypes; above it, `sampled_pairs` pairs are drawn uniformly with
/// a fixed seed.
pub fn angular_stats_with(
    protos: &PrototypeMatrix,
    bins: usize,
    cap_k: usize,
    sampled_pairs: u64,
) -> Result<AngularStats> {
    protos.require_normalized()?;
    let k = protos.k();
    if k < 2 {
        return Err(Error::invalid(
            "angular statistics need at least two prototypes",
        ));
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let width = 180.0 / bins as f64;
    let mut hist = vec![0u64; bins];
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    let mut used = 0u64;
    let mut record = |a: f64| {
        let b = ((a / width) as usize).min(bins - 1);
        hist[b] += 1;
        min = min.min(a);
        sum += a;
        used += 1;
    };
    let total = (k as u64) * (k as u64 - 1) / 2;
    let subsampled = k > cap_k;
    if subsampled {
        let mut rng = stream(0, "angular-pairs");
        for _ in 0..sampled_pairs {
            let i = rng.random_range(0..k);
            let mut j = rng.random_range(0..k - 1);
            if j >= i {
                j += 1;
            }
            record(angle_deg(protos.row(i), protos.row(j)));
        }
    } else {
        for i in 0..k {
            for j in i + 1..k {
                record(angle_deg(protos.row(i), protos.row(j)));
            }
        }
    }
    Ok(AngularStats {
        min_angle_deg: min,
        mean_angle_deg: sum / used as f64,
        bin_width_deg: width,
        histogram: hist,
        pairs_used: used,
        total_pairs: total,
        subsampled,
    })
}

/// [`angular_stats_with`] using 10° bins and the default subsampling cap.
pub fn angular_stats(protos: &PrototypeMatrix) -> Result<AngularStats> {
    angular_stats_with(protos, 18, ANGULAR_PAIR_CAP_K, ANGULAR_SAMPLED_PAIRS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn basis(d: usize) -> PrototypeMatrix {
        normalize_rows(&Array2::eye(d)).unwrap()
    }

    #[test]
    fn three_four_five() {
        let p = normalize_rows(&array![[3.0, 4.0]]).unwrap();
        assert!((p.rows()[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((p.rows()[[0, 1]] - 0.8).abs() < 1e-15);
        let again = normalize_rows(p.rows()).unwrap();
        for (a, b) in again.rows().iter().zip(p.rows()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_row_is_named() {
        match normalize_rows(&array![[1.0, 0.0], [0.0, 0.0]]) {
            Err(Error::InvalidArgument(m)) => assert!(m.contains("row 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn epsilon_zero_counts_everything() {
        let p = normalize_rows(&array![[1.0, 0.0], [1.0, 0.0], [1.0, 1e-9]]).unwrap();
        let r = count_unique(&p, 0.0).unwrap();
        assert_eq!(r.unique_count, 3);
        assert_eq!(r.unique_fraction, 1.0);
        // Within the unit tolerance but with vᵀc > 1.
        let q = PrototypeMatrix::from_normalized(array![[1.0 + 5e-10, 0.0], [1.0 + 5e-10, 0.0]])
            .unwrap();
        assert_eq!(count_unique(&q, 0.0).unwrap().unique_count, 2);
    }

    #[test]
    fn identical_pair_merges() {
        let p = normalize_rows(&array![[0.3, 0.4], [0.3, 0.4]]).unwrap();
        let r = count_unique(&p, 0.025).unwrap();
        assert_eq!(r.unique_count, 1);
        assert_eq!(r.partition_sizes, vec![2]);
        let sweep = epsilon_sweep(&p, &[0.0, 0.025]).unwrap();
        let counts: Vec<usize> = sweep.iter().map(|r| r.unique_count).collect();
        assert_eq!(counts, vec![2, 1]);
    }

    #[test]
    fn orthonormal_basis_stays_unique() {
        let r = count_unique(&basis(5), 0.5).unwrap();
        assert_eq!(r.unique_count, 5);
        assert_eq!(r.representative_indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn unnormalised_input_is_rejected() {
        let p = PrototypeMatrix::raw(array![[2.0, 0.0]]);
        assert!(matches!(count_unique(&p, 0.1), Err(Error::InvalidState(_))));
        assert!(PrototypeMatrix::from_normalized(array![[2.0, 0.0]]).is_err());
    }

    #[test]
    fn sweep_validation() {
        let p = basis(3);
        assert!(epsilon_sweep(&p, &[]).is_err());
        assert!(epsilon_sweep(&p, &[0.1, 0.05]).is_err());
        assert!(epsilon_sweep(&p, &[-0.1]).is_err());
    }

    /// First-fit at a larger ε can produce more partitions than at a smaller
    /// one; the sweep carries the smaller partition forward.
    #[test]
    fn sweep_is_monotone_where_first_fit_is_not() {
        let dir = |lat: f64, lon: f64| {
            let (lat, lon) = (lat.to_radians(), lon.to_radians());
            vec![lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
        };
        let rows = [
            dir(0.0, 0.0),
            dir(0.0, 10.0),
            dir(0.0, 19.0),
            dir(9.0, 10.0),
            dir(-9.0, 10.0),
        ];
        let flat: Vec<f64> = rows.concat();
        let p = normalize_rows(&Array2::from_shape_vec((5, 3), flat).unwrap()).unwrap();
        let e1 = 1.0 - 9.5f64.to_radians().cos();
        let e2 = 1.0 - 10.5f64.to_radians().cos();
        assert_eq!(count_unique(&p, e1).unwrap().unique_count, 2);
        assert_eq!(count_unique(&p, e2).unwrap().unique_count, 4);
        let sweep = epsilon_sweep(&p, &[e1, e2]).unwrap();
        assert_eq!(sweep[1].unique_count, 2);
        assert_eq!(sweep[1].epsilon, e2);
    }

    #[test]
    fn right_angle_pair() {
        let s = angular_stats(&basis(2)).unwrap();
        assert_eq!(s.pairs_used, 1);
        assert!((s.min_angle_deg - 90.0).abs() < 1e-12);
        assert_eq!(s.histogram[9], 1);
    }

    #[test]
    fn sixty_degrees_at_half() {
        let p = normalize_rows(&array![[1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]]).unwrap();
        let s = angular_stats(&p).unwrap();
        assert!((s.min_angle_deg - 60.0).abs() < 1e-9);
        // 12.84 degrees is the ε = 0.025 boundary
        assert!((1.0 - 12.84f64.to_radians().cos() - 0.025).abs() < 1e-4);
    }

    #[test]
    fn angular_needs_two() {
        assert!(angular_stats(&basis(1)).is_err());
    }

    #[test]
    fn subsampling_is_recorded() {
        let p = normalize_rows(&Array2::from_shape_fn((30, 3), |(i, j)| {
            ((i * 7 + j * 3) % 11) as f64 + 1.0
        }))
        .unwrap();
        let s = angular_stats_with(&p, 18, 10, 500).unwrap();
        assert!(s.subsampled);
        assert_eq!(s.pairs_used, 500);
        assert_eq!(s.total_pairs, 435);
    }
}
