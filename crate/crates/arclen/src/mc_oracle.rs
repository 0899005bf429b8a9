//! Monte Carlo ground truth for arc length statistics.
//!
//! Paths are drawn from a [`GpPosterior`] on a uniform grid and rectified
//! by chord sums, the definition of curve length as a supremum over
//! partitions. Two rectification modes mirror the two length notions used
//! by the analytic side: [`LengthMode::GraphLength1D`] augments a
//! single-output path with its parameter coordinate, so a constant path
//! over `[0, 1]` has length one, while [`LengthMode::VectorLength`] sums
//! chord norms of the outputs alone.
//!
//! Draws are independent given the seed and draw index, and all reductions
//! use fixed-order pairwise summation, so reports are reproducible
//! bit-for-bit given `(seed, grid_size, count)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arclength::Interval;
use crate::gp::{GpError, GpPosterior};

/// Errors from Monte Carlo estimation.
#[derive(Debug, Error)]
pub enum McError {
    /// An argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Path sampling failed.
    #[error("sampling failed: {0}")]
    Gp(#[from] GpError),
}

/// Which length notion to apply when rectifying a sampled path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthMode {
    /// Length of the graph `t -> (t, f(t))` of a single output.
    #[serde(rename = "graph_1d")]
    GraphLength1D,
    /// Length of the trace of the vector-valued path, `|f'|` rectified.
    #[serde(rename = "vector")]
    VectorLength,
}

/// Summary statistics of a batch of rectified path lengths.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McReport {
    /// Number of sampled paths.
    pub sample_count: usize,
    /// Sample mean of the lengths.
    pub empirical_mean: f64,
    /// Unbiased sample variance of the lengths.
    pub empirical_variance: f64,
    /// Standard error of the mean, `sqrt(variance / count)`.
    pub mean_std_error: f64,
    /// Grid points used for rectification.
    pub grid_size: usize,
    /// Base seed the draws derived from.
    pub seed: u64,
}

/// Equal-width histogram spanning the sample range.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    /// `bin_count + 1` edges from the minimum to the maximum value.
    pub edges: Vec<f64>,
    /// Per-bin counts; sums to the sample count.
    pub counts: Vec<usize>,
}

/// Chord-sum length of a sampled path.
///
/// `points` holds one grid point per row and one output per column; `grid`
/// supplies the matching parameter values. Graph mode requires a single
/// output column and includes the parameter increments in each chord.
pub fn path_length(
    points: &DMatrix<f64>,
    grid: &[f64],
    mode: LengthMode,
) -> Result<f64, McError> {
    let rows = points.nrows();
    if rows < 2 {
        return Err(McError::InvalidArgument(format!(
            "need at least 2 points, got {rows}"
        )));
    }
    if grid.len() != rows {
        return Err(McError::InvalidArgument(format!(
            "grid length {} does not match point count {rows}",
            grid.len()
        )));
    }
    if mode == LengthMode::GraphLength1D && points.ncols() != 1 {
        return Err(McError::InvalidArgument(format!(
            "graph length needs a single output column, got {}",
            points.ncols()
        )));
    }
    let chords: Vec<f64> = (0..rows - 1)
        .map(|i| {
            let mut sq = 0.0;
            for d in 0..points.ncols() {
                let diff = points[(i + 1, d)] - points[(i, d)];
                sq += diff * diff;
            }
            if mode == LengthMode::GraphLength1D {
                let dt = grid[i + 1] - grid[i];
                sq += dt * dt;
            }
            sq.sqrt()
        })
        .collect();
    Ok(pairwise_sum(&chords))
}

/// Rectified lengths of `count` independent path draws on a uniform grid
/// over the interval. Draw `i` depends only on `(seed, i)`.
pub fn sample_lengths(
    gp: &GpPosterior,
    interval: Interval,
    grid_size: usize,
    count: usize,
    seed: u64,
    mode: LengthMode,
) -> Result<Vec<f64>, McError> {
    if grid_size < 2 {
        return Err(McError::InvalidArgument(format!(
            "grid_size must be at least 2, got {grid_size}"
        )));
    }
    if mode == LengthMode::GraphLength1D && gp.output_dim() != 1 {
        return Err(McError::InvalidArgument(format!(
            "graph length needs a single-output model, got {} outputs",
            gp.output_dim()
        )));
    }
    let grid = uniform_grid(interval, grid_size);
    let sampler = gp.path_sampler(&grid, seed)?;
    let mut lengths = Vec::with_capacity(count);
    for i in 0..count {
        let path = sampler.draw(i as u64);
        lengths.push(path_length(&path, &grid, mode)?);
    }
    Ok(lengths)
}

/// Samples paths, rectifies them, and summarizes the lengths.
pub fn empirical_arclength(
    gp: &GpPosterior,
    interval: Interval,
    grid_size: usize,
    count: usize,
    seed: u64,
    mode: LengthMode,
) -> Result<McReport, McError> {
    if count < 2 {
        return Err(McError::InvalidArgument(format!(
            "count must be at least 2, got {count}"
        )));
    }
    let lengths = sample_lengths(gp, interval, grid_size, count, seed, mode)?;
    summarize(&lengths, grid_size, seed)
}

/// Builds an [`McReport`] from raw lengths using pairwise summation.
pub fn summarize(lengths: &[f64], grid_size: usize, seed: u64) -> Result<McReport, McError> {
    let n = lengths.len();
    if n < 2 {
        return Err(McError::InvalidArgument(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let mean = pairwise_sum(lengths) / n as f64;
    let sq_dev: Vec<f64> = lengths.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let variance = pairwise_sum(&sq_dev) / (n - 1) as f64;
    Ok(McReport {
        sample_count: n,
        empirical_mean: mean,
        empirical_variance: variance,
        mean_std_error: (variance / n as f64).sqrt(),
        grid_size,
        seed,
    })
}

/// Equal-width histogram over `[min, max]`; every value lands in a bin.
pub fn histogram(values: &[f64], bin_count: usize) -> Result<Histogram, McError> {
    if bin_count == 0 {
        return Err(McError::InvalidArgument(
            "bin_count must be at least 1".into(),
        ));
    }
    if values.is_empty() {
        return Err(McError::InvalidArgument("values must be non-empty".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(McError::InvalidArgument(
            "values must all be finite".into(),
        ));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bin_count as f64;
    let mut edges = Vec::with_capacity(bin_count + 1);
    for i in 0..=bin_count {
        edges.push(min + width * i as f64);
    }
    edges[bin_count] = max;
    let mut counts = vec![0usize; bin_count];
    for &v in values {
        let idx = if width > 0.0 {
            (((v - min) / width) as usize).min(bin_count - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Uniform grid with exact endpoints.
fn uniform_grid(interval: Interval, grid_size: usize) -> Vec<f64> {
    let step = interval.length() / (grid_size - 1) as f64;
    let mut grid: Vec<f64> = (0..grid_size)
        .map(|i| interval.a() + step * i as f64)
        .collect();
    grid[grid_size - 1] = interval.b();
    grid
}

/// Fixed-order pairwise summation: deterministic and with `O(log n)`
/// round-off growth.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arclength::{
        posterior_moments_1d, posterior_moments_nd, prior_mean_nd, prior_variance_nd,
        CorrelationPolicy,
    };
    use crate::gp::{NoiseSpec, Observations};
    use crate::kernels::{CoregionalizedKernel, KernelSpec};
    use crate::quadrature::QuadratureSpec;
    use crate::specfun::SeriesPolicy;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::FRAC_PI_2;

    fn unit_interval() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn straight_line_length_is_chord() {
        let n = 7;
        let points = DMatrix::from_fn(n, 3, |i, _| i as f64 / (n - 1) as f64);
        let grid: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let len = path_length(&points, &grid, LengthMode::VectorLength).unwrap();
        assert_relative_eq!(len, 3.0_f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn quarter_circle_rectifies_to_its_arc_length() {
        let n = 10_000;
        let points = DMatrix::from_fn(n, 2, |i, d| {
            let theta = FRAC_PI_2 * i as f64 / (n - 1) as f64;
            if d == 0 {
                theta.cos()
            } else {
                theta.sin()
            }
        });
        let grid: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let len = path_length(&points, &grid, LengthMode::VectorLength).unwrap();
        assert_abs_diff_eq!(len, FRAC_PI_2, epsilon = 1e-6);
    }

    #[test]
    fn constant_graph_path_has_interval_length() {
        let n = 33;
        let points = DMatrix::from_element(n, 1, 0.7);
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let len = path_length(&points, &grid, LengthMode::GraphLength1D).unwrap();
        assert_abs_diff_eq!(len, 1.0, epsilon = 1e-12);
        // Vector mode ignores the parameter coordinate entirely.
        let vec_len = path_length(&points, &grid, LengthMode::VectorLength).unwrap();
        assert_abs_diff_eq!(vec_len, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn path_length_validates_inputs() {
        let one_row = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(
            path_length(&one_row, &[0.0], LengthMode::VectorLength),
            Err(McError::InvalidArgument(_))
        ));
        let two = DMatrix::from_element(2, 2, 0.0);
        assert!(matches!(
            path_length(&two, &[0.0, 1.0], LengthMode::GraphLength1D),
            Err(McError::InvalidArgument(_))
        ));
        assert!(matches!(
            path_length(&two, &[0.0], LengthMode::VectorLength),
            Err(McError::InvalidArgument(_))
        ));
    }

    #[test]
    fn refinement_of_the_same_draw_never_shortens_the_path() {
        // Sample on a fine grid and rectify both the full path and the
        // subsampled one: adding vertices can only lengthen a chord sum,
        // and at this resolution the gap must be far below 0.1%.
        let kernel = CoregionalizedKernel::new(
            KernelSpec::matern32(1.0, 1.0).unwrap(),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let gp = GpPosterior::prior(kernel);
        let fine_n = 1001;
        let grid = uniform_grid(unit_interval(), fine_n);
        let coarse_grid: Vec<f64> = grid.iter().cloned().step_by(2).collect();
        let sampler = gp.path_sampler(&grid, 40).unwrap();
        let mut fine_total = 0.0;
        let mut coarse_total = 0.0;
        let count = 100;
        for i in 0..count {
            let path = sampler.draw(i);
            let coarse_rows: Vec<usize> = (0..fine_n).step_by(2).collect();
            let coarse = path.select_rows(&coarse_rows);
            let fine_len = path_length(&path, &grid, LengthMode::VectorLength).unwrap();
            let coarse_len = path_length(&coarse, &coarse_grid, LengthMode::VectorLength).unwrap();
            assert!(
                fine_len >= coarse_len,
                "refinement shortened a path: {fine_len} < {coarse_len}"
            );
            fine_total += fine_len;
            coarse_total += coarse_len;
        }
        let gap = (fine_total - coarse_total) / fine_total;
        assert!(gap < 1e-3, "rectification gap {gap} above 0.1%");
    }

    #[test]
    fn empirical_prior_mean_matches_analytic_value() {
        let kernel = CoregionalizedKernel::new(
            KernelSpec::matern32(1.0, 1.0).unwrap(),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let gp = GpPosterior::prior(kernel.clone());
        let report = empirical_arclength(
            &gp,
            unit_interval(),
            501,
            400,
            5,
            LengthMode::VectorLength,
        )
        .unwrap();
        let analytic = prior_mean_nd(&kernel, unit_interval()).unwrap();
        let z = (report.empirical_mean - analytic).abs() / report.mean_std_error;
        assert!(z < 3.0, "prior mean z-score {z} too large");
        let var = prior_variance_nd(
            &kernel,
            unit_interval(),
            &QuadratureSpec::default(),
            &SeriesPolicy {
                rel_tol: 1e-11,
                max_terms: 300,
            },
        )
        .unwrap();
        let rel = (report.empirical_variance - var.value).abs() / var.value;
        assert!(rel < 0.3, "prior variance off by {rel} relative");
    }

    #[test]
    fn empirical_graph_length_of_a_flat_model_approaches_interval_length() {
        let kernel =
            CoregionalizedKernel::scalar_only(KernelSpec::squared_exponential(1e-10, 1.0).unwrap())
                .unwrap();
        let gp = GpPosterior::prior(kernel);
        let report = empirical_arclength(
            &gp,
            unit_interval(),
            200,
            50,
            9,
            LengthMode::GraphLength1D,
        )
        .unwrap();
        assert_abs_diff_eq!(report.empirical_mean, 1.0, epsilon = 1e-4);
        assert!(report.empirical_variance < 1e-8);
    }

    #[test]
    fn empirical_posterior_graph_length_matches_analytic_mean() {
        let scalar = KernelSpec::squared_exponential(1.2, 0.8).unwrap();
        let obs = Observations::new(
            vec![0.1, 0.45, 0.8],
            DMatrix::from_column_slice(3, 1, &[0.2, -0.3, 0.5]),
            NoiseSpec::Shared(0.01),
        )
        .unwrap();
        let gp = GpPosterior::fit(CoregionalizedKernel::scalar_only(scalar).unwrap(), obs).unwrap();
        let analytic = posterior_moments_1d(
            &gp,
            unit_interval(),
            &QuadratureSpec::default(),
            &SeriesPolicy::default(),
        )
        .unwrap();
        let report = empirical_arclength(
            &gp,
            unit_interval(),
            601,
            400,
            11,
            LengthMode::GraphLength1D,
        )
        .unwrap();
        let z = (report.empirical_mean - analytic.mean).abs() / report.mean_std_error;
        assert!(z < 3.0, "posterior graph-length z-score {z} too large");
    }

    #[test]
    fn empirical_posterior_vector_length_matches_analytic_moments() {
        let scalar = KernelSpec::matern32(0.9, 0.6).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let obs = Observations::new(
            vec![0.15, 0.5, 0.85],
            DMatrix::from_row_slice(3, 2, &[0.1, -0.2, 0.4, 0.1, -0.3, 0.35]),
            NoiseSpec::Shared(0.0025),
        )
        .unwrap();
        let gp = GpPosterior::fit(CoregionalizedKernel::new(scalar, b).unwrap(), obs).unwrap();
        let analytic = posterior_moments_nd(
            &gp,
            unit_interval(),
            &QuadratureSpec::default(),
            &SeriesPolicy::default(),
            CorrelationPolicy::PriorStationary,
        )
        .unwrap();
        let report = empirical_arclength(
            &gp,
            unit_interval(),
            601,
            400,
            13,
            LengthMode::VectorLength,
        )
        .unwrap();
        let z = (report.empirical_mean - analytic.mean).abs() / report.mean_std_error;
        assert!(z < 3.0, "posterior vector-length z-score {z} too large");
        // Second moment: MC noise plus the moment-matching slack.
        let emp_second =
            report.empirical_variance + report.empirical_mean * report.empirical_mean;
        let rel = (emp_second - analytic.second_moment.unwrap()).abs() / emp_second;
        assert!(rel < 0.15, "posterior second moment off by {rel} relative");
    }

    #[test]
    fn reports_are_reproducible_and_seed_sensitive() {
        let kernel = CoregionalizedKernel::scalar_only(
            KernelSpec::squared_exponential(1.0, 0.5).unwrap(),
        )
        .unwrap();
        let gp = GpPosterior::prior(kernel);
        let a = empirical_arclength(&gp, unit_interval(), 101, 40, 21, LengthMode::GraphLength1D)
            .unwrap();
        let b = empirical_arclength(&gp, unit_interval(), 101, 40, 21, LengthMode::GraphLength1D)
            .unwrap();
        assert_eq!(a.empirical_mean.to_bits(), b.empirical_mean.to_bits());
        assert_eq!(
            a.empirical_variance.to_bits(),
            b.empirical_variance.to_bits()
        );
        let c = empirical_arclength(&gp, unit_interval(), 101, 40, 22, LengthMode::GraphLength1D)
            .unwrap();
        assert_ne!(a.empirical_mean.to_bits(), c.empirical_mean.to_bits());
    }

    #[test]
    fn empirical_graph_length_dominates_interval_length() {
        let kernel = CoregionalizedKernel::scalar_only(
            KernelSpec::matern52(2.0, 0.4).unwrap(),
        )
        .unwrap();
        let gp = GpPosterior::prior(kernel);
        let lengths =
            sample_lengths(&gp, unit_interval(), 301, 60, 3, LengthMode::GraphLength1D).unwrap();
        for len in lengths {
            assert!(len >= 1.0, "graph length {len} below interval length");
        }
    }

    #[test]
    fn histogram_single_bin_counts_everything() {
        let h = histogram(&[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(h.counts, vec![3]);
        assert_eq!(h.edges, vec![1.0, 3.0]);
    }

    #[test]
    fn histogram_validates_inputs() {
        assert!(matches!(
            histogram(&[1.0], 0),
            Err(McError::InvalidArgument(_))
        ));
        assert!(matches!(histogram(&[], 4), Err(McError::InvalidArgument(_))));
        assert!(matches!(
            histogram(&[f64::NAN, 1.0], 2),
            Err(McError::InvalidArgument(_))
        ));
    }

    #[test]
    fn histogram_of_identical_values_degenerates_gracefully() {
        let h = histogram(&[2.5; 10], 4).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 10);
        assert_eq!(h.counts[0], 10);
    }

    #[test]
    fn uniform_histogram_fluctuations_stay_poissonian() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let values: Vec<f64> = (0..100_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let bins = 20;
        let h = histogram(&values, bins).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        let expected = values.len() as f64 / bins as f64;
        for (i, &c) in h.counts.iter().enumerate() {
            let dev = (c as f64 - expected).abs();
            assert!(
                dev < 5.0 * expected.sqrt(),
                "bin {i} deviates by {dev} from {expected}"
            );
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_benign_data() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert_abs_diff_eq!(pairwise_sum(&xs), naive, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn rectified_length_dominates_endpoint_chord(
            rows in 2usize..30,
            dims in 1usize..4,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let points = DMatrix::from_fn(rows, dims, |_, _| rng.gen_range(-5.0..5.0));
            let grid: Vec<f64> = (0..rows).map(|i| i as f64).collect();
            let len = path_length(&points, &grid, LengthMode::VectorLength).unwrap();
            let chord = (points.row(rows - 1) - points.row(0)).norm();
            prop_assert!(len >= chord - 1e-9);
        }

        #[test]
        fn histogram_counts_always_sum_to_sample_count(
            values in proptest::collection::vec(-1e3_f64..1e3, 1..200),
            bins in 1usize..16,
        ) {
            let h = histogram(&values, bins).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
            prop_assert_eq!(h.edges.len(), bins + 1);
        }
    }

    #[test]
    fn graph_and_vector_modes_disagree_on_sloped_paths() {
        // A line of slope 1 over [0, 1]: graph length sqrt(2), vector
        // rectification of the outputs alone gives 1.
        let n = 11;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let points = DMatrix::from_iterator(n, 1, grid.iter().cloned());
        let graph = path_length(&points, &grid, LengthMode::GraphLength1D).unwrap();
        let vector = path_length(&points, &grid, LengthMode::VectorLength).unwrap();
        assert_relative_eq!(graph, 2.0_f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(vector, 1.0, max_relative = 1e-12);
    }

}
