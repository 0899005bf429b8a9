//! Monte Carlo cross-check of the analytic arc length moments.
//!
//! Draw paths on a fine grid, rectify each into a polyline length, and
//! compare the sample mean and variance against the series/quadrature
//! values. The z-score of the mean should stay within a few standard
//! errors, and the variance ratio close to one. Seeded draws make the
//! numbers identical from run to run.
//!
//! Run with `cargo run --release --example mc_validation`
//! (release mode recommended; the debug build takes noticeably longer).

use arclen::arclength::{prior_moments_nd, Interval};
use arclen::gp::GpPosterior;
use arclen::kernels::{CoregionalizedKernel, KernelFamily, KernelSpec};
use arclen::mc_oracle::{empirical_arclength, LengthMode};
use arclen::quadrature::QuadratureSpec;
use arclen::specfun::SeriesPolicy;
use nalgebra::DMatrix;

fn main() {
    let interval = Interval::new(0.0, 1.0).unwrap();
    let quad = QuadratureSpec::default();
    let series = SeriesPolicy {
        rel_tol: 1e-12,
        max_terms: 400,
    };

    let scalar = KernelSpec::new(KernelFamily::Matern32, 1.0, 1.0, 1.0).unwrap();
    let kernel = CoregionalizedKernel::new(scalar, DMatrix::identity(3, 3)).unwrap();
    let analytic = prior_moments_nd(&kernel, interval, &quad, &series).unwrap();

    let gp = GpPosterior::prior(kernel);
    let (grid_size, count, seed) = (1000, 800, 42);
    let mc = empirical_arclength(&gp, interval, grid_size, count, seed, LengthMode::VectorLength)
        .unwrap();

    let z = (mc.empirical_mean - analytic.mean) / mc.mean_std_error;
    let ratio = mc.empirical_variance / analytic.variance.unwrap();

    println!("three-output Matern 3/2 prior on [0, 1]");
    println!("  analytic mean      = {:.10}", analytic.mean);
    println!("  empirical mean     = {:.10}  ({count} draws, grid {grid_size})", mc.empirical_mean);
    println!("  standard error     = {:.3e}", mc.mean_std_error);
    println!("  z-score            = {z:+.3}");
    println!("  analytic variance  = {:.10}", analytic.variance.unwrap());
    println!("  empirical variance = {:.10}", mc.empirical_variance);
    println!("  variance ratio     = {ratio:.4}");

    assert!(z.abs() < 4.0, "Monte Carlo disagrees with the analytic mean");
    assert!(ratio > 0.7 && ratio < 1.3, "variance ratio off: {ratio}");
    println!();
    println!("agreement within Monte Carlo error.");
}
