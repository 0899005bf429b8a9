//! How conditioning on data changes the expected arc length.
//!
//! Observations pin the path down, which shrinks the derivative variance
//! between data points while the posterior mean acquires slope of its own.
//! The expected length rebalances accordingly: well inside the data it
//! approaches the rectified length of the posterior mean curve, and far
//! from data it relaxes back to the prior value.
//!
//! The example fits a two-output model to the bundled CSV and prints prior
//! and posterior moments side by side.
//!
//! Run with `cargo run --example posterior_update`.

use std::path::Path;

use arclen::arclength::{
    posterior_moments_nd, prior_moments_nd, CorrelationPolicy, Interval,
};
use arclen::gp::{GpPosterior, NoiseSpec, Observations};
use arclen::kernels::{CoregionalizedKernel, KernelFamily, KernelSpec};
use arclen::quadrature::QuadratureSpec;
use arclen::specfun::SeriesPolicy;
use nalgebra::DMatrix;

fn main() {
    let interval = Interval::new(0.0, 1.0).unwrap();
    let quad = QuadratureSpec::default();
    let series = SeriesPolicy {
        rel_tol: 1e-10,
        max_terms: 200,
    };

    let scalar = KernelSpec::new(KernelFamily::Matern32, 0.9, 0.6, 1.0).unwrap();
    let mixing = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let kernel = CoregionalizedKernel::new(scalar, mixing).unwrap();

    let prior = prior_moments_nd(&kernel, interval, &quad, &series).unwrap();

    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/observations.csv");
    let obs = Observations::from_csv_path(&data, NoiseSpec::Shared(0.0025))
        .unwrap()
        .expect("bundled CSV has data rows");
    println!(
        "conditioning on {} observations of {} outputs from {}",
        obs.len(),
        obs.output_dim(),
        data.display()
    );

    let gp = GpPosterior::fit(kernel, obs).unwrap();
    let posterior = posterior_moments_nd(
        &gp,
        interval,
        &quad,
        &series,
        CorrelationPolicy::PosteriorNormalized,
    )
    .unwrap();

    println!();
    println!("{:>24} {:>16} {:>16}", "", "prior", "posterior");
    println!(
        "{:>24} {:>16.10} {:>16.10}",
        "mean length", prior.mean, posterior.mean
    );
    println!(
        "{:>24} {:>16.10} {:>16.10}",
        "second moment",
        prior.second_moment.unwrap(),
        posterior.second_moment.unwrap()
    );
    println!(
        "{:>24} {:>16.10} {:>16.10}",
        "variance",
        prior.variance.unwrap(),
        posterior.variance.unwrap()
    );
    println!(
        "{:>24} {:>16} {:>16}",
        "series terms", prior.diagnostics.series_terms, posterior.diagnostics.series_terms
    );

    // Conditioning on these fairly level observations cuts the uncertainty
    // about the path, so the length variance drops sharply.
    assert!(posterior.variance.unwrap() < prior.variance.unwrap());
}
