//! Distribution of the pointwise length integrand `sqrt(1 + X^2)`.
//!
//! At each time the graph-length integrand is `sqrt(1 + f'(t)^2)` with
//! `f'(t)` normal. This example prints its density and distribution
//! function, confirms the density integrates to one, and compares the series
//! mean against a plain numerical integral of `y * pdf(y)`.
//!
//! Run with `cargo run --example integrand_distribution`.

use arclen::integrand_dist::Integrand1D;
use arclen::quadrature::{integrate_1d, QuadratureSpec};
use arclen::specfun::SeriesPolicy;

fn main() {
    let policy = SeriesPolicy::default();
    let quad = QuadratureSpec {
        nodes_per_axis: 256,
        ..QuadratureSpec::default()
    };

    for (mu, sigma) in [(0.0, 1.0), (1.5, 0.5), (0.3, 2.0)] {
        let dist = Integrand1D::new(mu, sigma).unwrap();
        println!("slope ~ N({mu}, {sigma}^2):");
        println!("  {:>8} {:>12} {:>12}", "y", "pdf", "cdf");
        for y in [1.0, 1.1, 1.5, 2.0, 3.0, 5.0] {
            println!("  {:>8.2} {:>12.6} {:>12.6}", y, dist.pdf(y), dist.cdf(y));
        }

        // The density has an integrable 1/sqrt(y - 1) singularity at the
        // left endpoint, so integrate in w with y = 1 + w^2; the Jacobian
        // 2w cancels the singularity and the rule converges fast again.
        let w_max = (mu.abs() + 10.0 * sigma + 1.0).sqrt();
        let mass = integrate_1d(|w| dist.pdf(1.0 + w * w) * 2.0 * w, 0.0, w_max, &quad);
        let mean_series = dist.mean(&policy).unwrap();
        let mean_quad = integrate_1d(
            |w| {
                let y = 1.0 + w * w;
                y * dist.pdf(y) * 2.0 * w
            },
            0.0,
            w_max,
            &quad,
        );
        println!("  total mass (quadrature)  = {:.12}", mass.value);
        println!(
            "  mean (series, {:>2} terms) = {:.12}",
            mean_series.terms_used, mean_series.value
        );
        println!("  mean (quadrature)        = {:.12}", mean_quad.value);
        assert!((mass.value - 1.0).abs() < 1e-8);
        assert!((mean_series.value - mean_quad.value).abs() < 1e-8);
        println!();
    }
}
