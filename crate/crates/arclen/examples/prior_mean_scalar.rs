//! Closed-form mean arc length of a scalar Gaussian process graph.
//!
//! The graph length of one draw is `∫ √(1 + f'(t)²) dt`. Its expectation has
//! two equivalent closed forms, one through Tricomi's confluent
//! hypergeometric `U` and one through modified Bessel functions; this prints
//! both across kernel families and signal variances to show they agree.
//!
//! Run with `cargo run --example prior_mean_scalar`.

use arclen::arclength::{prior_mean_1d, Interval, MeanForm};
use arclen::kernels::{KernelFamily, KernelSpec};

fn main() {
    let interval = Interval::new(0.0, 1.0).unwrap();
    let families = [
        ("se", KernelFamily::SquaredExponential),
        ("m32", KernelFamily::Matern32),
        ("m52", KernelFamily::Matern52),
        ("rq", KernelFamily::RationalQuadratic),
    ];

    println!("mean graph length on [0, 1], length scale 1");
    println!("{:>6} {:>14} {:>18} {:>18}", "kernel", "signal var", "U form", "Bessel form");
    for (name, family) in families {
        for signal_variance in [0.25, 1.0, 4.0] {
            let kernel = KernelSpec::new(family, signal_variance, 1.0, 1.0).unwrap();
            let u = prior_mean_1d(&kernel, interval, MeanForm::UForm).unwrap();
            let b = prior_mean_1d(&kernel, interval, MeanForm::BesselForm).unwrap();
            println!("{name:>6} {signal_variance:>14.2} {u:>18.12} {b:>18.12}");
            assert!((u - b).abs() < 1e-10 * b);
        }
    }

    // A nearly flat process has arc length close to the interval length; a
    // steep one is dominated by the vertical motion of the path.
    println!();
    println!("limits (se kernel):");
    for signal_variance in [1e-8, 1.0, 1e4] {
        let kernel =
            KernelSpec::new(KernelFamily::SquaredExponential, signal_variance, 1.0, 1.0).unwrap();
        let mean = prior_mean_1d(&kernel, interval, MeanForm::BesselForm).unwrap();
        println!("  signal var {signal_variance:>8.1e}: mean length {mean:>12.6}");
    }
}
