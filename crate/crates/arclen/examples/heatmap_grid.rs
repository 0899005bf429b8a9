//! Log mean arc length across kernel output and input scales.
//!
//! The expected graph length grows with the output scale `lambda` (signal
//! standard deviation) and shrinks with the input length scale `sigma`,
//! because the typical slope magnitude is proportional to `lambda / sigma`
//! for the squared exponential family. This prints a small grid of
//! `ln E[length]` with `lambda` down the rows and `sigma` across the
//! columns; every column increases downward and every row decreases to the
//! right.
//!
//! Run with `cargo run --example heatmap_grid`.

use arclen::arclength::{prior_mean_1d, Interval, MeanForm};
use arclen::kernels::{KernelFamily, KernelSpec};

fn main() {
    let interval = Interval::new(0.0, 1.0).unwrap();
    let lambdas: Vec<f64> = (0..8).map(|i| 0.25 * 2f64.powf(i as f64 / 2.0)).collect();
    let sigmas: Vec<f64> = (0..8).map(|i| 0.25 * 2f64.powf(i as f64 / 2.0)).collect();

    print!("{:>10}", "ln E[s]");
    for sigma in &sigmas {
        print!(" {sigma:>8.3}");
    }
    println!("  <- sigma");
    for lambda in &lambdas {
        print!("{lambda:>10.3}");
        for sigma in &sigmas {
            let kernel = KernelSpec::new(
                KernelFamily::SquaredExponential,
                lambda * lambda,
                *sigma,
                1.0,
            )
            .unwrap();
            let mean = prior_mean_1d(&kernel, interval, MeanForm::BesselForm).unwrap();
            print!(" {:>8.4}", mean.ln());
        }
        println!();
    }
    println!("^ lambda");
}
