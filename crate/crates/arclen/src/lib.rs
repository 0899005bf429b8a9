//! Arc length statistics of Gaussian process paths.
//!
//! A zero-mean Gaussian process `f` on an interval `[a, b]` induces a random
//! arc length: the graph length `∫ √(1 + f'(t)²) dt` for a scalar process, or
//! the trajectory length `∫ |f'(t)| dt` for a vector-valued process. Both are
//! functionals of the derivative process `f'`, which is again Gaussian with
//! covariance `∂²k/∂t∂t'`.
//!
//! This crate computes moments of that arc length without sampling:
//!
//! * exact scalar-case mean via a confluent hypergeometric (or equivalently
//!   modified-Bessel) closed form,
//! * vector-case mean and second moment by matching the squared derivative
//!   norm to a gamma distribution and reading `|f'|` off as Nakagami,
//! * posterior variants for processes conditioned on noisy observations,
//! * Monte Carlo estimators over sampled paths for validation.
//!
//! The modules mirror that pipeline: [`specfun`] holds the scalar special
//! functions, [`quadrature`] the Gauss-Legendre rules, [`kernels`] covariance
//! families and their derivative forms, [`gp`] posterior prediction and path
//! sampling, [`integrand_dist`] the distributions of the pointwise integrands,
//! [`arclength`] the moment formulas, [`mc_oracle`] the sampling estimators,
//! and [`cli`] the command line front end.

pub mod arclength;
pub mod cli;
pub mod gp;
pub mod integrand_dist;
pub mod kernels;
pub mod mc_oracle;
pub mod quadrature;
pub mod specfun;
