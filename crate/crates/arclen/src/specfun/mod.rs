//! Scalar special functions used by the arc length formulas.
//!
//! Everything here is self-contained: gamma and log-gamma via a Lanczos
//! approximation, the standard normal CDF via regularized incomplete gamma,
//! modified Bessel functions `K_0`/`K_1` by a series / continued-fraction
//! split, Tricomi's confluent hypergeometric `U(a, b, z)` by quadrature of its
//! integral representation, and the Gauss hypergeometric series `2F1`.
//!
//! `U` follows the conventional normalisation
//! `U(a, b, z) = 1/Gamma(a) * int_0^inf exp(-z t) t^(a-1) (1+t)^(b-a-1) dt`,
//! including the `1/Gamma(a)` prefactor; this is the normalisation under which
//! the identity with the Bessel-form arc length mean holds (see
//! `arclength::prior_mean_1d`).

mod bessel;
mod gamma;
mod hyp2f1;
mod hyper_u;
mod normal;

pub use bessel::{bessel_k0, bessel_k0_scaled, bessel_k1, bessel_k1_scaled};
pub use gamma::{gamma_fn, gamma_half_ratio, ln_gamma, pochhammer};
pub use hyp2f1::hyp_2f1_series;
pub(crate) use hyp2f1::hyp_2f1_series_with;
pub use hyper_u::hyp_u;
pub(crate) use hyper_u::hyp_u_ln;
pub use normal::std_normal_cdf;

/// Errors from special function evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecFunError {
    /// An argument lies outside the supported domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// The result does not fit in an `f64`.
    #[error("overflow: {0}")]
    Overflow(String),
    /// Adaptive quadrature stalled before reaching its internal tolerance.
    #[error("quadrature did not converge after {nodes} nodes (residual {residual:e})")]
    QuadratureNonConvergence { nodes: usize, residual: f64 },
}

/// Value of a truncated series together with convergence bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesResult {
    /// Partial sum at the point the series stopped.
    pub value: f64,
    /// Number of terms accumulated (at least 1).
    pub terms_used: usize,
    /// True if the last term fell below the relative tolerance before the
    /// term cap was reached.
    pub converged: bool,
}

/// Stopping rule for truncated series.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesPolicy {
    /// Stop once a term is below this fraction of the running sum.
    pub rel_tol: f64,
    /// Hard cap on the number of terms.
    pub max_terms: usize,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        SeriesPolicy {
            rel_tol: 1e-12,
            max_terms: 500,
        }
    }
}
