//! Stationary covariance kernels and their derivative processes.
//!
//! Each family exposes, besides the kernel `k(tau)` itself, the quantities
//! the arc length formulas need about the derivative process `f'`:
//!
//! * `first_derivative`: `dk/dtau`, used for cross-covariances between
//!   observations and the derivative,
//! * `cross_derivative`: `d^2 k / dt dt' = -k''(tau)`, the covariance
//!   function of `f'`,
//! * `derivative_variance`: its value at `tau = 0`,
//! * `derivative_correlation`: the squared normalised derivative covariance
//!   `(-k''(tau))^2 / (-k''(0))^2`, the correlation of the squared-norm
//!   (gamma) variables entering the second-moment series.
//!
//! [`CoregionalizedKernel`] pairs a scalar kernel with a positive
//! semidefinite mixing matrix `B`, giving a vector-valued process with
//! covariance `B (x) k`. Gram matrices are laid out output-major: row
//! `d * N + i` is output `d` at input `i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Errors from kernel construction and validation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("invalid kernel parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("mixing matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("mixing matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
}

/// Supported stationary kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "se")]
    SquaredExponential,
    #[serde(rename = "m32")]
    Matern32,
    #[serde(rename = "m52")]
    Matern52,
    #[serde(rename = "rq")]
    RationalQuadratic,
}

/// A stationary kernel `k(tau)` with signal variance and length scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Marginal variance `k(0)`.
    pub signal_variance: f64,
    /// Input length scale.
    pub length_scale: f64,
    /// Shape parameter of the rational quadratic family; ignored elsewhere.
    #[serde(default = "default_rq_shape")]
    pub rq_shape: f64,
}

fn default_rq_shape() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn new(
        family: KernelFamily,
        signal_variance: f64,
        length_scale: f64,
        rq_shape: f64,
    ) -> Result<Self, KernelError> {
        let spec = KernelSpec {
            family,
            signal_variance,
            length_scale,
            rq_shape,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn squared_exponential(signal_variance: f64, length_scale: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::SquaredExponential, signal_variance, length_scale, 1.0)
    }

    pub fn matern32(signal_variance: f64, length_scale: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Matern32, signal_variance, length_scale, 1.0)
    }

    pub fn matern52(signal_variance: f64, length_scale: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Matern52, signal_variance, length_scale, 1.0)
    }

    pub fn rational_quadratic(
        signal_variance: f64,
        length_scale: f64,
        rq_shape: f64,
    ) -> Result<Self, KernelError> {
        Self::new(KernelFamily::RationalQuadratic, signal_variance, length_scale, rq_shape)
    }

    /// Checks parameter positivity; deserialized specs must pass through here.
    pub fn validate(&self) -> Result<(), KernelError> {
        let positive = |name: &'static str, v: f64| -> Result<(), KernelError> {
            if !v.is_finite() || v <= 0.0 {
                return Err(KernelError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
            Ok(())
        };
        positive("signal_variance", self.signal_variance)?;
        positive("length_scale", self.length_scale)?;
        if self.family == KernelFamily::RationalQuadratic {
            positive("rq_shape", self.rq_shape)?;
        }
        Ok(())
    }

    /// Kernel value `k(tau)`.
    pub fn eval(&self, tau: f64) -> f64 {
        let sv = self.signal_variance;
        let ell = self.length_scale;
        match self.family {
            KernelFamily::SquaredExponential => {
                let u = tau / ell;
                sv * (-0.5 * u * u).exp()
            }
            KernelFamily::Matern32 => {
                let r = 3.0_f64.sqrt() * tau.abs() / ell;
                sv * (1.0 + r) * (-r).exp()
            }
            KernelFamily::Matern52 => {
                let r = 5.0_f64.sqrt() * tau.abs() / ell;
                sv * (1.0 + r + r * r / 3.0) * (-r).exp()
            }
            KernelFamily::RationalQuadratic => {
                let beta = 1.0 / (2.0 * self.rq_shape * ell * ell);
                sv * (1.0 + beta * tau * tau).powf(-self.rq_shape)
            }
        }
    }

    /// Derivative `dk/dtau`; odd in `tau`.
    pub fn first_derivative(&self, tau: f64) -> f64 {
        let sv = self.signal_variance;
        let ell = self.length_scale;
        match self.family {
            KernelFamily::SquaredExponential => {
                let u = tau / ell;
                -sv * tau / (ell * ell) * (-0.5 * u * u).exp()
            }
            KernelFamily::Matern32 => {
                let c = 3.0_f64.sqrt() / ell;
                -sv * c * c * tau * (-c * tau.abs()).exp()
            }
            KernelFamily::Matern52 => {
                let c = 5.0_f64.sqrt() / ell;
                -sv * (c * c * tau / 3.0) * (1.0 + c * tau.abs()) * (-c * tau.abs()).exp()
            }
            KernelFamily::RationalQuadratic => {
                let beta = 1.0 / (2.0 * self.rq_shape * ell * ell);
                -sv / (ell * ell) * tau * (1.0 + beta * tau * tau).powf(-self.rq_shape - 1.0)
            }
        }
    }

    /// Covariance of the derivative process,
    /// `d^2 k(t, t') / dt dt' = -k''(tau)` at `tau = t - t'`; even in `tau`.
    pub fn cross_derivative(&self, tau: f64) -> f64 {
        let sv = self.signal_variance;
        let ell = self.length_scale;
        match self.family {
            KernelFamily::SquaredExponential => {
                let u = tau / ell;
                sv / (ell * ell) * (1.0 - u * u) * (-0.5 * u * u).exp()
            }
            KernelFamily::Matern32 => {
                let c = 3.0_f64.sqrt() / ell;
                let r = c * tau.abs();
                sv * c * c * (1.0 - r) * (-r).exp()
            }
            KernelFamily::Matern52 => {
                let c = 5.0_f64.sqrt() / ell;
                let r = c * tau.abs();
                sv * (c * c / 3.0) * (1.0 + r - r * r) * (-r).exp()
            }
            KernelFamily::RationalQuadratic => {
                let alpha = self.rq_shape;
                let beta = 1.0 / (2.0 * alpha * ell * ell);
                let q = 1.0 + beta * tau * tau;
                sv / (ell * ell) * q.powf(-alpha - 2.0) * (1.0 - (2.0 * alpha + 1.0) * beta * tau * tau)
            }
        }
    }

    /// Variance of the derivative process, `-k''(0)`.
    pub fn derivative_variance(&self) -> f64 {
        let sv = self.signal_variance;
        let ell2 = self.length_scale * self.length_scale;
        match self.family {
            KernelFamily::SquaredExponential => sv / ell2,
            KernelFamily::Matern32 => 3.0 * sv / ell2,
            KernelFamily::Matern52 => 5.0 * sv / (3.0 * ell2),
            // Independent of the shape parameter.
            KernelFamily::RationalQuadratic => sv / ell2,
        }
    }

    /// Squared normalised derivative covariance, in `[0, 1]` with value 1 at
    /// `tau = 0`. This is the correlation of the squared-derivative (gamma)
    /// variables at lag `tau`. Normalised by `cross_derivative(0)` rather
    /// than the closed-form variance so the value at lag 0 is exactly 1.
    pub fn derivative_correlation(&self, tau: f64) -> f64 {
        let r = self.cross_derivative(tau) / self.cross_derivative(0.0);
        (r * r).min(1.0)
    }
}

/// A vector-valued kernel `B (x) k` built from a scalar kernel and a
/// symmetric positive semidefinite mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoregionalizedKernel {
    scalar: KernelSpec,
    mixing: DMatrix<f64>,
}

impl CoregionalizedKernel {
    /// Validates symmetry and positive semidefiniteness of the mixing matrix.
    pub fn new(scalar: KernelSpec, mixing: DMatrix<f64>) -> Result<Self, KernelError> {
        scalar.validate()?;
        if mixing.nrows() == 0 || mixing.nrows() != mixing.ncols() {
            return Err(KernelError::InvalidParameter {
                name: "mixing",
                reason: format!("must be square and nonempty, got {}x{}", mixing.nrows(), mixing.ncols()),
            });
        }
        let scale = mixing.amax().max(1.0);
        let max_asymmetry = (&mixing - mixing.transpose()).amax();
        if max_asymmetry > 1e-12 * scale {
            return Err(KernelError::NotSymmetric { max_asymmetry });
        }
        let sym = 0.5 * (&mixing + mixing.transpose());
        let eigenvalues = sym.clone().symmetric_eigen().eigenvalues;
        let min_eigenvalue = eigenvalues.min();
        if min_eigenvalue < -1e-10 * scale {
            return Err(KernelError::NotPositiveSemidefinite { min_eigenvalue });
        }
        Ok(CoregionalizedKernel {
            scalar,
            mixing: sym,
        })
    }

    /// Single-output wrapper with `B = [1]`.
    pub fn scalar_only(scalar: KernelSpec) -> Result<Self, KernelError> {
        Self::new(scalar, DMatrix::identity(1, 1))
    }

    pub fn scalar(&self) -> &KernelSpec {
        &self.scalar
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    pub fn output_dim(&self) -> usize {
        self.mixing.nrows()
    }

    /// Covariance matrix of the derivative process at lag 0,
    /// `B * derivative_variance`.
    pub fn derivative_covariance(&self) -> DMatrix<f64> {
        &self.mixing * self.scalar.derivative_variance()
    }

    /// Dense Gram matrix of `B (x) k` over the given inputs, output-major:
    /// entry `(d N + i, e N + j)` is `B[d, e] k(t_i - t_j)`.
    pub fn vector_gram(&self, inputs: &[f64]) -> DMatrix<f64> {
        let n = inputs.len();
        let d = self.output_dim();
        let mut scalar_gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                scalar_gram[(i, j)] = self.scalar.eval(inputs[i] - inputs[j]);
            }
        }
        let mut gram = DMatrix::zeros(n * d, n * d);
        for od in 0..d {
            for oe in 0..d {
                let b = self.mixing[(od, oe)];
                for i in 0..n {
                    for j in 0..n {
                        gram[(od * n + i, oe * n + j)] = b * scalar_gram[(i, j)];
                    }
                }
            }
        }
        gram
    }
}

/// Eigenvalues of a symmetric matrix, ascending. Shared helper for PSD checks.
pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = m.clone().symmetric_eigen().eigenvalues;
    ev.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}
